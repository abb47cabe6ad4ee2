#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsffnet/errors.hpp"
#include "dsffnet/training.hpp"

using namespace dsffnet;

namespace {

ModelWidths small_widths() {
    ModelWidths w;
    w.enc = {3, 6, 10, 16};
    w.dec = {3, 8, 12, 8, 3};
    return w;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.widths = small_widths();
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 7;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("learning rate decays by steps, exactly") {
    TrainConfig cfg; // defaults: lr0 1e-3, ×0.8 every 8 epochs
    for (std::size_t e = 0; e < 8; ++e) CHECK(lr_at_epoch(cfg, e) == 1e-3);
    for (std::size_t e = 8; e < 16; ++e) CHECK(lr_at_epoch(cfg, e) == 8e-4);
    for (std::size_t e = 16; e < 24; ++e) CHECK(lr_at_epoch(cfg, e) == 6.4e-4);

    double prev = lr_at_epoch(cfg, 0);
    for (std::size_t e = 1; e < 100; ++e) {
        const double cur = lr_at_epoch(cfg, e);
        CHECK(cur <= prev);
        prev = cur;
    }

    cfg.decay_every = 3;
    cfg.decay_factor = 0.5;
    CHECK(lr_at_epoch(cfg, 2) == 1e-3);
    CHECK(lr_at_epoch(cfg, 3) == 5e-4);
    CHECK(lr_at_epoch(cfg, 6) == 2.5e-4);
}

TEST_CASE("weight decay applies to conv kernels only") {
    CHECK(wants_weight_decay("enc.0.W"));
    CHECK(wants_weight_decay("out.W"));
    CHECK(wants_weight_decay("dec.2.skip.W"));
    CHECK_FALSE(wants_weight_decay("enc.0.b"));
    CHECK_FALSE(wants_weight_decay("dec.1.ffa.0.alpha"));
    CHECK_FALSE(wants_weight_decay("dec.0.ffa.1.beta"));
    CHECK_FALSE(wants_weight_decay("W")); // bare name is not a kernel

    auto params = init_params(small_widths(), 1);
    TrainConfig cfg;
    cfg.widths = small_widths();
    AdamW opt = make_optimizer(params, cfg);
    CHECK(opt.slots().size() == params.named().size());
    for (const auto& s : opt.slots()) CHECK(s.decay == wants_weight_decay(s.name));
}

TEST_CASE("adamw follows the hand-computed scalar trajectory") {
    // gradient sequence 1, 0.5, -0.25 starting from p=1 with lr=0.1;
    // reference values worked out step by step from the update rule
    const double grads[3] = {1.0, 0.5, -0.25};

    SUBCASE("without decay") {
        auto p = make_param({1}, {1.0});
        AdamW::Hyper h;
        h.weight_decay = 0.0;
        AdamW opt({{"w", p}}, h);
        const double expect[3] = {0.900000001, 0.8067820382981611, 0.7504159014963296};
        for (int t = 0; t < 3; ++t) {
            p->grad = {grads[t]};
            opt.step(0.1);
            CHECK(std::fabs(p->data[0] - expect[t]) <= 1e-12);
        }
        CHECK(opt.step_count() == 3);
    }

    SUBCASE("with decoupled decay 0.01") {
        auto p = make_param({1}, {1.0});
        AdamW::Hyper h;
        h.weight_decay = 0.01;
        AdamW opt({{"w.W", p}}, h);
        const double expect[3] = {0.899000001, 0.8048830382971611, 0.7477120184570325};
        for (int t = 0; t < 3; ++t) {
            p->grad = {grads[t]};
            opt.step(0.1);
            CHECK(std::fabs(p->data[0] - expect[t]) <= 1e-12);
        }
    }
}

TEST_CASE("adamw degenerate steps") {
    SUBCASE("zero gradient, zero decay: parameter untouched") {
        auto p = make_param({1}, {1.0});
        AdamW::Hyper h;
        h.weight_decay = 0.0;
        AdamW opt({{"w.W", p}}, h);
        p->grad = {0.0};
        opt.step(0.1);
        CHECK(p->data[0] == 1.0);
    }
    SUBCASE("zero gradient, decay 0.01, lr 0.1: pure shrink to 0.999") {
        auto p = make_param({1}, {1.0});
        AdamW::Hyper h;
        h.weight_decay = 0.01;
        AdamW opt({{"w.W", p}}, h);
        p->grad = {0.0};
        opt.step(0.1);
        CHECK(p->data[0] == 0.999);
    }
    SUBCASE("missing gradient buffer counts as zero") {
        auto p = make_param({2}, {1.0, -2.0});
        AdamW::Hyper h;
        h.weight_decay = 0.0;
        AdamW opt({{"w", p}}, h);
        opt.step(0.5);
        CHECK(p->data[0] == 1.0);
        CHECK(p->data[1] == -2.0);
    }
    SUBCASE("first step moves by about lr") {
        auto p = make_param({1}, {1.0});
        AdamW::Hyper h;
        h.weight_decay = 0.0;
        AdamW opt({{"w", p}}, h);
        p->grad = {1.0};
        opt.step(0.1);
        CHECK(std::fabs((1.0 - p->data[0]) - 0.1) <= 1e-8); // m̂=v̂=1 on step one
    }
    SUBCASE("contract violations") {
        auto p = make_param({2}, {1.0, 2.0});
        AdamW::Hyper h;
        AdamW opt({{"w", p}}, h);
        p->grad = {1.0}; // wrong length
        CHECK_THROWS_AS(opt.step(0.1), ContractError);
        p->grad = {1.0, 1.0};
        CHECK_THROWS_AS(opt.step(0.0), ContractError);
        CHECK_THROWS_AS(AdamW({{"null", nullptr}}, h), ContractError);
    }
}

TEST_CASE("checkpoint container round trips rank 0, 1 and 2 entries") {
    const std::string path = "ckpt_container_tmp.bin";
    std::vector<CheckpointEntry> entries;
    entries.push_back({"zeta", {}, {-0.0}});
    entries.push_back({"alpha.W", {2, 2}, {1.0, -2.5, 3.25, 1e-308}});
    entries.push_back({"mid", {3}, {std::nan(""), std::numeric_limits<double>::infinity(), 0.1}});
    write_checkpoint_file(path, entries);

    auto back = read_checkpoint_file(path);
    REQUIRE(back.size() == 3);
    CHECK(back[0].name == "alpha.W"); // sorted by name
    CHECK(back[1].name == "mid");
    CHECK(back[2].name == "zeta");
    CHECK(back[0].shape == std::vector<std::size_t>{2, 2});
    CHECK(back[0].values == std::vector<double>{1.0, -2.5, 3.25, 1e-308});
    CHECK(std::isnan(back[1].values[0]));
    CHECK(std::isinf(back[1].values[1]));
    CHECK(back[1].values[2] == 0.1);
    CHECK(back[2].shape.empty());
    CHECK(back[2].values[0] == 0.0);
    CHECK(std::signbit(back[2].values[0])); // -0.0 survives

    std::vector<CheckpointEntry> dup = {{"a", {}, {1.0}}, {"a", {}, {2.0}}};
    CHECK_THROWS_AS(write_checkpoint_file(path, dup), ContractError);
    std::vector<CheckpointEntry> bad_shape = {{"a", {3}, {1.0}}};
    CHECK_THROWS_AS(write_checkpoint_file(path, bad_shape), ContractError);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint container rejects damage") {
    const std::string path = "ckpt_damage_tmp.bin";
    std::vector<CheckpointEntry> entries = {{"w", {2}, {1.5, -2.5}}};
    write_checkpoint_file(path, entries);
    const std::string good = slurp(path);

    SUBCASE("bad magic, offset 0") {
        std::string bad = good;
        bad[0] = 'X';
        spit(path, bad);
        try {
            read_checkpoint_file(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 0);
        }
    }
    SUBCASE("unknown version names the expected one") {
        std::string bad = good;
        bad[4] = 2;
        spit(path, bad);
        try {
            read_checkpoint_file(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("expected 1") != std::string::npos);
        }
    }
    SUBCASE("truncation at any point") {
        for (std::size_t keep : {3u, 5u, 9u, 12u, 20u}) {
            REQUIRE(keep < good.size());
            spit(path, good.substr(0, keep));
            CHECK_THROWS_AS(read_checkpoint_file(path), FormatError);
        }
    }
    SUBCASE("trailing bytes") {
        spit(path, good + "x");
        CHECK_THROWS_AS(read_checkpoint_file(path), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_checkpoint_file("no_such_ckpt.bin"), IoError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("train state survives a checkpoint round trip bitwise") {
    const std::string path = "ckpt_state_tmp.bin";
    TrainConfig cfg = small_config();
    cfg.seed = 0x123456789abcdef0ull; // exercises the split seed encoding
    cfg.variant = DecoderVariant::kSpadainFirst;
    cfg.lambda = 2.5e-4;
    cfg.epochs = 17;
    TrainState a = make_train_state(cfg);

    // stir in nonzero optimizer state and gradients
    for (auto& s : a.opt.slots()) {
        s.param->zero_grad();
        for (std::size_t i = 0; i < s.param->size(); ++i)
            s.param->grad[i] = 0.01 * static_cast<double>(i + 1);
    }
    a.opt.step(1e-3);
    a.opt.step(1e-3);
    a.epoch = 5;

    save_checkpoint(a, path);
    TrainState b = load_checkpoint(path);

    CHECK(b.epoch == 5);
    CHECK(b.opt.step_count() == 2);
    CHECK(b.config.seed == cfg.seed);
    CHECK(b.config.variant == DecoderVariant::kSpadainFirst);
    CHECK(b.config.lambda == 2.5e-4);
    CHECK(b.config.epochs == 17);
    CHECK(b.config.widths.enc == cfg.widths.enc);
    CHECK(b.config.widths.dec == cfg.widths.dec);

    auto na = a.params.named();
    auto nb = b.params.named();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(na[i].second->data == nb[i].second->data);
        CHECK(na[i].second->shape == nb[i].second->shape);
    }
    REQUIRE(a.opt.slots().size() == b.opt.slots().size());
    for (std::size_t i = 0; i < a.opt.slots().size(); ++i) {
        CHECK(a.opt.slots()[i].m == b.opt.slots()[i].m);
        CHECK(a.opt.slots()[i].v == b.opt.slots()[i].v);
        CHECK(a.opt.slots()[i].decay == b.opt.slots()[i].decay);
    }
    std::filesystem::remove(path);
}

TEST_CASE("config validation") {
    TrainConfig cfg = small_config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(make_train_state(cfg), ConfigError);
    cfg = small_config();
    cfg.decay_factor = 0.0;
    CHECK_THROWS_AS(make_train_state(cfg), ConfigError);
    cfg = small_config();
    cfg.lr0 = -1e-3;
    CHECK_THROWS_AS(make_train_state(cfg), ConfigError);
    cfg = small_config();
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(make_train_state(cfg), ConfigError);
    cfg = small_config();
    cfg.widths.enc = {3, 5}; // too short
    CHECK_THROWS_AS(make_train_state(cfg), ConfigError);
}

TEST_CASE("training is deterministic and logs one row per epoch") {
    auto ds = make_dataset(2, 3, 11, 4, 0.34, 3);
    TrainConfig cfg = small_config();

    TrainState s1 = make_train_state(cfg);
    TrainState s2 = make_train_state(cfg);
    TrainResult r1 = train(s1, ds);
    TrainResult r2 = train(s2, ds);

    REQUIRE(r1.log.size() == cfg.epochs);
    REQUIRE(r2.log.size() == cfg.epochs);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        CHECK(log_csv_row(r1.log[e]) == log_csv_row(r2.log[e]));
        CHECK(r1.log[e].epoch == e);
        CHECK(r1.log[e].lr == lr_at_epoch(cfg, e));
        CHECK(std::isfinite(r1.log[e].train_loss));
        CHECK(std::isfinite(r1.log[e].val_pmd));
        CHECK(std::isfinite(r1.log[e].val_cd));
    }
    CHECK(log_csv_header() == "epoch,lr,train_loss,val_pmd,val_cd");

    // parameters of the two runs agree bitwise
    auto n1 = s1.params.named();
    auto n2 = s2.params.named();
    for (std::size_t i = 0; i < n1.size(); ++i) CHECK(n1[i].second->data == n2[i].second->data);
}

TEST_CASE("resume replays the uninterrupted run exactly") {
    const std::string path = "ckpt_resume_tmp.bin";
    auto ds = make_dataset(2, 3, 13, 4, 0.34, 3);

    TrainConfig full_cfg = small_config();
    full_cfg.epochs = 3;
    TrainState full = make_train_state(full_cfg);
    TrainResult full_log = train(full, ds);
    REQUIRE(full_log.log.size() == 3);

    TrainConfig part_cfg = full_cfg;
    part_cfg.epochs = 2;
    TrainState part = make_train_state(part_cfg);
    TrainResult part_log = train(part, ds);
    REQUIRE(part_log.log.size() == 2);
    CHECK(log_csv_row(part_log.log[1]) == log_csv_row(full_log.log[1]));
    save_checkpoint(part, path);

    TrainState resumed = load_checkpoint(path);
    CHECK(resumed.epoch == 2);
    resumed.config.epochs = 3;
    TrainResult tail = train(resumed, ds);
    REQUIRE(tail.log.size() == 1);
    CHECK(log_csv_row(tail.log[0]) == log_csv_row(full_log.log[2]));

    auto nf = full.params.named();
    auto nr = resumed.params.named();
    for (std::size_t i = 0; i < nf.size(); ++i) CHECK(nf[i].second->data == nr[i].second->data);
    std::filesystem::remove(path);
}

TEST_CASE("optimization makes progress on a tiny overfit problem") {
    auto ds = make_dataset(1, 2, 3, 4, 0.0, 2);
    TrainConfig cfg;
    cfg.widths = small_widths();
    cfg.epochs = 30;
    cfg.batch_size = 2;
    cfg.seed = 1;
    TrainState state = make_train_state(cfg);
    TrainResult res = train(state, ds);
    REQUIRE(res.log.size() == 30);
    CHECK(res.log.back().train_loss < 0.8 * res.log.front().train_loss);
    CHECK(res.log.back().val_pmd < res.log.front().val_pmd); // falls back to the train split
}

TEST_CASE("train rejects unusable datasets") {
    TrainConfig cfg = small_config();
    TrainState state = make_train_state(cfg);
    Dataset empty;
    CHECK_THROWS_AS(train(state, empty), ConfigError);

    auto ds = make_dataset(2, 2, 1, 4, 0.0, 3);
    for (auto& m : ds.manifest.triples) m.seen = false; // everything held out
    for (auto& t : ds.triples) t.meta.seen = false;
    TrainState state2 = make_train_state(cfg);
    CHECK_THROWS_AS(train(state2, ds), ConfigError);
}

TEST_CASE("evaluate averages the three metrics over a split") {
    auto ds = make_dataset(2, 3, 21, 4, 0.34, 3);

    // oracle predictor: hand back the ground truth itself
    auto oracle = [](const Triple& tr) { return tr.gt; };
    for (bool seen : {true, false}) {
        EvalStats perfect = evaluate_split(ds, seen, oracle);
        CHECK(perfect.mean.pmd == 0.0);
        CHECK(perfect.mean.cd == 0.0);
        CHECK(perfect.mean.emd == 0.0);
        CHECK(perfect.count == (seen ? 4u : 2u));
    }

    auto params = init_params(small_widths(), 4);
    for (bool seen : {true, false}) {
        EvalStats raw = evaluate(params, ds, seen);
        CHECK(std::isfinite(raw.mean.pmd));
        CHECK(std::isfinite(raw.mean.cd));
        CHECK(std::isfinite(raw.mean.emd));
        CHECK(raw.mean.pmd >= 0.0);
        CHECK(raw.mean.cd >= 0.0);
        CHECK(raw.mean.emd >= 0.0);
    }

    // a dataset with nothing held out has no unseen split to evaluate
    auto all_seen = make_dataset(1, 2, 1, 4, 0.0, 3);
    CHECK_THROWS_AS(evaluate_split(all_seen, false, oracle), ContractError);
}
