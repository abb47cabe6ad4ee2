// Acceptance gate: ten pass/fail checks covering gradient fidelity,
// permutation invariance, normalization-unit degeneracies, metric oracles,
// overfit convergence, ablation direction, cross-vertex-count transfer,
// noise robustness, optimizer arithmetic, and checkpoint persistence.
// Prints one line per criterion and exits nonzero if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dsffnet/cli.hpp"
#include "dsffnet/errors.hpp"
#include "dsffnet/gradcheck.hpp"
#include "dsffnet/losses.hpp"
#include "dsffnet/metrics.hpp"
#include "dsffnet/mesh.hpp"
#include "dsffnet/model.hpp"
#include "dsffnet/rng.hpp"
#include "dsffnet/synthetic.hpp"
#include "dsffnet/tensor.hpp"
#include "dsffnet/training.hpp"

using namespace dsffnet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d. %s — %s\n", ok ? "PASS" : "FAIL", idx, name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// run the command-line driver with captured streams
int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    return run_cli(std::move(args), out, err);
}

ModelWidths small_widths() {
    ModelWidths w;
    w.enc = {3, 8, 16, 32};
    w.dec = {3, 8, 16, 8, 3};
    return w;
}

TensorPtr mesh_tensor(const Mesh& m) {
    return make_tensor({3, m.vertex_count()}, mesh_to_columns(m));
}

// exhaustive minimum over all N! matchings, summed in ascending row order so
// a coincident optimum is bitwise equal to the solver's recomputation
double emd_bruteforce(const Points& a, const Points& b) {
    const std::size_t n = a.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (int d = 0; d < 3; ++d) {
                const double diff = a[i][d] - b[perm[i]][d];
                sq += diff * diff;
            }
            s += std::sqrt(sq);
        }
        s /= static_cast<double>(n);
        if (s < best) best = s;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Points random_points(std::size_t n, SplitMix64& rng) {
    Points p(n);
    for (auto& q : p)
        for (int d = 0; d < 3; ++d) q[d] = rng.gaussian();
    return p;
}

// artifacts shared between the convergence, ablation and noise criteria
struct Bench {
    fs::path dir;
    bool trained = false;
    double seen_pmd = std::numeric_limits<double>::quiet_NaN();
    Dataset ds;

    fs::path data_dir() const { return dir / "ds"; }
    fs::path ckpt(const std::string& tag) const { return dir / (tag + ".ckpt"); }
};

// the benchmark model of criterion 5; criterion 6 reuses it as its seed-0
// full-variant run
constexpr const char* kBenchTag = "full_s0";

// --- 1. gradient fidelity --------------------------------------------------

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const int small = cli({"gradcheck", "--vertices", "16", "--seed", "3"});
    const int full = cli({"gradcheck", "--vertices", "16", "--seed", "3", "--enc-widths",
                          "3,64,128,1024", "--dec-widths", "3,64,128,64,3", "--max-per-group",
                          "3"});
    const double dt = seconds_since(t0);
    const bool ok = small == 0 && full == 0 && dt < 120.0;
    report(1, "gradient fidelity", ok,
           "32-code exhaustive exit " + std::to_string(small) + ", 1024-code sampled exit " +
               std::to_string(full) + ", tol 1e-4, " + fmt(dt) + "s (budget 120s)");
}

// --- 2. permutation invariance ----------------------------------------------

void criterion_permutation() {
    auto params = init_params(small_widths(), 7);
    std::size_t exact = 0;
    const std::size_t trials = 100;
    for (std::size_t i = 0; i < trials; ++i) {
        const std::size_t k = 2 + i % 4;
        const Mesh mesh = normalize_mesh(
            skin(gen_identity(1000 + i, k, 5), gen_pose(2000 + i, k)));
        const Mesh shuffled = shuffle_vertices(mesh, 3000 + i).mesh;
        Tape tape;
        auto code_a = encode_pose(tape, params, mesh_tensor(mesh));
        auto code_b = encode_pose(tape, params, mesh_tensor(shuffled));
        if (code_a->data == code_b->data) ++exact; // bitwise
    }
    report(2, "permutation invariance", exact == trials,
           std::to_string(exact) + "/" + std::to_string(trials) +
               " meshes give bitwise-identical pose codes after vertex shuffle");
}

// --- 3. feature-fusion denormalization degeneracies --------------------------

void criterion_ffadain_degeneracy() {
    SplitMix64 rng(5);
    const std::size_t c = 8, n = 7;
    auto m = init_params(small_widths(), 17);
    const auto& p = m.blocks[1].ffa0; // 8-channel unit
    std::vector<double> hd(c * n);
    for (auto& v : hd) v = rng.gaussian();
    auto h = make_tensor({c, n}, std::move(hd));
    std::vector<double> vd(3 * n);
    for (auto& v : vd) v = rng.gaussian() * 0.5;
    auto v_id = make_tensor({3, n}, std::move(vd));

    Tape tape;
    std::vector<double> sd(3 * 10);
    for (auto& v : sd) v = rng.gaussian() * 0.5;
    auto code = encode_pose(tape, m, make_tensor({3, 10}, std::move(sd)));
    auto f_mix = build_mixed_feature(tape, code, v_id);

    // fused unit with alpha = beta = 1 must match the id-side-only baseline
    p.alpha->data[0] = 1.0;
    p.beta->data[0] = 1.0;
    double worst_a = 0.0;
    {
        Tape t2;
        auto full = ffadain_forward(t2, p, h, f_mix, v_id);
        auto base = spadain_forward(t2, p, h, v_id);
        for (std::size_t i = 0; i < c * n; ++i)
            worst_a = std::max(worst_a, std::fabs(full->data[i] - base->data[i]));
    }

    // zeroed side weights with gamma ≡ 1, delta ≡ 0 must reduce to plain
    // instance normalization
    for (auto* conv : {&p.id_gamma, &p.id_delta, &p.mix_gamma, &p.mix_delta})
        for (auto& v : conv->w->data) v = 0.0;
    for (auto& v : p.id_gamma.b->data) v = 1.0;
    for (auto& v : p.mix_gamma.b->data) v = 1.0;
    for (auto& v : p.id_delta.b->data) v = 0.0;
    for (auto& v : p.mix_delta.b->data) v = 0.0;
    double worst_b = 0.0;
    {
        Tape t2;
        auto out = ffadain_forward(t2, p, h, f_mix, v_id);
        auto plain = t2.instance_norm(h, kNormEps).normalized;
        for (std::size_t i = 0; i < c * n; ++i)
            worst_b = std::max(worst_b, std::fabs(out->data[i] - plain->data[i]));
    }

    const bool ok = worst_a <= 1e-12 && worst_b <= 1e-12;
    report(3, "fusion-unit degeneracies", ok,
           "vs id-side baseline max |Δ| = " + fmt(worst_a) + ", vs plain instance norm max |Δ| = " +
               fmt(worst_b) + " (tol 1e-12)");
}

// --- 4. metric oracles -------------------------------------------------------

void criterion_metric_oracles() {
    SplitMix64 rng(123);
    std::size_t trials = 0, exact = 0;
    for (std::size_t n = 1; n <= 7; ++n) {
        for (int r = 0; r < 30; ++r) {
            Points a = random_points(n, rng);
            Points b = random_points(n, rng);
            if (emd(a, b) == emd_bruteforce(a, b)) ++exact;
            ++trials;
        }
    }

    double worst_hand = 0.0;
    auto probe = [&](double got, double want) {
        worst_hand = std::max(worst_hand, std::fabs(got - want));
    };
    probe(pmd({{1, 0, 0}}, {{0, 0, 0}}), 1.0);
    probe(pmd({{0, 0, 1}, {5, 5, 5}}, {{0, 0, 0}, {5, 5, 5}}), 0.5);
    probe(chamfer({{0, 0, 0}}, {{1, 0, 0}}), 2.0);
    probe(chamfer({{0, 0, 0}}, {{0, 0, 0}, {1, 0, 0}}), 0.5);
    probe(emd({{0, 0, 0}}, {{1, 0, 0}}), 1.0);
    probe(emd({{0, 0, 0}, {1, 0, 0}}, {{3, 0, 0}, {0, 0, 0}}), 1.0);

    const bool ok = exact == trials && trials >= 200 && worst_hand <= 1e-12;
    report(4, "metric oracles", ok,
           "assignment solver == factorial brute force on " + std::to_string(exact) + "/" +
               std::to_string(trials) + " instances (N ≤ 7), hand-value max |Δ| = " +
               fmt(worst_hand));
}

// --- 5. overfit convergence --------------------------------------------------

void criterion_overfit(Bench& bench) {
    const auto t0 = std::chrono::steady_clock::now();
    const int gen = cli({"gen-data", "--out", bench.data_dir().string(), "--identities", "4",
                         "--poses", "8", "--resolution", "7", "--seed", "1", "--unseen-frac",
                         "0.25"});
    if (gen != 0) {
        report(5, "overfit convergence", false, "dataset generation failed");
        return;
    }
    const int tr = cli({"train", "--data", bench.data_dir().string(), "--out",
                        bench.ckpt(kBenchTag).string(), "--preset", "overfit", "--seed", "0"});
    if (tr != 0) {
        report(5, "overfit convergence", false, "training run failed");
        return;
    }
    const double train_s = seconds_since(t0);

    bench.ds = load_dataset(bench.data_dir().string());
    TrainState state = load_checkpoint(bench.ckpt(kBenchTag).string());
    const std::uint64_t steps = state.opt.step_count();
    const EvalStats seen =
        evaluate(state.params, bench.ds, /*seen=*/true, state.config.variant, /*with_emd=*/false);
    bench.trained = true;
    bench.seen_pmd = seen.mean.pmd;

    const bool ok = seen.mean.pmd <= 1e-3 && train_s < 900.0 && steps >= 450 && steps <= 550;
    report(5, "overfit convergence", ok,
           "training PMD " + fmt(seen.mean.pmd) + " (bar 1e-3) after " + std::to_string(steps) +
               " steps, lr 1e-3, batch 8, " + fmt(train_s) + "s (budget 900s)");
}

// --- 6. ablation direction ----------------------------------------------------

double mean_unseen_edge_loss(const TrainState& state, const Dataset& ds) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t idx : ds.split_indices(/*seen=*/false)) {
        const Triple& tr = ds.triples[idx];
        const Mesh pred = transfer(state.params, tr.source, tr.target, state.config.variant);
        const EdgeList edges = extract_edges(tr.gt);
        sum += loss_breakdown(pred, tr.gt, edges, /*lambda=*/0.0).l_edg;
        ++count;
    }
    return sum / static_cast<double>(count);
}

// Directional comparisons on a 24-triple benchmark are noisy at the level of
// a single initialization, so every variant is trained once per seed under
// an identical budget and the matched-seed means are compared.
void criterion_ablation(const Bench& bench) {
    if (!bench.trained) {
        report(6, "ablation direction", false, "skipped: overfit benchmark unavailable");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::string data = bench.data_dir().string();
    const std::array<const char*, 3> seeds = {"0", "1", "2"};
    const std::array<const char*, 4> variants = {"full", "spadain", "no-target-side", "no-edge"};

    std::array<double, 4> pmd_mean = {0, 0, 0, 0};
    std::array<double, 4> edge_mean = {0, 0, 0, 0};
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (const char* seed : seeds) {
            const std::string tag = std::string(variants[v]) + "_s" + seed;
            if (tag != kBenchTag) { // criterion 5 already trained full_s0
                std::vector<std::string> args = {"train",    "--data", data,
                                                 "--out",    bench.ckpt(tag).string(),
                                                 "--preset", "overfit", "--seed", seed};
                if (v > 0) {
                    args.push_back("--ablate");
                    args.push_back(variants[v]);
                }
                if (cli(std::move(args)) != 0) {
                    report(6, "ablation direction", false, "training failed for " + tag);
                    return;
                }
            }
            const TrainState st = load_checkpoint(bench.ckpt(tag).string());
            pmd_mean[v] += evaluate(st.params, bench.ds, /*seen=*/false, st.config.variant,
                                    /*with_emd=*/false)
                               .mean.pmd;
            edge_mean[v] += mean_unseen_edge_loss(st, bench.ds);
        }
        pmd_mean[v] /= static_cast<double>(seeds.size());
        edge_mean[v] /= static_cast<double>(seeds.size());
    }

    const bool ok = pmd_mean[0] < pmd_mean[1] && pmd_mean[0] < pmd_mean[2] &&
                    edge_mean[0] < edge_mean[3];
    report(6, "ablation direction", ok,
           "held-out PMD over matched seeds 0/1/2: full " + fmt(pmd_mean[0]) +
               " < spadain-swap " + fmt(pmd_mean[1]) + " and < no-target-side " +
               fmt(pmd_mean[2]) + "; held-out edge loss " + fmt(edge_mean[0]) + " < " +
               fmt(edge_mean[3]) + " without the edge term (" + fmt(seconds_since(t0)) + "s)");
}

// --- 7. cross-vertex-count transfer -------------------------------------------

void criterion_cross_count() {
    const Mesh small = normalize_mesh(skin(gen_identity(11, 3, 7), gen_pose(12, 3))); // 300
    const Mesh large = normalize_mesh(skin(gen_identity(13, 5, 7), gen_pose(14, 5))); // 500
    auto params = init_params(small_widths(), 21);

    const auto finite = [](const Mesh& m) {
        for (const auto& v : m.vertices)
            for (double x : v)
                if (!std::isfinite(x)) return false;
        return true;
    };

    const Mesh up = transfer(params, small, large);
    const Mesh down = transfer(params, large, small);
    const bool ok = small.vertex_count() == 300 && large.vertex_count() == 500 &&
                    up.vertex_count() == 500 && up.faces == large.faces &&
                    down.vertex_count() == 300 && down.faces == small.faces && finite(up) &&
                    finite(down);
    report(7, "cross-vertex-count transfer", ok,
           "300→500 gives " + std::to_string(up.vertex_count()) + " vertices, 500→300 gives " +
               std::to_string(down.vertex_count()) + ", target face arrays preserved");
}

// --- 8. noise robustness --------------------------------------------------------

void criterion_noise(const Bench& bench) {
    if (!bench.trained) {
        report(8, "noise robustness", false, "skipped: overfit benchmark unavailable");
        return;
    }
    TrainState state = load_checkpoint(bench.ckpt(kBenchTag).string());
    const std::array<double, 3> sigmas = {0.01, 0.03, 0.05};
    std::array<double, 3> drift = {0.0, 0.0, 0.0};
    std::size_t count = 0;
    for (std::size_t idx : bench.ds.split_indices(/*seen=*/true)) {
        const Triple& tr = bench.ds.triples[idx];
        const Mesh clean = transfer(state.params, tr.source, tr.target, state.config.variant);
        for (std::size_t s = 0; s < sigmas.size(); ++s) {
            // one noise seed per triple: the draws are identical across
            // sigmas, so displacement scales with sigma and the
            // monotonicity probe is not noise-dominated
            const Mesh noisy =
                add_vertex_noise(tr.source, sigmas[s], mix_seed(0xA5, tr.meta.index));
            const Mesh pred = transfer(state.params, noisy, tr.target, state.config.variant);
            drift[s] += pmd(pred.vertices, clean.vertices);
        }
        ++count;
    }
    for (auto& d : drift) d /= static_cast<double>(count);

    const bool finite = std::isfinite(drift[0]) && std::isfinite(drift[1]) &&
                        std::isfinite(drift[2]);
    const bool monotone = drift[0] <= drift[1] && drift[1] <= drift[2];
    const bool bounded = drift[2] <= 50.0 * bench.seen_pmd; // diagnostic bound
    report(8, "noise robustness", finite && monotone && bounded,
           "output drift PMD " + fmt(drift[0]) + " / " + fmt(drift[1]) + " / " + fmt(drift[2]) +
               " at sigma 0.01/0.03/0.05, bound 50× training PMD = " +
               fmt(50.0 * bench.seen_pmd));
}

// --- 9. schedule and optimizer arithmetic ----------------------------------------

void criterion_optimizer() {
    TrainConfig cfg;
    cfg.lr0 = 1e-3;
    cfg.decay_factor = 0.8;
    cfg.decay_every = 8;
    const bool lr_ok = lr_at_epoch(cfg, 0) == 1e-3 && lr_at_epoch(cfg, 8) == 8e-4 &&
                       lr_at_epoch(cfg, 16) == 6.4e-4; // bitwise

    // hand-computed scalar trajectories: p0 = 1, lr = 0.1, gradients
    // (1.0, 0.5, -0.25), betas (0.9, 0.999), eps 1e-8
    const std::array<double, 3> grads = {1.0, 0.5, -0.25};
    const std::array<double, 3> want_plain = {0.900000001, 0.8067820382981611,
                                              0.7504159014963296};
    const std::array<double, 3> want_decay = {0.899000001, 0.8048830382971611,
                                              0.7477120184570325};
    double worst = 0.0;
    for (const bool with_decay : {false, true}) {
        auto p = make_param({1}, {1.0});
        AdamW opt({{with_decay ? "k.W" : "k.b", p}},
                  {0.9, 0.999, 1e-8, with_decay ? 0.01 : 0.0});
        for (std::size_t t = 0; t < 3; ++t) {
            p->zero_grad();
            p->grad[0] = grads[t];
            opt.step(0.1);
            const double want = with_decay ? want_decay[t] : want_plain[t];
            worst = std::max(worst, std::fabs(p->data[0] - want));
        }
    }
    const bool ok = lr_ok && worst <= 1e-12;
    report(9, "schedule and optimizer arithmetic", ok,
           std::string("decayed lr exactly 1e-3/8e-4/6.4e-4 at epochs 0/8/16: ") +
               (lr_ok ? "yes" : "NO") + ", 3-step trajectory max |Δ| = " + fmt(worst) +
               " (tol 1e-12)");
}

// --- 10. persistence ---------------------------------------------------------------

bool params_bitwise_equal(const ModelParams& a, const ModelParams& b) {
    const auto na = a.named(), nb = b.named();
    if (na.size() != nb.size()) return false;
    for (std::size_t i = 0; i < na.size(); ++i)
        if (na[i].first != nb[i].first || na[i].second->data != nb[i].second->data) return false;
    return true;
}

void criterion_persistence(const fs::path& dir) {
    const Dataset ds = make_dataset(2, 2, 9, /*resolution=*/5, /*unseen_frac=*/0.5, 2);
    TrainConfig cfg;
    cfg.widths = small_widths();
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 42;

    // uninterrupted 3-epoch run
    TrainState full = make_train_state(cfg);
    const TrainResult ref = train(full, ds);

    // same run stopped after 2 epochs, checkpointed, reloaded, resumed
    TrainConfig two = cfg;
    two.epochs = 2;
    TrainState part = make_train_state(two);
    train(part, ds);
    const fs::path ckpt = dir / "persist.ckpt";
    save_checkpoint(part, ckpt.string());
    TrainState back = load_checkpoint(ckpt.string());

    const bool round_trip = params_bitwise_equal(part.params, back.params) &&
                            back.opt.step_count() == part.opt.step_count() &&
                            back.epoch == part.epoch;
    bool moments_equal = true;
    for (std::size_t i = 0; i < part.opt.slots().size(); ++i) {
        const auto& s0 = part.opt.slots()[i];
        const auto& s1 = back.opt.slots()[i];
        if (s0.m != s1.m || s0.v != s1.v || s0.name != s1.name) moments_equal = false;
    }

    back.config.epochs = 3;
    const TrainResult res = train(back, ds);
    const bool row_match = res.log.size() == 1 && ref.log.size() == 3 &&
                           log_csv_row(res.log[0]) == log_csv_row(ref.log[2]);
    const bool end_match = params_bitwise_equal(full.params, back.params);

    const bool ok = round_trip && moments_equal && row_match && end_match;
    report(10, "persistence", ok,
           std::string("checkpoint round-trips arrays bitwise: ") +
               (round_trip && moments_equal ? "yes" : "NO") +
               ", resumed epoch-3 log row identical to uninterrupted run: " +
               (row_match ? "yes" : "NO") + ", final parameters bitwise equal: " +
               (end_match ? "yes" : "NO"));
}

} // namespace

int main(int argc, char** argv) {
    // optional arguments select a subset of criteria by number (dev aid);
    // no arguments runs the full gate
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    const auto wanted = [&](int idx) {
        return only.empty() || std::find(only.begin(), only.end(), idx) != only.end();
    };

    const auto t0 = std::chrono::steady_clock::now();
    fs::path dir = fs::temp_directory_path() / "dsffnet_acceptance";
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir);

    Bench bench;
    bench.dir = dir;

    try {
        if (wanted(1)) criterion_gradients();
        if (wanted(2)) criterion_permutation();
        if (wanted(3)) criterion_ffadain_degeneracy();
        if (wanted(4)) criterion_metric_oracles();
        if (wanted(5)) criterion_overfit(bench);
        if (wanted(6)) criterion_ablation(bench);
        if (wanted(7)) criterion_cross_count();
        if (wanted(8)) criterion_noise(bench);
        if (wanted(9)) criterion_optimizer();
        if (wanted(10)) criterion_persistence(dir);
    } catch (const std::exception& e) {
        std::printf("[FAIL] unhandled exception: %s\n", e.what());
        ++g_failures;
    }

    fs::remove_all(dir, ec);
    const std::size_t ran = only.empty() ? 10 : only.size();
    if (g_failures == 0)
        std::printf("all %zu criteria passed (%.1fs)\n", ran, seconds_since(t0));
    else
        std::printf("%d criteria FAILED (%.1fs)\n", g_failures, seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
