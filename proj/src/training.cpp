#include "dsffnet/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "dsffnet/errors.hpp"
#include "dsffnet/losses.hpp"
#include "dsffnet/rng.hpp"

namespace dsffnet {

void TrainConfig::validate() const {
    widths.validate();
    if (!(lr0 > 0)) throw ConfigError("config: lr0 must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
        throw ConfigError("config: decay_factor must lie in (0, 1]");
    if (decay_every < 1) throw ConfigError("config: decay_every must be at least 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
    if (!(lambda >= 0)) throw ConfigError("config: lambda must be nonnegative");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        throw ConfigError("config: betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("config: adam_eps must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("config: weight_decay must be nonnegative");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr0;
    for (std::size_t e = cfg.decay_every; e <= epoch; e += cfg.decay_every) lr *= cfg.decay_factor;
    return lr;
}

bool wants_weight_decay(const std::string& param_name) {
    return param_name.ends_with(".W");
}

AdamW::AdamW(std::vector<std::pair<std::string, TensorPtr>> params, const Hyper& hyper)
    : hyper_(hyper) {
    slots_.reserve(params.size());
    for (auto& [name, p] : params) {
        if (!p) throw ContractError("adamw: null parameter '" + name + "'");
        Slot s;
        s.name = name;
        s.param = p;
        s.m.assign(p->size(), 0.0);
        s.v.assign(p->size(), 0.0);
        s.decay = wants_weight_decay(name);
        slots_.push_back(std::move(s));
    }
}

void AdamW::step(double lr) {
    if (!(lr > 0)) throw ContractError("adamw: lr must be positive");
    ++step_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (auto& s : slots_) {
        auto& p = *s.param;
        if (!p.grad.empty() && p.grad.size() != p.size())
            throw ContractError("adamw: gradient/parameter size mismatch for '" + s.name + "'");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad.empty() ? 0.0 : p.grad[i];
            s.m[i] = hyper_.beta1 * s.m[i] + (1.0 - hyper_.beta1) * g;
            s.v[i] = hyper_.beta2 * s.v[i] + (1.0 - hyper_.beta2) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + hyper_.eps);
            if (s.decay) upd += hyper_.weight_decay * p.data[i];
            p.data[i] -= lr * upd;
        }
    }
}

AdamW make_optimizer(const ModelParams& params, const TrainConfig& cfg) {
    AdamW::Hyper h;
    h.beta1 = cfg.beta1;
    h.beta2 = cfg.beta2;
    h.eps = cfg.adam_eps;
    h.weight_decay = cfg.weight_decay;
    return AdamW(params.named(), h);
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'F', 'F'};
constexpr unsigned char kVersion = 1;

void put_bytes(std::ostream& out, const unsigned char* b, std::size_t n) {
    out.write(reinterpret_cast<const char*>(b), static_cast<std::streamsize>(n));
}

void put_u16(std::ostream& out, std::uint16_t x) {
    unsigned char b[2] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>(x >> 8)};
    put_bytes(out, b, 2);
}

void put_u32(std::ostream& out, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

void put_u64(std::ostream& out, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

// read cursor that reports the byte offset of whatever failed
struct Reader {
    std::istream& in;
    std::size_t offset = 0;

    void bytes(unsigned char* b, std::size_t n, const char* what) {
        in.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError(std::string("unexpected end of file reading ") + what, offset);
        offset += n;
    }
    std::uint8_t u8(const char* what) {
        unsigned char b;
        bytes(&b, 1, what);
        return b;
    }
    std::uint16_t u16(const char* what) {
        unsigned char b[2];
        bytes(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return x;
    }
    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        bytes(b, 8, what);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return x;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

} // namespace

void write_checkpoint_file(const std::string& path, std::vector<CheckpointEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const CheckpointEntry& a, const CheckpointEntry& b) { return a.name < b.name; });
    for (std::size_t i = 0; i + 1 < entries.size(); ++i)
        if (entries[i].name == entries[i + 1].name)
            throw ContractError("checkpoint: duplicate tensor name '" + entries[i].name + "'");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    put_bytes(out, reinterpret_cast<const unsigned char*>(kMagic), 4);
    const unsigned char ver = kVersion;
    put_bytes(out, &ver, 1);
    if (entries.size() > 0xffffffffu) throw ContractError("checkpoint: too many tensors");
    put_u32(out, static_cast<std::uint32_t>(entries.size()));

    for (const auto& e : entries) {
        if (e.name.size() > 0xffffu)
            throw ContractError("checkpoint: tensor name too long: '" + e.name + "'");
        if (e.shape.size() > 0xffu)
            throw ContractError("checkpoint: rank too high for '" + e.name + "'");
        std::size_t want = 1;
        for (std::size_t d : e.shape) want *= d;
        if (want != e.values.size())
            throw ContractError("checkpoint: shape/value mismatch for '" + e.name + "'");
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        put_bytes(out, reinterpret_cast<const unsigned char*>(e.name.data()), e.name.size());
        const unsigned char rank = static_cast<unsigned char>(e.shape.size());
        put_bytes(out, &rank, 1);
        for (std::size_t d : e.shape) put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : e.values) put_f64(out, v);
    }
    out.flush();
    if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

std::vector<CheckpointEntry> read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    Reader r{in};

    unsigned char magic[4];
    r.bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kMagic))
        throw FormatError("bad magic, not a checkpoint file", 0);
    const std::uint8_t version = r.u8("version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kVersion),
                          4);
    const std::uint32_t count = r.u32("tensor count");

    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        CheckpointEntry e;
        const std::uint16_t name_len = r.u16("name length");
        e.name.resize(name_len);
        if (name_len)
            r.bytes(reinterpret_cast<unsigned char*>(e.name.data()), name_len, "name");
        const std::uint8_t rank = r.u8("rank");
        std::size_t want = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64("dimension");
            if (dim > (1u << 30) || want > (1u << 30))
                throw FormatError("implausible tensor size for '" + e.name + "'", r.offset);
            e.shape.push_back(static_cast<std::size_t>(dim));
            want *= static_cast<std::size_t>(dim);
        }
        e.values.resize(want);
        for (std::size_t i = 0; i < want; ++i) e.values[i] = r.f64("values");
        entries.push_back(std::move(e));
    }
    char extra;
    if (in.read(&extra, 1) && in.gcount() == 1)
        throw FormatError("trailing bytes after last tensor", r.offset);
    return entries;
}

// --- checkpoint <-> train state ---------------------------------------------

namespace {

CheckpointEntry scalar_entry(std::string name, double v) { return {std::move(name), {}, {v}}; }

double need_scalar(const std::vector<CheckpointEntry>& entries, const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) {
            if (e.values.size() != 1)
                throw FormatError("checkpoint entry '" + name + "' is not a scalar");
            return e.values[0];
        }
    throw FormatError("checkpoint is missing entry '" + name + "'");
}

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries,
                                  const std::string& name) {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::vector<std::size_t> need_widths(const std::vector<CheckpointEntry>& entries,
                                     const std::string& name) {
    const CheckpointEntry* e = find_entry(entries, name);
    if (!e) throw FormatError("checkpoint is missing entry '" + name + "'");
    std::vector<std::size_t> out;
    for (double v : e->values) out.push_back(static_cast<std::size_t>(v));
    return out;
}

} // namespace

TrainState make_train_state(const TrainConfig& cfg) {
    cfg.validate();
    ModelParams params = init_params(cfg.widths, cfg.seed);
    AdamW opt = make_optimizer(params, cfg);
    return TrainState{cfg, std::move(params), std::move(opt), 0};
}

void save_checkpoint(const TrainState& state, const std::string& path) {
    std::vector<CheckpointEntry> entries;
    for (const auto& [name, p] : state.params.named())
        entries.push_back({name, p->shape, p->data});
    for (const auto& s : state.opt.slots()) {
        entries.push_back({"opt.m." + s.name, s.param->shape, s.m});
        entries.push_back({"opt.v." + s.name, s.param->shape, s.v});
    }
    entries.push_back(scalar_entry("opt.step", static_cast<double>(state.opt.step_count())));
    entries.push_back(scalar_entry("meta.epoch", static_cast<double>(state.epoch)));

    const TrainConfig& c = state.config;
    entries.push_back(scalar_entry("config.lr0", c.lr0));
    entries.push_back(scalar_entry("config.decay_factor", c.decay_factor));
    entries.push_back(scalar_entry("config.decay_every", static_cast<double>(c.decay_every)));
    entries.push_back(scalar_entry("config.epochs", static_cast<double>(c.epochs)));
    entries.push_back(scalar_entry("config.batch_size", static_cast<double>(c.batch_size)));
    entries.push_back(scalar_entry("config.lambda", c.lambda));
    entries.push_back(scalar_entry("config.beta1", c.beta1));
    entries.push_back(scalar_entry("config.beta2", c.beta2));
    entries.push_back(scalar_entry("config.adam_eps", c.adam_eps));
    entries.push_back(scalar_entry("config.weight_decay", c.weight_decay));
    entries.push_back(scalar_entry("config.seed_lo", static_cast<double>(c.seed & 0xffffffffu)));
    entries.push_back(scalar_entry("config.seed_hi", static_cast<double>(c.seed >> 32)));
    entries.push_back(
        scalar_entry("config.variant", static_cast<double>(static_cast<int>(c.variant))));
    CheckpointEntry enc{"config.enc_widths", {c.widths.enc.size()}, {}};
    for (std::size_t w : c.widths.enc) enc.values.push_back(static_cast<double>(w));
    entries.push_back(std::move(enc));
    CheckpointEntry dec{"config.dec_widths", {c.widths.dec.size()}, {}};
    for (std::size_t w : c.widths.dec) dec.values.push_back(static_cast<double>(w));
    entries.push_back(std::move(dec));

    write_checkpoint_file(path, std::move(entries));
}

TrainState load_checkpoint(const std::string& path) {
    const auto entries = read_checkpoint_file(path);

    TrainConfig cfg;
    cfg.widths.enc = need_widths(entries, "config.enc_widths");
    cfg.widths.dec = need_widths(entries, "config.dec_widths");
    cfg.lr0 = need_scalar(entries, "config.lr0");
    cfg.decay_factor = need_scalar(entries, "config.decay_factor");
    cfg.decay_every = static_cast<std::size_t>(need_scalar(entries, "config.decay_every"));
    cfg.epochs = static_cast<std::size_t>(need_scalar(entries, "config.epochs"));
    cfg.batch_size = static_cast<std::size_t>(need_scalar(entries, "config.batch_size"));
    cfg.lambda = need_scalar(entries, "config.lambda");
    cfg.beta1 = need_scalar(entries, "config.beta1");
    cfg.beta2 = need_scalar(entries, "config.beta2");
    cfg.adam_eps = need_scalar(entries, "config.adam_eps");
    cfg.weight_decay = need_scalar(entries, "config.weight_decay");
    cfg.seed = static_cast<std::uint64_t>(need_scalar(entries, "config.seed_lo")) |
               (static_cast<std::uint64_t>(need_scalar(entries, "config.seed_hi")) << 32);
    const int variant_idx = static_cast<int>(need_scalar(entries, "config.variant"));
    if (variant_idx < 0 || variant_idx > 2)
        throw FormatError("checkpoint names unknown decoder variant index " +
                          std::to_string(variant_idx));
    cfg.variant = static_cast<DecoderVariant>(variant_idx);
    cfg.validate();

    TrainState state = make_train_state(cfg);
    for (const auto& [name, p] : state.params.named()) {
        const CheckpointEntry* e = find_entry(entries, name);
        if (!e) throw FormatError("checkpoint is missing parameter '" + name + "'");
        if (e->values.size() != p->size())
            throw FormatError("checkpoint parameter '" + name + "' has wrong size");
        p->data = e->values;
    }
    for (auto& s : state.opt.slots()) {
        const CheckpointEntry* em = find_entry(entries, "opt.m." + s.name);
        const CheckpointEntry* ev = find_entry(entries, "opt.v." + s.name);
        if (!em || !ev)
            throw FormatError("checkpoint is missing optimizer state for '" + s.name + "'");
        if (em->values.size() != s.m.size() || ev->values.size() != s.v.size())
            throw FormatError("checkpoint optimizer state for '" + s.name + "' has wrong size");
        s.m = em->values;
        s.v = ev->values;
    }
    state.opt.set_step_count(static_cast<std::uint64_t>(need_scalar(entries, "opt.step")));
    state.epoch = static_cast<std::size_t>(need_scalar(entries, "meta.epoch"));
    return state;
}

// --- training loop ------------------------------------------------------------

std::string log_csv_header() { return "epoch,lr,train_loss,val_pmd,val_cd"; }

std::string log_csv_row(const EpochLog& row) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", row.epoch, row.lr,
                  row.train_loss, row.val_pmd, row.val_cd);
    return buf;
}

TrainResult train(TrainState& state, const Dataset& ds, std::ostream* progress) {
    const TrainConfig& cfg = state.config;
    cfg.validate();
    if (ds.triples.empty()) throw ConfigError("train: dataset is empty");
    const auto train_idx = ds.split_indices(true);
    if (train_idx.empty()) throw ConfigError("train: every pose is held out, nothing to train on");
    auto val_idx = ds.split_indices(false);
    if (val_idx.empty()) val_idx = train_idx;

    // supervision data reused across epochs (edges and gt lengths are fixed)
    struct Supervision {
        EdgeList edges;
        std::vector<double> gt_lengths;
        TensorPtr src, tgt, gt;
    };
    std::vector<Supervision> sup(ds.triples.size());
    for (std::size_t i : train_idx) {
        const Triple& tr = ds.triples[i];
        Supervision& s = sup[i];
        s.edges = extract_edges(tr.gt);
        s.gt_lengths = edge_lengths_of(tr.gt, s.edges);
        s.src = make_tensor({3, tr.source.vertex_count()}, mesh_to_columns(tr.source));
        s.tgt = make_tensor({3, tr.target.vertex_count()}, mesh_to_columns(tr.target));
        s.gt = make_tensor({3, tr.gt.vertex_count()}, mesh_to_columns(tr.gt));
    }

    TrainResult res;
    for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        const auto order = random_permutation(train_idx.size(), mix_seed(cfg.seed, epoch));

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            Tape tape;
            TensorPtr batch_total;
            for (std::size_t b = 0; b < n; ++b) {
                const Supervision& s = sup[train_idx[order[start + b]]];
                auto pred = transfer_forward(tape, state.params, s.src, s.tgt, cfg.variant);
                auto tl = total_loss(tape, pred, s.gt, s.edges, s.gt_lengths, cfg.lambda);
                loss_sum += tl.total->data[0];
                batch_total = batch_total ? tape.add(batch_total, tl.total) : tl.total;
            }
            auto batch_mean = tape.scale(batch_total, 1.0 / static_cast<double>(n));
            state.params.zero_grads();
            tape.backward(batch_mean);
            state.opt.step(lr);
        }

        double vp = 0.0, vc = 0.0;
        for (std::size_t i : val_idx) {
            const Triple& tr = ds.triples[i];
            Mesh pred = transfer(state.params, tr.source, tr.target, cfg.variant);
            vp += pmd(pred.vertices, tr.gt.vertices);
            vc += chamfer(pred.vertices, tr.gt.vertices);
        }

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(train_idx.size());
        row.val_pmd = vp / static_cast<double>(val_idx.size());
        row.val_cd = vc / static_cast<double>(val_idx.size());
        res.log.push_back(row);
        if (progress) *progress << log_csv_row(row) << "\n";
        state.epoch = epoch + 1;
    }
    return res;
}

EvalStats evaluate_split(const Dataset& ds, bool seen, const Predictor& predict, bool with_emd) {
    const auto idx = ds.split_indices(seen);
    if (idx.empty())
        throw ContractError(std::string("evaluate: the ") + (seen ? "seen" : "unseen") +
                            " split has no triples");
    EvalStats stats;
    stats.count = idx.size();
    for (std::size_t i : idx) {
        const Triple& tr = ds.triples[i];
        const Mesh pred = predict(tr);
        stats.mean.pmd += pmd(pred.vertices, tr.gt.vertices);
        stats.mean.cd += chamfer(pred.vertices, tr.gt.vertices);
        if (with_emd) stats.mean.emd += emd(pred.vertices, tr.gt.vertices);
    }
    stats.mean.pmd /= static_cast<double>(stats.count);
    stats.mean.cd /= static_cast<double>(stats.count);
    stats.mean.emd /= static_cast<double>(stats.count);
    return stats;
}

EvalStats evaluate(const ModelParams& params, const Dataset& ds, bool seen, DecoderVariant variant,
                   bool with_emd) {
    return evaluate_split(
        ds, seen,
        [&](const Triple& tr) { return transfer(params, tr.source, tr.target, variant); },
        with_emd);
}

} // namespace dsffnet
