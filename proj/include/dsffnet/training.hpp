#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dsffnet/metrics.hpp"
#include "dsffnet/model.hpp"
#include "dsffnet/synthetic.hpp"

namespace dsffnet {

struct TrainConfig {
    ModelWidths widths;
    DecoderVariant variant = DecoderVariant::kFull;
    double lr0 = 1e-3;
    double decay_factor = 0.8; // LR multiplier applied every decay_every epochs
    std::size_t decay_every = 8;
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double lambda = 5e-4; // edge-length loss weight
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-2; // decoupled; conv kernels only
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

// lr0 · decay_factor^floor(epoch/decay_every), evaluated by repeated
// multiplication: under the defaults epochs 8 and 16 then land exactly on
// the doubles 8e-4 and 6.4e-4, which pow() misses by an ulp
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// conv kernels ("….W") decay; biases and the fusion scalars are exempt
bool wants_weight_decay(const std::string& param_name);

class AdamW {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-2;
    };
    struct Slot {
        std::string name;
        TensorPtr param;
        std::vector<double> m, v;
        bool decay = true;
    };

    AdamW(std::vector<std::pair<std::string, TensorPtr>> params, const Hyper& hyper);

    // reads the accumulated gradients (missing buffers count as zero) and
    // applies the bias-corrected update plus decoupled decay where enabled
    void step(double lr);

    std::uint64_t step_count() const { return step_; }
    void set_step_count(std::uint64_t t) { step_ = t; }
    const std::vector<Slot>& slots() const { return slots_; }
    std::vector<Slot>& slots() { return slots_; }
    const Hyper& hyper() const { return hyper_; }

private:
    std::vector<Slot> slots_;
    Hyper hyper_;
    std::uint64_t step_ = 0;
};

AdamW make_optimizer(const ModelParams& params, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// checkpoint container: "DSFF" magic, version byte 1, tensor count (u32 LE),
// then per tensor: name length (u16 LE), UTF-8 name, rank (u8), dims (u64 LE
// each), values (IEEE-754 binary64 LE). Entries sorted by name.

struct CheckpointEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

void write_checkpoint_file(const std::string& path, std::vector<CheckpointEntry> entries);
std::vector<CheckpointEntry> read_checkpoint_file(const std::string& path); // throws FormatError

struct TrainState {
    TrainConfig config;
    ModelParams params;
    AdamW opt;
    std::size_t epoch = 0; // epochs already completed
};

TrainState make_train_state(const TrainConfig& cfg);
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_pmd = 0.0;
    double val_cd = 0.0;
};

std::string log_csv_header(); // epoch,lr,train_loss,val_pmd,val_cd
std::string log_csv_row(const EpochLog& row);

struct TrainResult {
    std::vector<EpochLog> log; // one row per epoch run by this call
};

// Runs epochs [state.epoch, config.epochs). Batch order is drawn fresh each
// epoch from mix_seed(config.seed, epoch), so a run resumed from a
// checkpoint replays exactly what the uninterrupted run would have done.
// Validation PMD/CD per epoch comes from the unseen-pose split, or from the
// training split when the dataset holds nothing out.
TrainResult train(TrainState& state, const Dataset& ds, std::ostream* progress = nullptr);

struct EvalStats {
    MetricsRecord mean;
    std::size_t count = 0;
};

using Predictor = std::function<Mesh(const Triple&)>;

EvalStats evaluate_split(const Dataset& ds, bool seen, const Predictor& predict,
                         bool with_emd = true);
EvalStats evaluate(const ModelParams& params, const Dataset& ds, bool seen,
                   DecoderVariant variant = DecoderVariant::kFull, bool with_emd = true);

} // namespace dsffnet
