#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace dsffnet {

/// Dense row-major tensor of doubles with an optional gradient buffer.
/// 2-D tensors are laid out channel-major: shape {C, N} stores channel c
/// contiguously as data[c*N .. c*N+N-1].
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty until allocated, else same length as data

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in, bool req_grad = false);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return data.size() == 1; }

    // rank-2 accessors
    std::size_t rows() const;
    std::size_t cols() const;
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

    void ensure_grad();          // allocate zeros when absent
    void zero_grad();            // zero in place (allocates when absent)
    bool has_grad() const { return !grad.empty(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> data);
TensorPtr make_param(std::vector<std::size_t> shape, std::vector<double> data);
TensorPtr zeros(std::vector<std::size_t> shape);
TensorPtr full(std::vector<std::size_t> shape, double value);
TensorPtr scalar_tensor(double value);

/// Undirected vertex-index pairs, used by the edge-length operation.
using EdgePairs = std::vector<std::array<std::uint32_t, 2>>;

struct InstanceNormOut {
    TensorPtr normalized; // {C, N}
    TensorPtr mu;         // {C}
    TensorPtr sigma;      // {C}
};

/// Per-channel statistics of one instance-norm call, in call order. Used by
/// capture/replay below.
struct NormStats {
    std::vector<double> mu;
    std::vector<double> sigma;
};

/// Records forward operations and replays their adjoints in reverse order.
///
/// Ownership: outputs are created by the tape; inputs are shared. Parameter
/// tensors outlive the tape, so gradients accumulated into them survive
/// clear(). backward() may be called repeatedly; adjoints of leaf parameters
/// accumulate across calls while intermediate gradients are reset each time.
///
/// A tape and the tensors it created are confined to a single thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- per-vertex network ops -------------------------------------------
    // out[c,n] = sum_k w[c,k] * x[k,n] + b[c]
    TensorPtr linear_1x1(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
    // Per-channel standardization over the vertex axis; population variance,
    // eps under the square root. Reductions are evaluated in sorted order so
    // the statistics are exactly invariant to vertex permutations.
    InstanceNormOut instance_norm(const TensorPtr& x, double eps);
    TensorPtr relu(const TensorPtr& x);
    TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
    // {C,N} -> {C}; ties route the gradient to the lowest vertex index.
    TensorPtr max_over_vertices(const TensorPtr& x);
    // {C} -> {C,N}, every column a copy of v.
    TensorPtr repeat_columns(const TensorPtr& v, std::size_t n);

    // --- elementwise / reduction ops --------------------------------------
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
    TensorPtr div(const TensorPtr& a, const TensorPtr& b);
    TensorPtr scale(const TensorPtr& a, double s);
    TensorPtr add_scalar(const TensorPtr& a, double s);
    TensorPtr abs(const TensorPtr& a);
    TensorPtr sum_all(const TensorPtr& a);
    TensorPtr mean_all(const TensorPtr& a);
    // a * s where s has shape {1}; differentiable in both.
    TensorPtr mul_scalar(const TensorPtr& a, const TensorPtr& s);
    // Euclidean length of each edge of a {3,N} coordinate tensor -> {E}.
    // Zero-length edges get a zero subgradient.
    TensorPtr edge_lengths(const TensorPtr& x, const EdgePairs& edges);

    /// Seeds d(loss)/d(loss) = 1 and replays all recorded adjoints in
    /// reverse execution order. Gradients of tensors created by this tape
    /// are reset first; leaf gradients accumulate across calls.
    void backward(const TensorPtr& loss);

    void clear();
    std::size_t num_records() const { return records_.size(); }

    // --- instance-norm statistics capture/replay --------------------------
    // capture_norm_stats() makes subsequent instance_norm calls append their
    // (mu, sigma) to `sink`; replay_norm_stats() makes them consume stats
    // from `source` in call order and treat them as constants. Used to probe
    // which activations a single-vertex perturbation can reach when the
    // normalization statistics are held fixed.
    void capture_norm_stats(std::vector<NormStats>* sink);
    void replay_norm_stats(const std::vector<NormStats>* source);

private:
    struct Record {
        std::vector<TensorPtr> outputs;
        std::function<void()> adjoint;
    };

    TensorPtr emit(std::vector<std::size_t> shape, std::vector<double> data, bool track);
    void record(std::vector<TensorPtr> outputs, std::function<void()> adjoint);

    std::vector<Record> records_;
    std::vector<NormStats>* stats_sink_ = nullptr;
    const std::vector<NormStats>* stats_source_ = nullptr;
    std::size_t stats_cursor_ = 0;
};

/// Sum of a multiset of finite doubles, independent of input order: values
/// are sorted ascending before accumulation.
double multiset_sum(const double* values, std::size_t n);

} // namespace dsffnet
