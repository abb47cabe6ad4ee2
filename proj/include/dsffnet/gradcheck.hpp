#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dsffnet/tensor.hpp"

namespace dsffnet {

// Scalar-valued function of the current values of a fixed parameter set.
// Must be deterministic and must not mutate the parameters.
using ScalarFn = std::function<double()>;

struct GradCheckEntry {
    std::string name;      // parameter group
    std::size_t index = 0; // flat index inside the group
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries; // one per checked coordinate
    double max_rel_error = 0.0;
    std::size_t checked = 0;

    const GradCheckEntry* worst() const;
    bool passes(double tol) const { return max_rel_error <= tol; }
};

// rel = |a - n| / max(1, |a|, |n|); the unit floor keeps near-zero
// gradients from blowing up the ratio.
double gradcheck_rel_error(double analytic, double numeric);

// Central-difference probe of fn at params[group]->data[index].
double central_difference(const ScalarFn& fn, const TensorPtr& param, std::size_t index,
                          double step);

struct GradCheckOptions {
    double step = 1e-5;
    // 0 = check every coordinate of every group; otherwise cap per group,
    // choosing indices with a deterministic stride. Groups at or under the
    // cap are still checked exhaustively.
    std::size_t max_per_group = 0;
};

// Compares analytic gradients (already accumulated into param->grad) against
// central differences of fn. fn must recompute the loss from current data.
GradCheckReport run_gradcheck(const ScalarFn& fn,
                              const std::vector<std::pair<std::string, TensorPtr>>& params,
                              const GradCheckOptions& opts = {});

} // namespace dsffnet
