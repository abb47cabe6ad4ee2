#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace dsffnet {

using Points = std::vector<std::array<double, 3>>;

struct MetricsRecord {
    double pmd = 0.0;
    double cd = 0.0;
    double emd = 0.0;
};

// mean squared per-vertex Euclidean distance over aligned orders
double pmd(const Points& pred, const Points& gt);

// (1/|A|)Σ_a min_b ‖a−b‖² + (1/|B|)Σ_b min_a ‖a−b‖²
double chamfer(const Points& a, const Points& b);

// min over permutations π of (1/N)Σ‖a_i − b_π(i)‖₂, exact assignment solver
double emd(const Points& a, const Points& b);

// exact minimum-cost perfect assignment on a square cost matrix
// (shortest augmenting paths with potentials); returns row→column map
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost);

MetricsRecord compute_metrics(const Points& pred, const Points& gt);

} // namespace dsffnet
