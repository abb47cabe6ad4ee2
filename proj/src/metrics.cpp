#include "dsffnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dsffnet/errors.hpp"

namespace dsffnet {

namespace {

double sqdist(const std::array<double, 3>& p, const std::array<double, 3>& q) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
        const double diff = p[d] - q[d];
        s += diff * diff;
    }
    return s;
}

} // namespace

double pmd(const Points& pred, const Points& gt) {
    if (pred.size() != gt.size())
        throw DimensionError("pmd: vertex counts differ (" + std::to_string(pred.size()) +
                             " vs " + std::to_string(gt.size()) + ") on axis 0");
    if (pred.empty()) throw ContractError("pmd: empty point sets");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += sqdist(pred[i], gt[i]);
    return s / static_cast<double>(pred.size());
}

double chamfer(const Points& a, const Points& b) {
    if (a.empty() || b.empty()) throw ContractError("chamfer: point sets must be nonempty");
    auto side = [](const Points& from, const Points& to) {
        double s = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, sqdist(p, q));
            s += best;
        }
        return s / static_cast<double>(from.size());
    };
    return side(a, b) + side(b, a);
}

std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    if (n == 0) throw ContractError("min_cost_assignment: empty cost matrix");
    for (const auto& row : cost)
        if (row.size() != n)
            throw DimensionError("min_cost_assignment: cost matrix must be square");

    const double INF = std::numeric_limits<double>::infinity();
    // Jonker–Volgenant style shortest augmenting paths with dual potentials;
    // 1-based arrays, column 0 is the virtual root.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, INF);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = INF;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

double emd(const Points& a, const Points& b) {
    if (a.size() != b.size())
        throw ContractError("emd: point sets must have equal cardinality (" +
                            std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw ContractError("emd: empty point sets");
    const std::size_t n = a.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = std::sqrt(sqdist(a[i], b[j]));
    const auto assign = min_cost_assignment(cost);
    // recompute from the assignment in ascending row order so the result is
    // bitwise comparable with a brute-force enumeration of the same matching
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i][assign[i]];
    return s / static_cast<double>(n);
}

MetricsRecord compute_metrics(const Points& pred, const Points& gt) {
    MetricsRecord r;
    r.pmd = pmd(pred, gt);
    r.cd = chamfer(pred, gt);
    r.emd = emd(pred, gt);
    return r;
}

} // namespace dsffnet
