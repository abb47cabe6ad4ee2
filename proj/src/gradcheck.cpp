#include "dsffnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dsffnet/errors.hpp"

namespace dsffnet {

const GradCheckEntry* GradCheckReport::worst() const {
    if (entries.empty()) return nullptr;
    const GradCheckEntry* w = &entries.front();
    for (const auto& e : entries)
        if (e.rel_error > w->rel_error) w = &e;
    return w;
}

double gradcheck_rel_error(double analytic, double numeric) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    return std::fabs(analytic - numeric) / denom;
}

double central_difference(const ScalarFn& fn, const TensorPtr& param, std::size_t index,
                          double step) {
    if (index >= param->size()) throw ContractError("central_difference: index out of range");
    const double saved = param->data[index];
    param->data[index] = saved + step;
    const double f_plus = fn();
    param->data[index] = saved - step;
    const double f_minus = fn();
    param->data[index] = saved;
    return (f_plus - f_minus) / (2.0 * step);
}

GradCheckReport run_gradcheck(const ScalarFn& fn,
                              const std::vector<std::pair<std::string, TensorPtr>>& params,
                              const GradCheckOptions& opts) {
    GradCheckReport report;
    for (const auto& [name, param] : params) {
        if (!param->requires_grad)
            throw ContractError("run_gradcheck: parameter '" + name + "' does not require grad");
        param->ensure_grad();
        const std::size_t n = param->size();
        std::size_t count = n;
        std::size_t stride = 1;
        if (opts.max_per_group > 0 && n > opts.max_per_group) {
            count = opts.max_per_group;
            stride = n / count;
        }
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t idx = std::min(k * stride, n - 1);
            GradCheckEntry e;
            e.name = name;
            e.index = idx;
            e.analytic = param->grad[idx];
            e.numeric = central_difference(fn, param, idx, opts.step);
            e.rel_error = gradcheck_rel_error(e.analytic, e.numeric);
            report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            ++report.checked;
            report.entries.push_back(std::move(e));
        }
    }
    return report;
}

} // namespace dsffnet
