#include "dsffnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "dsffnet/errors.hpp"

namespace dsffnet {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require_rank2(const Tensor& t, const char* op, const char* arg) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": " + arg + " must be rank 2, got rank " +
                             std::to_string(t.rank()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        std::string msg = std::string(op) + ": shape mismatch on ";
        const std::size_t r = std::min(a.shape.size(), b.shape.size());
        std::size_t axis = 0;
        for (; axis < r; ++axis)
            if (a.shape[axis] != b.shape[axis]) break;
        msg += "axis " + std::to_string(axis);
        throw DimensionError(msg);
    }
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in, bool req_grad)
    : shape(std::move(shape_in)), data(std::move(data_in)), requires_grad(req_grad) {
    if (shape_product(shape) != data.size()) {
        throw DimensionError("tensor: shape/data size mismatch (" +
                             std::to_string(shape_product(shape)) + " vs " +
                             std::to_string(data.size()) + ")");
    }
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("tensor: rows() on rank " + std::to_string(rank()));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("tensor: cols() on rank " + std::to_string(rank()));
    return shape[1];
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (grad.empty())
        grad.assign(data.size(), 0.0);
    else
        std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> data) {
    return std::make_shared<Tensor>(std::move(shape), std::move(data), false);
}

TensorPtr make_param(std::vector<std::size_t> shape, std::vector<double> data) {
    auto t = std::make_shared<Tensor>(std::move(shape), std::move(data), true);
    t->ensure_grad();
    return t;
}

TensorPtr zeros(std::vector<std::size_t> shape) {
    std::vector<double> d(shape_product(shape), 0.0);
    return make_tensor(std::move(shape), std::move(d));
}

TensorPtr full(std::vector<std::size_t> shape, double value) {
    std::vector<double> d(shape_product(shape), value);
    return make_tensor(std::move(shape), std::move(d));
}

TensorPtr scalar_tensor(double value) { return make_tensor({1}, {value}); }

double multiset_sum(const double* values, std::size_t n) {
    thread_local std::vector<double> scratch;
    scratch.assign(values, values + n);
    std::sort(scratch.begin(), scratch.end());
    double s = 0.0;
    for (double v : scratch) s += v;
    return s;
}

TensorPtr Tape::emit(std::vector<std::size_t> shape, std::vector<double> data, bool track) {
    auto t = std::make_shared<Tensor>(std::move(shape), std::move(data), track);
    return t;
}

void Tape::record(std::vector<TensorPtr> outputs, std::function<void()> adjoint) {
    records_.push_back(Record{std::move(outputs), std::move(adjoint)});
}

void Tape::clear() {
    records_.clear();
    stats_sink_ = nullptr;
    stats_source_ = nullptr;
    stats_cursor_ = 0;
}

void Tape::capture_norm_stats(std::vector<NormStats>* sink) {
    stats_sink_ = sink;
    stats_source_ = nullptr;
}

void Tape::replay_norm_stats(const std::vector<NormStats>* source) {
    stats_source_ = source;
    stats_sink_ = nullptr;
    stats_cursor_ = 0;
}

void Tape::backward(const TensorPtr& loss) {
    if (!loss || !loss->is_scalar())
        throw ContractError("backward: loss must be a scalar tensor");
    for (auto& rec : records_)
        for (auto& out : rec.outputs) out->zero_grad();
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->adjoint();
}

// --- network ops ------------------------------------------------------------

TensorPtr Tape::linear_1x1(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    require_rank2(*x, "linear_1x1", "x");
    require_rank2(*w, "linear_1x1", "w");
    const std::size_t c_in = x->shape[0];
    const std::size_t n = x->shape[1];
    const std::size_t c_out = w->shape[0];
    if (w->shape[1] != c_in)
        throw DimensionError("linear_1x1: axis 1 of w (" + std::to_string(w->shape[1]) +
                             ") != axis 0 of x (" + std::to_string(c_in) + ")");
    if (b->rank() != 1 || b->shape[0] != c_out)
        throw DimensionError("linear_1x1: axis 0 of b must be " + std::to_string(c_out));

    std::vector<double> out(c_out * n);
    for (std::size_t c = 0; c < c_out; ++c) {
        double* orow = out.data() + c * n;
        std::fill(orow, orow + n, b->data[c]);
        for (std::size_t k = 0; k < c_in; ++k) {
            const double wk = w->data[c * c_in + k];
            const double* xrow = x->data.data() + k * n;
            for (std::size_t i = 0; i < n; ++i) orow[i] += wk * xrow[i];
        }
    }

    const bool track = x->requires_grad || w->requires_grad || b->requires_grad;
    auto o = emit({c_out, n}, std::move(out), track);
    if (track) {
        record({o}, [x, w, b, o, c_in, c_out, n] {
            if (o->grad.empty()) return;
            const double* go = o->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t c = 0; c < c_out; ++c)
                    for (std::size_t k = 0; k < c_in; ++k) {
                        const double wk = w->data[c * c_in + k];
                        double* gx = x->grad.data() + k * n;
                        const double* grow = go + c * n;
                        for (std::size_t i = 0; i < n; ++i) gx[i] += wk * grow[i];
                    }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (std::size_t c = 0; c < c_out; ++c)
                    for (std::size_t k = 0; k < c_in; ++k) {
                        const double* grow = go + c * n;
                        const double* xrow = x->data.data() + k * n;
                        double s = 0.0;
                        for (std::size_t i = 0; i < n; ++i) s += grow[i] * xrow[i];
                        w->grad[c * c_in + k] += s;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t c = 0; c < c_out; ++c) {
                    const double* grow = go + c * n;
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) s += grow[i];
                    b->grad[c] += s;
                }
            }
        });
    }
    return o;
}

InstanceNormOut Tape::instance_norm(const TensorPtr& x, double eps) {
    require_rank2(*x, "instance_norm", "x");
    const std::size_t c_n = x->shape[0];
    const std::size_t n = x->shape[1];
    if (n < 1) throw ContractError("instance_norm: vertex axis must be non-empty");
    if (eps <= 0.0) throw ContractError("instance_norm: eps must be positive");

    std::vector<double> mu(c_n), sigma(c_n), out(c_n * n);
    const bool replay = stats_source_ != nullptr;
    if (replay) {
        if (stats_cursor_ >= stats_source_->size())
            throw ContractError("instance_norm: replayed stats exhausted");
        const NormStats& st = (*stats_source_)[stats_cursor_++];
        if (st.mu.size() != c_n || st.sigma.size() != c_n)
            throw DimensionError("instance_norm: replayed stats have wrong channel count");
        mu = st.mu;
        sigma = st.sigma;
        for (std::size_t c = 0; c < c_n; ++c) {
            const double* xrow = x->data.data() + c * n;
            double* orow = out.data() + c * n;
            const double inv = 1.0 / sigma[c];
            for (std::size_t i = 0; i < n; ++i) orow[i] = (xrow[i] - mu[c]) * inv;
        }
    } else {
        thread_local std::vector<double> devsq;
        devsq.resize(n);
        for (std::size_t c = 0; c < c_n; ++c) {
            const double* xrow = x->data.data() + c * n;
            const double m = multiset_sum(xrow, n) / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double d = xrow[i] - m;
                devsq[i] = d * d;
            }
            const double var = multiset_sum(devsq.data(), n) / static_cast<double>(n);
            const double s = std::sqrt(var + eps);
            mu[c] = m;
            sigma[c] = s;
            double* orow = out.data() + c * n;
            const double inv = 1.0 / s;
            for (std::size_t i = 0; i < n; ++i) orow[i] = (xrow[i] - m) * inv;
        }
        if (stats_sink_) stats_sink_->push_back(NormStats{mu, sigma});
    }

    const bool track = x->requires_grad;
    InstanceNormOut res;
    res.normalized = emit({c_n, n}, std::move(out), track);
    res.mu = emit({c_n}, std::move(mu), track);
    res.sigma = emit({c_n}, std::move(sigma), track);
    if (track) {
        auto o = res.normalized;
        auto mu_t = res.mu;
        auto sig_t = res.sigma;
        record({o, mu_t, sig_t}, [x, o, mu_t, sig_t, c_n, n, replay] {
            x->ensure_grad();
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t c = 0; c < c_n; ++c) {
                const double* xhat = o->data.data() + c * n;
                const double inv_s = 1.0 / sig_t->data[c];
                double* gx = x->grad.data() + c * n;
                if (!o->grad.empty()) {
                    const double* go = o->grad.data() + c * n;
                    if (replay) {
                        // stats held constant: plain per-element scaling
                        for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * inv_s;
                    } else {
                        double mean_g = 0.0, mean_gx = 0.0;
                        for (std::size_t i = 0; i < n; ++i) {
                            mean_g += go[i];
                            mean_gx += go[i] * xhat[i];
                        }
                        mean_g *= inv_n;
                        mean_gx *= inv_n;
                        for (std::size_t i = 0; i < n; ++i)
                            gx[i] += inv_s * (go[i] - mean_g - xhat[i] * mean_gx);
                    }
                }
                if (!replay) {
                    if (!mu_t->grad.empty() && mu_t->grad[c] != 0.0) {
                        const double gmu = mu_t->grad[c] * inv_n;
                        for (std::size_t i = 0; i < n; ++i) gx[i] += gmu;
                    }
                    if (!sig_t->grad.empty() && sig_t->grad[c] != 0.0) {
                        const double gs = sig_t->grad[c] * inv_n;
                        for (std::size_t i = 0; i < n; ++i) gx[i] += gs * xhat[i];
                    }
                }
            }
        });
    }
    return res;
}

TensorPtr Tape::relu(const TensorPtr& x) {
    std::vector<double> out(x->size());
    for (std::size_t i = 0; i < x->size(); ++i) out[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
    const bool track = x->requires_grad;
    auto o = emit(x->shape, std::move(out), track);
    if (track) {
        record({o}, [x, o] {
            if (o->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i)
                if (x->data[i] > 0.0) x->grad[i] += o->grad[i];
        });
    }
    return o;
}

TensorPtr Tape::concat_channels(const TensorPtr& a, const TensorPtr& b) {
    require_rank2(*a, "concat_channels", "a");
    require_rank2(*b, "concat_channels", "b");
    const std::size_t n = a->shape[1];
    if (b->shape[1] != n)
        throw DimensionError("concat_channels: axis 1 mismatch (" + std::to_string(n) + " vs " +
                             std::to_string(b->shape[1]) + ")");
    const std::size_t ca = a->shape[0], cb = b->shape[0];
    std::vector<double> out;
    out.reserve((ca + cb) * n);
    out.insert(out.end(), a->data.begin(), a->data.end());
    out.insert(out.end(), b->data.begin(), b->data.end());
    const bool track = a->requires_grad || b->requires_grad;
    auto o = emit({ca + cb, n}, std::move(out), track);
    if (track) {
        record({o}, [a, b, o, ca, n] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                const std::size_t off = ca * n;
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += o->grad[off + i];
            }
        });
    }
    return o;
}

TensorPtr Tape::max_over_vertices(const TensorPtr& x) {
    require_rank2(*x, "max_over_vertices", "x");
    const std::size_t c_n = x->shape[0];
    const std::size_t n = x->shape[1];
    if (n < 1) throw ContractError("max_over_vertices: vertex axis must be non-empty");
    std::vector<double> out(c_n);
    auto argmax = std::make_shared<std::vector<std::size_t>>(c_n);
    for (std::size_t c = 0; c < c_n; ++c) {
        const double* xrow = x->data.data() + c * n;
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (xrow[i] > xrow[best]) best = i; // strict: lowest index wins ties
        out[c] = xrow[best];
        (*argmax)[c] = best;
    }
    const bool track = x->requires_grad;
    auto o = emit({c_n}, std::move(out), track);
    if (track) {
        record({o}, [x, o, argmax, n] {
            if (o->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t c = 0; c < o->size(); ++c)
                x->grad[c * n + (*argmax)[c]] += o->grad[c];
        });
    }
    return o;
}

TensorPtr Tape::repeat_columns(const TensorPtr& v, std::size_t n) {
    if (v->rank() != 1)
        throw DimensionError("repeat_columns: input must be rank 1, got rank " +
                             std::to_string(v->rank()));
    if (n < 1) throw ContractError("repeat_columns: column count must be positive");
    const std::size_t c_n = v->shape[0];
    std::vector<double> out(c_n * n);
    for (std::size_t c = 0; c < c_n; ++c)
        std::fill(out.begin() + static_cast<std::ptrdiff_t>(c * n),
                  out.begin() + static_cast<std::ptrdiff_t>((c + 1) * n), v->data[c]);
    const bool track = v->requires_grad;
    auto o = emit({c_n, n}, std::move(out), track);
    if (track) {
        record({o}, [v, o, n] {
            if (o->grad.empty()) return;
            v->ensure_grad();
            for (std::size_t c = 0; c < v->size(); ++c) {
                const double* grow = o->grad.data() + c * n;
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += grow[i];
                v->grad[c] += s;
            }
        });
    }
    return o;
}

// --- elementwise / reduction ops ---------------------------------------------

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "add");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    const bool track = a->requires_grad || b->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, b, o] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += o->grad[i];
            }
        });
    }
    return o;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "sub");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    const bool track = a->requires_grad || b->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, b, o] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] -= o->grad[i];
            }
        });
    }
    return o;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "mul");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    const bool track = a->requires_grad || b->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, b, o] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
            }
        });
    }
    return o;
}

TensorPtr Tape::div(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(*a, *b, "div");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] / b->data[i];
    const bool track = a->requires_grad || b->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, b, o] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i] / b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i)
                    b->grad[i] -= o->grad[i] * o->data[i] / b->data[i];
            }
        });
    }
    return o;
}

TensorPtr Tape::scale(const TensorPtr& a, double s) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * s;
    const bool track = a->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, o, s] {
            if (o->grad.empty()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i] * s;
        });
    }
    return o;
}

TensorPtr Tape::add_scalar(const TensorPtr& a, double s) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + s;
    const bool track = a->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, o] {
            if (o->grad.empty()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i];
        });
    }
    return o;
}

TensorPtr Tape::abs(const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a->data[i]);
    const bool track = a->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, o] {
            if (o->grad.empty()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) {
                if (a->data[i] > 0.0)
                    a->grad[i] += o->grad[i];
                else if (a->data[i] < 0.0)
                    a->grad[i] -= o->grad[i];
                // subgradient 0 at exactly 0
            }
        });
    }
    return o;
}

TensorPtr Tape::sum_all(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    const bool track = a->requires_grad;
    auto o = emit({1}, {s}, track);
    if (track) {
        record({o}, [a, o] {
            if (o->grad.empty()) return;
            a->ensure_grad();
            const double g = o->grad[0];
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        });
    }
    return o;
}

TensorPtr Tape::mean_all(const TensorPtr& a) {
    if (a->size() == 0) throw ContractError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a->size()));
}

TensorPtr Tape::mul_scalar(const TensorPtr& a, const TensorPtr& s) {
    if (!s->is_scalar()) throw DimensionError("mul_scalar: scale factor must have shape {1}");
    const double sv = s->data[0];
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * sv;
    const bool track = a->requires_grad || s->requires_grad;
    auto o = emit(a->shape, std::move(out), track);
    if (track) {
        record({o}, [a, s, o, sv] {
            if (o->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i] * sv;
            }
            if (s->requires_grad) {
                s->ensure_grad();
                double g = 0.0;
                for (std::size_t i = 0; i < a->size(); ++i) g += o->grad[i] * a->data[i];
                s->grad[0] += g;
            }
        });
    }
    return o;
}

TensorPtr Tape::edge_lengths(const TensorPtr& x, const EdgePairs& edges) {
    require_rank2(*x, "edge_lengths", "x");
    if (x->shape[0] != 3)
        throw DimensionError("edge_lengths: axis 0 must be 3, got " + std::to_string(x->shape[0]));
    const std::size_t n = x->shape[1];
    const std::size_t e_n = edges.size();
    std::vector<double> out(e_n);
    for (std::size_t e = 0; e < e_n; ++e) {
        const std::size_t i = edges[e][0], j = edges[e][1];
        if (i >= n || j >= n)
            throw DimensionError("edge_lengths: edge " + std::to_string(e) +
                                 " references vertex beyond axis 1");
        double s = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
            const double diff = x->data[d * n + i] - x->data[d * n + j];
            s += diff * diff;
        }
        out[e] = std::sqrt(s);
    }
    const bool track = x->requires_grad;
    auto o = emit({e_n}, std::move(out), track);
    if (track) {
        auto edges_copy = std::make_shared<EdgePairs>(edges);
        record({o}, [x, o, edges_copy, n] {
            if (o->grad.empty()) return;
            x->ensure_grad();
            for (std::size_t e = 0; e < edges_copy->size(); ++e) {
                const double len = o->data[e];
                if (len <= 0.0) continue;
                const double coef = o->grad[e] / len;
                const std::size_t i = (*edges_copy)[e][0], j = (*edges_copy)[e][1];
                for (std::size_t d = 0; d < 3; ++d) {
                    const double diff = x->data[d * n + i] - x->data[d * n + j];
                    x->grad[d * n + i] += coef * diff;
                    x->grad[d * n + j] -= coef * diff;
                }
            }
        });
    }
    return o;
}

} // namespace dsffnet
