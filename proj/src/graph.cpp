#include "stad/graph.hpp"

#include <cmath>
#include <cstring>

#include "stad/kernels.hpp"

namespace stad {

namespace {

// Gradients accumulate elementwise; order across consumers is fixed by the
// reverse tape walk.
void axpy(Tensor& dst, const Tensor& src, float a) {
    float* d = dst.data();
    const float* s = src.data();
    const int64_t n = dst.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) d[i] += a * s[i];
}

}  // namespace

Graph::Id Graph::emplace(Tensor value, bool needs_grad, std::function<void(Graph&)> fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward_fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

void Graph::check(Id id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw ConfigError("graph: op references an unrecorded tensor");
}

Tensor& Graph::grad_buf(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad.defined()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

Tensor Graph::grad(Id id) const {
    check(id);
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.defined()) return n.grad;
    return Tensor(n.value.shape());
}

Graph::Id Graph::input(Tensor t) {
    require_finite(t, "graph input");
    return emplace(std::move(t), false, nullptr);
}

Graph::Id Graph::param(Tensor t) {
    require_finite(t, "graph parameter");
    return emplace(std::move(t), true, nullptr);
}

Graph::Id Graph::conv2d(Id x, Id w, Id b, int stride, int dilation) {
    check(x);
    check(w);
    check(b);
    Tensor out = kernels::conv2d_forward(value(x), value(w), value(b), stride, dilation);
    const bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, w, b, id, stride, dilation](Graph& g) {
            const Tensor& go = g.nodes_[id].grad;
            Tensor* gi = g.nodes_[x].needs_grad ? &g.grad_buf(x) : nullptr;
            Tensor* gw = g.nodes_[w].needs_grad ? &g.grad_buf(w) : nullptr;
            Tensor* gb = g.nodes_[b].needs_grad ? &g.grad_buf(b) : nullptr;
            kernels::conv2d_backward(gi, gw, gb, go, g.value(x), g.value(w), stride,
                                     dilation);
        };
    }
    return id;
}

Graph::Id Graph::maxpool2d(Id x, int kernel, int stride, int dilation) {
    check(x);
    auto argmax = std::make_shared<std::vector<int32_t>>();
    Tensor out = kernels::maxpool2d_forward(value(x), argmax.get(), kernel, stride, dilation);
    const bool ng = nodes_[x].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, id, argmax, kernel, stride, dilation](Graph& g) {
            kernels::maxpool2d_backward(g.grad_buf(x), g.nodes_[id].grad, *argmax, kernel,
                                        stride, dilation);
        };
    }
    return id;
}

Graph::Id Graph::leaky_relu(Id x, float slope) {
    check(x);
    Tensor out = kernels::leaky_relu_forward(value(x), slope);
    const bool ng = nodes_[x].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, id, slope](Graph& g) {
            kernels::leaky_relu_backward(g.grad_buf(x), g.nodes_[id].grad, g.value(x), slope);
        };
    }
    return id;
}

Graph::Id Graph::linear(Id x, Id w, Id b) {
    check(x);
    check(w);
    check(b);
    Tensor out = kernels::linear_forward(value(x), value(w), value(b));
    const bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, w, b, id](Graph& g) {
            const Tensor& go = g.nodes_[id].grad;
            Tensor* gi = g.nodes_[x].needs_grad ? &g.grad_buf(x) : nullptr;
            Tensor* gw = g.nodes_[w].needs_grad ? &g.grad_buf(w) : nullptr;
            Tensor* gb = g.nodes_[b].needs_grad ? &g.grad_buf(b) : nullptr;
            kernels::linear_backward(gi, gw, gb, go, g.value(x), g.value(w));
        };
    }
    return id;
}

Graph::Id Graph::add(Id a, Id b) {
    check(a);
    check(b);
    if (!value(a).same_shape(value(b))) throw ShapeError("add: shape mismatch");
    Tensor out(value(a).shape());
    const float* pa = value(a).data();
    const float* pb = value(b).data();
    float* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    require_finite(out, "add output");
    const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [a, b, id](Graph& g) {
            const Tensor& go = g.nodes_[id].grad;
            if (g.nodes_[a].needs_grad) axpy(g.grad_buf(a), go, 1.0f);
            if (g.nodes_[b].needs_grad) axpy(g.grad_buf(b), go, 1.0f);
        };
    }
    return id;
}

Graph::Id Graph::sub(Id a, Id b) {
    check(a);
    check(b);
    if (!value(a).same_shape(value(b))) throw ShapeError("sub: shape mismatch");
    Tensor out(value(a).shape());
    const float* pa = value(a).data();
    const float* pb = value(b).data();
    float* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    require_finite(out, "sub output");
    const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [a, b, id](Graph& g) {
            const Tensor& go = g.nodes_[id].grad;
            if (g.nodes_[a].needs_grad) axpy(g.grad_buf(a), go, 1.0f);
            if (g.nodes_[b].needs_grad) axpy(g.grad_buf(b), go, -1.0f);
        };
    }
    return id;
}

Graph::Id Graph::scale(Id a, float s) {
    check(a);
    Tensor out(value(a).shape());
    const float* pa = value(a).data();
    float* po = out.data();
    const int64_t n = out.numel();
#pragma omp parallel for simd schedule(static)
    for (int64_t i = 0; i < n; ++i) po[i] = s * pa[i];
    require_finite(out, "scale output");
    const bool ng = nodes_[a].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [a, id, s](Graph& g) {
            axpy(g.grad_buf(a), g.nodes_[id].grad, s);
        };
    }
    return id;
}

Graph::Id Graph::add_n(const std::vector<Id>& xs) {
    if (xs.empty()) throw ConfigError("add_n: empty operand list");
    for (Id x : xs) check(x);
    Tensor out = value(xs[0]).clone();
    bool ng = nodes_[xs[0]].needs_grad;
    for (size_t i = 1; i < xs.size(); ++i) {
        if (!value(xs[i]).same_shape(out)) throw ShapeError("add_n: shape mismatch");
        const float* p = value(xs[i]).data();
        float* po = out.data();
        const int64_t n = out.numel();
        for (int64_t j = 0; j < n; ++j) po[j] += p[j];
        ng = ng || nodes_[xs[i]].needs_grad;
    }
    require_finite(out, "add_n output");
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        auto ops = xs;
        nodes_[id].backward_fn = [ops, id](Graph& g) {
            const Tensor& go = g.nodes_[id].grad;
            for (Id x : ops)
                if (g.nodes_[x].needs_grad) axpy(g.grad_buf(x), go, 1.0f);
        };
    }
    return id;
}

Graph::Id Graph::sum(Id x) {
    check(x);
    const float* p = value(x).data();
    const int64_t n = value(x).numel();
    float acc = 0.0f;
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    require_finite(Tensor::scalar(acc), "sum output");
    const bool ng = nodes_[x].needs_grad;
    Id id = emplace(Tensor::scalar(acc), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, id](Graph& g) {
            const float go = g.nodes_[id].grad.item();
            Tensor& gx = g.grad_buf(x);
            float* gp = gx.data();
            const int64_t m = gx.numel();
#pragma omp parallel for simd schedule(static)
            for (int64_t i = 0; i < m; ++i) gp[i] += go;
        };
    }
    return id;
}

Graph::Id Graph::sum_sq(Id x) {
    check(x);
    const float* p = value(x).data();
    const int64_t n = value(x).numel();
    float acc = 0.0f;
    for (int64_t i = 0; i < n; ++i) acc = std::fma(p[i], p[i], acc);
    require_finite(Tensor::scalar(acc), "sum_sq output");
    const bool ng = nodes_[x].needs_grad;
    Id id = emplace(Tensor::scalar(acc), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [x, id](Graph& g) {
            const float go = g.nodes_[id].grad.item();
            const float* xv = g.value(x).data();
            Tensor& gx = g.grad_buf(x);
            float* gp = gx.data();
            const int64_t m = gx.numel();
#pragma omp parallel for simd schedule(static)
            for (int64_t i = 0; i < m; ++i) gp[i] += 2.0f * go * xv[i];
        };
    }
    return id;
}

Graph::Id Graph::min2(Id a, Id b) {
    check(a);
    check(b);
    if (value(a).numel() != 1 || value(b).numel() != 1)
        throw ShapeError("min2: scalar operands required");
    const bool take_a = value(a).item() <= value(b).item();
    Tensor out = Tensor::scalar(take_a ? value(a).item() : value(b).item());
    const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        const Id chosen = take_a ? a : b;
        nodes_[id].backward_fn = [chosen, id](Graph& g) {
            if (g.nodes_[chosen].needs_grad)
                g.grad_buf(chosen).at(0) += g.nodes_[id].grad.item();
        };
    }
    return id;
}

Graph::Id Graph::stack_rows(const std::vector<Id>& rows) {
    if (rows.empty()) throw ConfigError("stack_rows: empty row list");
    for (Id r : rows) check(r);
    const int d = static_cast<int>(value(rows[0]).numel());
    const int b = static_cast<int>(rows.size());
    Tensor out({b, d});
    bool ng = false;
    for (int i = 0; i < b; ++i) {
        const Tensor& r = value(rows[static_cast<size_t>(i)]);
        if (r.numel() != d) throw ShapeError("stack_rows: row length mismatch");
        std::memcpy(out.data() + static_cast<size_t>(i) * d, r.data(), sizeof(float) * d);
        ng = ng || nodes_[rows[static_cast<size_t>(i)]].needs_grad;
    }
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        auto ops = rows;
        nodes_[id].backward_fn = [ops, id, d](Graph& g) {
            const float* go = g.nodes_[id].grad.data();
            for (size_t i = 0; i < ops.size(); ++i) {
                if (!g.nodes_[ops[i]].needs_grad) continue;
                Tensor& gr = g.grad_buf(ops[i]);
                float* gp = gr.data();
                for (int j = 0; j < d; ++j) gp[j] += go[i * static_cast<size_t>(d) + j];
            }
        };
    }
    return id;
}

Graph::Id Graph::corr_offdiag(Id m) {
    check(m);
    const Tensor& x = value(m);
    if (x.ndim() != 2) throw ShapeError("corr_offdiag: input must be [b,d]");
    const int b = x.dim(0), d = x.dim(1);
    if (b < 2) throw ConfigError("corr_offdiag: at least two rows required");

    // Standardize columns in double; dead (zero-variance) columns are dropped
    // from the correlation sum entirely.
    auto z = std::make_shared<std::vector<double>>(static_cast<size_t>(b) * d, 0.0);
    auto sdev = std::make_shared<std::vector<double>>(static_cast<size_t>(d), 0.0);
    const float* xp = x.data();
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < b; ++i) mean += xp[static_cast<size_t>(i) * d + j];
        mean /= b;
        double var = 0.0;
        for (int i = 0; i < b; ++i) {
            const double c = xp[static_cast<size_t>(i) * d + j] - mean;
            var += c * c;
        }
        var /= b;
        const double s = std::sqrt(var);
        (*sdev)[static_cast<size_t>(j)] = s;
        if (s > 0.0) {
            for (int i = 0; i < b; ++i)
                (*z)[static_cast<size_t>(i) * d + j] =
                    (xp[static_cast<size_t>(i) * d + j] - mean) / s;
        }
    }
    int live = 0;
    for (int j = 0; j < d; ++j)
        if ((*sdev)[static_cast<size_t>(j)] > 0.0) ++live;

    // sum_{i != j} c_ij = (1/b) * sum_k R_k^2 - live, with R_k the row sums of z.
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double rk = 0.0;
        for (int j = 0; j < d; ++j) rk += (*z)[static_cast<size_t>(i) * d + j];
        loss += rk * rk;
    }
    loss = loss / b - live;

    Tensor out = Tensor::scalar(static_cast<float>(loss));
    require_finite(out, "corr_offdiag output");
    const bool ng = nodes_[m].needs_grad;
    Id id = emplace(std::move(out), ng, nullptr);
    if (ng) {
        nodes_[id].backward_fn = [m, id, z, sdev, b, d](Graph& g) {
            const double go = static_cast<double>(g.nodes_[id].grad.item());
            // dL/dz_kj = (2/b) R_k on live columns; pull back through the
            // standardization (mean and std both depend on every row).
            std::vector<double> r(static_cast<size_t>(b), 0.0);
            for (int i = 0; i < b; ++i) {
                double rk = 0.0;
                for (int j = 0; j < d; ++j) rk += (*z)[static_cast<size_t>(i) * d + j];
                r[static_cast<size_t>(i)] = rk;
            }
            double gsum = 0.0;  // sum_k g_kj (same for every live column)
            for (int i = 0; i < b; ++i) gsum += 2.0 * r[static_cast<size_t>(i)] / b;
            Tensor& gm = g.grad_buf(m);
            float* gp = gm.data();
            for (int j = 0; j < d; ++j) {
                const double s = (*sdev)[static_cast<size_t>(j)];
                if (s <= 0.0) continue;
                double q = 0.0;  // sum_k g_kj z_kj
                for (int i = 0; i < b; ++i)
                    q += (2.0 * r[static_cast<size_t>(i)] / b) *
                         (*z)[static_cast<size_t>(i) * d + j];
                for (int i = 0; i < b; ++i) {
                    const double gkj = 2.0 * r[static_cast<size_t>(i)] / b;
                    const double dx =
                        (gkj - gsum / b - (*z)[static_cast<size_t>(i) * d + j] * q / b) / s;
                    gp[static_cast<size_t>(i) * d + j] += static_cast<float>(go * dx);
                }
            }
        };
    }
    return id;
}

void Graph::backward(Id loss) {
    check(loss);
    if (ran_backward_) throw ConfigError("graph: backward already ran");
    ran_backward_ = true;
    Node& ln = nodes_[static_cast<size_t>(loss)];
    if (ln.value.numel() != 1) throw ShapeError("backward: loss must be scalar");
    if (!std::isfinite(ln.value.item())) throw NumericError("backward: loss is not finite");
    grad_buf(loss).at(0) = 1.0f;
    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.backward_fn && n.grad.defined()) n.backward_fn(*this);
    }
}

}  // namespace stad
