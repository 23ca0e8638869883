#include "bgfg/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace bgfg {

// ---------------------------------------------------------------------------
// Parameters

void Parameter::zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    else grad.fill(0.0);
    has_grad = false;
}

Parameter& ParameterSet::add(const std::string& name, Tensor value, bool trainable) {
    if (params_.count(name)) throw Error("parameter registered twice: " + name);
    Parameter p;
    p.name = name;
    p.grad = Tensor(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterSet::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

void ParameterSet::set_trainable(bool trainable) {
    for (auto& [name, p] : params_) p.trainable = trainable;
}

void ParameterSet::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

std::uint64_t ParameterSet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, p] : params_) {
        for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
        h = (h ^ p.value.checksum()) * 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const {
    if (!graph) throw Error("variable is not attached to a graph");
    return graph->value(*this);
}

void Graph::check(Var v, const char* what) const {
    if (v.graph != this || v.id >= nodes_.size())
        throw Error(std::string(what) + ": variable does not belong to this graph");
}

Var Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Graph::input(Tensor value, bool requires_grad) {
    Var v = record(std::move(value), {}, nullptr);
    nodes_[v.id].requires_grad = requires_grad;
    return v;
}

Var Graph::parameter(Parameter& p) {
    Var v = record(p.value, {}, nullptr);
    nodes_[v.id].requires_grad = p.trainable;
    nodes_[v.id].param = &p;
    return v;
}

const Tensor& Graph::value(Var v) const {
    check(v, "value");
    return nodes_[v.id].value;
}

Tensor Graph::grad(Var v) const {
    check(v, "grad");
    const Node& n = nodes_[v.id];
    return n.has_grad ? n.grad : Tensor(n.value.shape());
}

bool Graph::requires_grad(Var v) const {
    check(v, "requires_grad");
    return nodes_[v.id].requires_grad;
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    if (backward_done_) throw Error("graph: cannot record after backward");
    if (!value.all_finite()) throw NumericalError("non-finite value produced in forward pass");
    bool tracked = false;
    for (Var p : parents) {
        check(p, "record");
        tracked = tracked || nodes_[p.id].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = tracked;
    if (tracked) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    if (loss.graph != this || loss.id >= nodes_.size())
        throw Error("backward: loss was not produced by a forward pass on this graph");
    if (backward_done_) throw Error("backward: graph already differentiated");
    if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;

    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.requires_grad) continue;
        if (!n.grad.all_finite()) throw NumericalError("non-finite gradient in backward pass");
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            Parameter& p = *n.param;
            if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
            for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
            p.has_grad = true;
        }
    }
}

// ---------------------------------------------------------------------------
// Ops

Var conv2d(Var input, const ConvSpec& spec, Var weights, std::optional<Var> bias) {
    Graph& g = *input.graph;
    const Tensor* b = bias ? &bias->value() : nullptr;
    if (spec.has_bias != bias.has_value()) throw ShapeError("conv2d: bias presence does not match spec");
    Tensor out = kernels::conv2d_forward(input.value(), spec, weights.value(), b);
    const std::size_t x = input.id, w = weights.id;
    const std::optional<std::size_t> bid = bias ? std::optional(bias->id) : std::nullopt;
    auto fn = [spec, x, w, bid](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        const Tensor& xv = g.value_of(x);
        if (g.needs_grad(x)) {
            Tensor dx = kernels::conv2d_input_grad(dy, spec, g.value_of(w), xv.dim(2), xv.dim(3));
            Tensor& gx = g.grad_buffer(x);
            for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
        }
        if (g.needs_grad(w)) kernels::conv2d_weight_grad(xv, dy, spec, g.grad_buffer(w));
        if (bid && g.needs_grad(*bid)) kernels::bias_grad(dy, g.grad_buffer(*bid));
    };
    if (bias) return g.record(std::move(out), {input, weights, *bias}, fn);
    return g.record(std::move(out), {input, weights}, fn);
}

Var transposed_conv2d(Var input, const ConvSpec& spec, Var weights, std::optional<Var> bias) {
    Graph& g = *input.graph;
    const Tensor* b = bias ? &bias->value() : nullptr;
    if (spec.has_bias != bias.has_value())
        throw ShapeError("transposed_conv2d: bias presence does not match spec");
    Tensor out = kernels::transposed_conv2d_forward(input.value(), spec, weights.value(), b);
    const std::size_t x = input.id, w = weights.id;
    const std::optional<std::size_t> bid = bias ? std::optional(bias->id) : std::nullopt;
    const ConvSpec adj = spec.adjoint();
    auto fn = [adj, x, w, bid](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        // The transposed layer is conv2d_input_grad of `adj`; its adjoint is adj's forward.
        if (g.needs_grad(x)) {
            Tensor dx = kernels::conv2d_forward(dy, adj, g.value_of(w), nullptr);
            Tensor& gx = g.grad_buffer(x);
            for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
        }
        if (g.needs_grad(w)) kernels::conv2d_weight_grad(dy, g.value_of(x), adj, g.grad_buffer(w));
        if (bid && g.needs_grad(*bid)) kernels::bias_grad(dy, g.grad_buffer(*bid));
    };
    if (bias) return g.record(std::move(out), {input, weights, *bias}, fn);
    return g.record(std::move(out), {input, weights}, fn);
}

std::string Activation::name() const {
    switch (kind) {
        case Kind::identity: return "identity";
        case Kind::relu: return "relu";
        case Kind::leaky_relu: return "leaky_relu";
        case Kind::tanh: return "tanh";
    }
    return "?";
}

Var apply_activation(Var input, Activation act) {
    if (act.kind == Activation::Kind::leaky_relu && !(act.slope > 0 && act.slope < 1))
        throw Error("leaky_relu slope must lie in (0,1)");
    if (act.kind == Activation::Kind::identity) return input;
    const Tensor& x = input.value();
    Tensor y(x.shape());
    switch (act.kind) {
        case Activation::Kind::relu:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
            break;
        case Activation::Kind::leaky_relu:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : act.slope * x[i];
            break;
        case Activation::Kind::tanh:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
            break;
        case Activation::Kind::identity: break;
    }
    const std::size_t xid = input.id;
    return input.graph->record(std::move(y), {input}, [act, xid](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        const Tensor& xv = g.value_of(xid);
        const Tensor& yv = g.value_of(self);
        Tensor& dx = g.grad_buffer(xid);
        switch (act.kind) {
            case Activation::Kind::relu:
                for (std::size_t i = 0; i < dy.size(); ++i)
                    if (xv[i] > 0) dx[i] += dy[i];
                break;
            case Activation::Kind::leaky_relu:
                for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xv[i] > 0 ? dy[i] : act.slope * dy[i];
                break;
            case Activation::Kind::tanh:
                for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1 - yv[i] * yv[i]);
                break;
            case Activation::Kind::identity: break;
        }
    });
}

Var softmax_channels(Var logits) {
    const Tensor& z = logits.value();
    require_rank(z, 4, "softmax_channels");
    const std::size_t n_batch = z.dim(0), k = z.dim(1), plane = z.dim(2) * z.dim(3);
    if (k < 2) throw ShapeError("softmax_channels: need at least 2 channels");
    Tensor p(z.shape());
    for (std::size_t n = 0; n < n_batch; ++n) {
        const Real* zp = z.raw() + n * k * plane;
        Real* pp = p.raw() + n * k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            Real m = zp[i];
            for (std::size_t c = 1; c < k; ++c) m = std::max(m, zp[c * plane + i]);
            Real s = 0;
            for (std::size_t c = 0; c < k; ++c) {
                pp[c * plane + i] = std::exp(zp[c * plane + i] - m);
                s += pp[c * plane + i];
            }
            for (std::size_t c = 0; c < k; ++c) pp[c * plane + i] /= s;
        }
    }
    const std::size_t zid = logits.id;
    return logits.graph->record(std::move(p), {logits}, [zid, n_batch, k, plane](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        const Tensor& pv = g.value_of(self);
        Tensor& dz = g.grad_buffer(zid);
        for (std::size_t n = 0; n < n_batch; ++n) {
            const std::size_t base = n * k * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                Real inner = 0;
                for (std::size_t c = 0; c < k; ++c) inner += pv[base + c * plane + i] * dy[base + c * plane + i];
                for (std::size_t c = 0; c < k; ++c) {
                    const std::size_t j = base + c * plane + i;
                    dz[j] += pv[j] * (dy[j] - inner);
                }
            }
        }
    });
}

Var concat_channels(Var first, Var second) {
    const Tensor& a = first.value();
    const Tensor& b = second.value();
    require_rank(a, 4, "concat_channels");
    require_rank(b, 4, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: batch/spatial mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    const std::size_t n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
    Tensor out({n_batch, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < n_batch; ++n) {
        std::copy_n(a.raw() + n * ca * plane, ca * plane, out.raw() + n * (ca + cb) * plane);
        std::copy_n(b.raw() + n * cb * plane, cb * plane, out.raw() + (n * (ca + cb) + ca) * plane);
    }
    const std::size_t aid = first.id, bid = second.id;
    return first.graph->record(std::move(out), {first, second},
                               [aid, bid, n_batch, ca, cb, plane](Graph& g, std::size_t self) {
                                   const Tensor& dy = g.grad_of(self);
                                   for (std::size_t n = 0; n < n_batch; ++n) {
                                       const Real* src = dy.raw() + n * (ca + cb) * plane;
                                       if (g.needs_grad(aid)) {
                                           Real* da = g.grad_buffer(aid).raw() + n * ca * plane;
                                           for (std::size_t i = 0; i < ca * plane; ++i) da[i] += src[i];
                                       }
                                       if (g.needs_grad(bid)) {
                                           Real* db = g.grad_buffer(bid).raw() + n * cb * plane;
                                           for (std::size_t i = 0; i < cb * plane; ++i) db[i] += src[ca * plane + i];
                                       }
                                   }
                               });
}

Var batch_norm(Var input, Var gamma, Var beta, BatchNormState& state, bool training) {
    const Tensor& x = input.value();
    require_rank(x, 4, "batch_norm");
    const std::size_t n_batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
    require_shape(gamma.value(), {channels}, "batch_norm gamma");
    require_shape(beta.value(), {channels}, "batch_norm beta");
    if (state.running_mean.shape() != Shape{channels}) {
        state.running_mean = Tensor({channels}, 0.0);
        state.running_var = Tensor({channels}, 1.0);
    }
    const Real m = static_cast<Real>(n_batch * plane);
    Tensor mean({channels}), inv_std({channels});
    for (std::size_t c = 0; c < channels; ++c) {
        if (training) {
            Real s = 0;
            for (std::size_t n = 0; n < n_batch; ++n)
                for (std::size_t i = 0; i < plane; ++i) s += x[(n * channels + c) * plane + i];
            const Real mu = s / m;
            Real v = 0;
            for (std::size_t n = 0; n < n_batch; ++n)
                for (std::size_t i = 0; i < plane; ++i) {
                    const Real d = x[(n * channels + c) * plane + i] - mu;
                    v += d * d;
                }
            v /= m;
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(v + state.eps);
            const Real unbiased = m > 1 ? v * m / (m - 1) : v;
            state.running_mean[c] = (1 - state.momentum) * state.running_mean[c] + state.momentum * mu;
            state.running_var[c] = (1 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        } else {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        }
    }
    Tensor xhat(x.shape()), y(x.shape());
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t j = (n * channels + c) * plane + i;
                xhat[j] = (x[j] - mean[c]) * inv_std[c];
                y[j] = gamma.value()[c] * xhat[j] + beta.value()[c];
            }
    const std::size_t xid = input.id, gid = gamma.id, bid = beta.id;
    return input.graph->record(
        std::move(y), {input, gamma, beta},
        [xid, gid, bid, xhat = std::move(xhat), inv_std, training, n_batch, channels, plane, m](Graph& g,
                                                                                               std::size_t self) {
            const Tensor& dy = g.grad_of(self);
            const Tensor& gam = g.value_of(gid);
            for (std::size_t c = 0; c < channels; ++c) {
                Real sum_dy = 0, sum_dy_xhat = 0;
                for (std::size_t n = 0; n < n_batch; ++n)
                    for (std::size_t i = 0; i < plane; ++i) {
                        const std::size_t j = (n * channels + c) * plane + i;
                        sum_dy += dy[j];
                        sum_dy_xhat += dy[j] * xhat[j];
                    }
                if (g.needs_grad(gid)) g.grad_buffer(gid)[c] += sum_dy_xhat;
                if (g.needs_grad(bid)) g.grad_buffer(bid)[c] += sum_dy;
                if (!g.needs_grad(xid)) continue;
                Tensor& dx = g.grad_buffer(xid);
                const Real k = gam[c] * inv_std[c];
                for (std::size_t n = 0; n < n_batch; ++n)
                    for (std::size_t i = 0; i < plane; ++i) {
                        const std::size_t j = (n * channels + c) * plane + i;
                        dx[j] += training ? k * (dy[j] - sum_dy / m - xhat[j] * sum_dy_xhat / m) : k * dy[j];
                    }
            }
        });
}

Var add(Var a, Var b) {
    require_shape(b.value(), a.shape(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    const std::size_t aid = a.id, bid = b.id;
    return a.graph->record(std::move(out), {a, b}, [aid, bid](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        for (std::size_t id : {aid, bid}) {
            if (!g.needs_grad(id)) continue;
            Tensor& d = g.grad_buffer(id);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
    });
}

Var scale(Var a, Real factor) {
    Tensor out = a.value();
    for (auto& v : out.data()) v *= factor;
    const std::size_t aid = a.id;
    return a.graph->record(std::move(out), {a}, [aid, factor](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        Tensor& d = g.grad_buffer(aid);
        for (std::size_t i = 0; i < dy.size(); ++i) d[i] += factor * dy[i];
    });
}

Var sum(Var a) {
    Tensor out({1}, bgfg::sum(a.value()));
    const std::size_t aid = a.id;
    return a.graph->record(std::move(out), {a}, [aid](Graph& g, std::size_t self) {
        const Real dy = g.grad_of(self)[0];
        Tensor& d = g.grad_buffer(aid);
        for (auto& v : d.data()) v += dy;
    });
}

// ---------------------------------------------------------------------------
// Bilinear resize

ResizeAxis ResizeAxis::bilinear(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ShapeError("resize: extents must be positive");
    ResizeAxis a;
    a.in = in;
    a.out = out;
    a.lo.resize(out);
    a.hi.resize(out);
    a.frac.resize(out);
    const Real ratio = static_cast<Real>(in) / static_cast<Real>(out);
    for (std::size_t o = 0; o < out; ++o) {
        Real src = (static_cast<Real>(o) + 0.5) * ratio - 0.5;
        if (src < 0) src = 0;
        std::size_t lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        a.lo[o] = lo;
        a.hi[o] = std::min(lo + 1, in - 1);
        a.frac[o] = in == out ? 0.0 : src - static_cast<Real>(lo);
    }
    return a;
}

namespace {

// out[p, o, w] from in[p, i, w]: resize the middle axis of a [planes, in, inner] block.
void resize_middle(const Real* src, Real* dst, std::size_t planes, std::size_t inner, const ResizeAxis& ax) {
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t o = 0; o < ax.out; ++o) {
            const Real* a = src + (p * ax.in + ax.lo[o]) * inner;
            const Real* b = src + (p * ax.in + ax.hi[o]) * inner;
            Real* d = dst + (p * ax.out + o) * inner;
            const Real f = ax.frac[o];
            for (std::size_t k = 0; k < inner; ++k) d[k] = a[k] + f * (b[k] - a[k]);
        }
}

void resize_middle_adjoint(const Real* dout, Real* din, std::size_t planes, std::size_t inner,
                           const ResizeAxis& ax) {
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t o = 0; o < ax.out; ++o) {
            Real* a = din + (p * ax.in + ax.lo[o]) * inner;
            Real* b = din + (p * ax.in + ax.hi[o]) * inner;
            const Real* d = dout + (p * ax.out + o) * inner;
            const Real f = ax.frac[o];
            for (std::size_t k = 0; k < inner; ++k) {
                a[k] += (1 - f) * d[k];
                b[k] += f * d[k];
            }
        }
}

Shape resized_shape(const Shape& s, const ResizeAxis& rows, const ResizeAxis& cols) {
    if (s.size() < 2) throw ShapeError("resize: need at least 2 axes");
    if (s[s.size() - 2] != rows.in || s[s.size() - 1] != cols.in)
        throw ShapeError("resize: input extent " + shape_to_string(s) + " does not match table");
    Shape out = s;
    out[s.size() - 2] = rows.out;
    out[s.size() - 1] = cols.out;
    return out;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, const ResizeAxis& rows, const ResizeAxis& cols) {
    Shape out_shape = resized_shape(input.shape(), rows, cols);
    if (rows.identity() && cols.identity()) return input;
    const std::size_t planes = input.size() / (rows.in * cols.in);
    // rows first: [planes, in_h, in_w] -> [planes, out_h, in_w]
    Tensor tmp({planes, rows.out, cols.in});
    resize_middle(input.raw(), tmp.raw(), planes, cols.in, rows);
    // cols: treat each row as a plane with inner extent 1
    Tensor out(out_shape);
    resize_middle(tmp.raw(), out.raw(), planes * rows.out, 1, cols);
    return out;
}

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() < 2) throw ShapeError("resize: need at least 2 axes");
    return bilinear_resize(input, ResizeAxis::bilinear(input.dim(input.rank() - 2), out_h),
                           ResizeAxis::bilinear(input.dim(input.rank() - 1), out_w));
}

Var bilinear_resize(Var input, const ResizeAxis& rows, const ResizeAxis& cols) {
    Tensor out = bilinear_resize(input.value(), rows, cols);
    const std::size_t xid = input.id;
    return input.graph->record(std::move(out), {input}, [xid, rows, cols](Graph& g, std::size_t self) {
        const Tensor& dy = g.grad_of(self);
        Tensor& dx = g.grad_buffer(xid);
        if (rows.identity() && cols.identity()) {
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
            return;
        }
        const std::size_t planes = dx.size() / (rows.in * cols.in);
        Tensor tmp({planes, rows.out, cols.in});
        resize_middle_adjoint(dy.raw(), tmp.raw(), planes * rows.out, 1, cols);
        resize_middle_adjoint(tmp.raw(), dx.raw(), planes, cols.in, rows);
    });
}

}  // namespace bgfg
