#include "fdl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace fdl {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) {
        if (e <= 0) throw DimensionError("shape extent must be positive, got " + shape_str(s));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)),
      grad_(std::make_shared<GradStore>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(values))),
      grad_(std::make_shared<GradStore>()) {
    if (data_->size() != shape_numel(shape_)) {
        throw DimensionError("value count " + std::to_string(data_->size()) +
                             " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
}

double Tensor::at(std::initializer_list<int> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

double& Tensor::at(std::initializer_list<int> idx) {
    if (static_cast<int>(idx.size()) != rank())
        throw DimensionError("index rank mismatch for shape " + shape_str(shape_));
    std::size_t flat = 0;
    int axis = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)])
            throw DimensionError("index out of range for shape " + shape_str(shape_));
        flat = flat * static_cast<std::size_t>(shape_[static_cast<std::size_t>(axis)]) +
               static_cast<std::size_t>(i);
        ++axis;
    }
    return (*data_)[flat];
}

double Tensor::value() const {
    if (!defined() || size() != 1) {
        throw ValidationError("expected a scalar tensor, got shape " + shape_str(shape_));
    }
    return (*data_)[0];
}

bool Tensor::all_finite() const {
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::ensure_grad() {
    grad_->g.assign(size(), 0.0);
    grad_->active = true;
}

void Tensor::zero_grad() {
    if (grad_->active) std::fill(grad_->g.begin(), grad_->g.end(), 0.0);
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_active()) throw StateError("gradient accumulator not active");
    return grad_->g;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != size())
        throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                             " changes element count");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    t.grad_ = grad_;
    return t;
}

Tensor Tensor::flattened() const { return reshaped({static_cast<int>(size())}); }

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.grad_ = std::make_shared<GradStore>();
    return t;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

struct Graph::BackwardCtx {
    Graph& g;
    std::vector<std::vector<double>>& table;
    std::vector<double>& grad_of(int node_id) {
        auto& v = table[static_cast<std::size_t>(node_id)];
        if (v.empty()) v.assign(g.nodes_[static_cast<std::size_t>(node_id)].out_size, 0.0);
        return v;
    }
};

int Graph::node_of(const Tensor& t) const {
    auto it = ids_.find(t.data_.get());
    return it == ids_.end() ? -1 : it->second;
}

int Graph::ensure_node(const Tensor& t) {
    if (!t.defined()) throw ValidationError("undefined tensor used in graph op");
    auto it = ids_.find(t.data_.get());
    if (it != ids_.end()) return it->second;
    Node n;
    n.out_size = t.size();
    n.sink = t.grad_;
    n.keep_alive = t.data_;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    ids_.emplace(t.data_.get(), id);
    return id;
}

Tensor Graph::make_result(Shape shape, std::vector<double> values, std::vector<int> inputs,
                          std::function<void(const std::vector<double>&, BackwardCtx&)> pull) {
    Tensor out(std::move(shape), std::move(values));
    Node n;
    n.inputs = std::move(inputs);
    n.out_size = out.size();
    n.sink = out.grad_;
    n.keep_alive = out.data_;
    n.pull = std::move(pull);
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    ids_.emplace(out.data_.get(), id);
    return out;
}

void Graph::check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    int ia = ensure_node(a), ib = ensure_node(b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result(a.shape(), std::move(out), {ia, ib},
                       [ia, ib](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           auto& db = ctx.grad_of(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               da[i] += g[i];
                               db[i] += g[i];
                           }
                       });
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    int ia = ensure_node(a), ib = ensure_node(b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make_result(a.shape(), std::move(out), {ia, ib},
                       [ia, ib](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           auto& db = ctx.grad_of(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               da[i] += g[i];
                               db[i] -= g[i];
                           }
                       });
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    int ia = ensure_node(a), ib = ensure_node(b);
    auto ad = a.data_, bd = b.data_;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make_result(a.shape(), std::move(out), {ia, ib},
                       [ia, ib, ad, bd](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           auto& db = ctx.grad_of(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               da[i] += g[i] * (*bd)[i];
                               db[i] += g[i] * (*ad)[i];
                           }
                       });
}

Tensor Graph::div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    int ia = ensure_node(a), ib = ensure_node(b);
    auto ad = a.data_, bd = b.data_;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    return make_result(a.shape(), std::move(out), {ia, ib},
                       [ia, ib, ad, bd](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           auto& db = ctx.grad_of(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               double bi = (*bd)[i];
                               da[i] += g[i] / bi;
                               db[i] -= g[i] * (*ad)[i] / (bi * bi);
                           }
                       });
}

Tensor Graph::add(const Tensor& a, double b) {
    int ia = ensure_node(a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b;
    return make_result(a.shape(), std::move(out), {ia},
                       [ia](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                       });
}

Tensor Graph::sub(const Tensor& a, double b) { return add(a, -b); }

Tensor Graph::mul(const Tensor& a, double b) {
    int ia = ensure_node(a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b;
    return make_result(a.shape(), std::move(out), {ia},
                       [ia, b](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b;
                       });
}

Tensor Graph::div(const Tensor& a, double b) { return mul(a, 1.0 / b); }

Tensor Graph::exp(const Tensor& a) {
    int ia = ensure_node(a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
    auto out_copy = std::make_shared<std::vector<double>>(out);
    return make_result(a.shape(), std::move(out), {ia},
                       [ia, out_copy](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                               da[i] += g[i] * (*out_copy)[i];
                       });
}

Tensor Graph::max_with(const Tensor& a, double c) {
    int ia = ensure_node(a);
    auto ad = a.data_;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], c);
    // Subgradient at a == c is 0 (so relu'(0) == 0).
    return make_result(a.shape(), std::move(out), {ia},
                       [ia, ad, c](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if ((*ad)[i] > c) da[i] += g[i];
                       });
}

Tensor Graph::relu(const Tensor& a) { return max_with(a, 0.0); }

Tensor Graph::sqrt(const Tensor& a) {
    int ia = ensure_node(a);
    auto ad = a.data_;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(a[i]);
    auto out_copy = std::make_shared<std::vector<double>>(out);
    return make_result(a.shape(), std::move(out), {ia},
                       [ia, ad, out_copy](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if ((*ad)[i] > 0.0) da[i] += g[i] * 0.5 / (*out_copy)[i];
                       });
}

Tensor Graph::elementwise(OpKind kind, const Tensor& a, const Tensor& b) {
    switch (kind) {
        case OpKind::Add: return add(a, b);
        case OpKind::Sub: return sub(a, b);
        case OpKind::Mul: return mul(a, b);
        case OpKind::Div: return div(a, b);
        default:
            throw ValidationError("elementwise: op kind does not take a tensor second operand");
    }
}

Tensor Graph::elementwise(OpKind kind, const Tensor& a, double b) {
    switch (kind) {
        case OpKind::Add: return add(a, b);
        case OpKind::Sub: return sub(a, b);
        case OpKind::Mul: return mul(a, b);
        case OpKind::Div: return div(a, b);
        case OpKind::Exp: return exp(a);
        case OpKind::Relu: return relu(a);
        case OpKind::MaxWith: return max_with(a, b);
    }
    throw ValidationError("elementwise: unknown op kind");
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul requires rank-2 tensors, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    int n = a.extent(0), k = a.extent(1), k2 = b.extent(0), p = b.extent(1);
    if (k != k2)
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    int ia = ensure_node(a), ib = ensure_node(b);
    auto ad = a.data_, bd = b.data_;
    std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(p), 0.0);
    for (int i = 0; i < n; ++i)
        for (int kk = 0; kk < k; ++kk) {
            double av = (*ad)[static_cast<std::size_t>(i * k + kk)];
            const double* brow = bd->data() + static_cast<std::size_t>(kk) * p;
            double* orow = out.data() + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    return make_result({n, p}, std::move(out), {ia, ib},
                       [ia, ib, ad, bd, n, k, p](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           auto& db = ctx.grad_of(ib);
                           for (int i = 0; i < n; ++i)
                               for (int kk = 0; kk < k; ++kk) {
                                   const double* brow = bd->data() + static_cast<std::size_t>(kk) * p;
                                   const double* grow = g.data() + static_cast<std::size_t>(i) * p;
                                   double av = (*ad)[static_cast<std::size_t>(i * k + kk)];
                                   double acc = 0.0;
                                   double* dbrow = db.data() + static_cast<std::size_t>(kk) * p;
                                   for (int j = 0; j < p; ++j) {
                                       acc += grow[j] * brow[j];
                                       dbrow[j] += av * grow[j];
                                   }
                                   da[static_cast<std::size_t>(i * k + kk)] += acc;
                               }
                       });
}

namespace {
struct ConvDims {
    int h, w, cin, k, cout, stride, pad, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                   Padding padding) {
    if (input.rank() != 3) throw DimensionError("conv2d input must be rank 3 [h,w,c]");
    if (kernels.rank() != 4) throw DimensionError("conv2d kernels must be rank 4 [k,k,cin,cout]");
    if (bias.rank() != 1) throw DimensionError("conv2d bias must be rank 1 [cout]");
    ConvDims d{};
    d.h = input.extent(0);
    d.w = input.extent(1);
    d.cin = input.extent(2);
    d.k = kernels.extent(0);
    d.cout = kernels.extent(3);
    d.stride = stride;
    if (kernels.extent(1) != d.k)
        throw DimensionError("conv2d kernels must be square");
    if (kernels.extent(2) != d.cin)
        throw DimensionError("conv2d kernel c_in " + std::to_string(kernels.extent(2)) +
                             " does not match input channels " + std::to_string(d.cin));
    if (bias.extent(0) != d.cout)
        throw DimensionError("conv2d bias length does not match c_out");
    if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
    if (padding == Padding::Same) {
        if (d.k % 2 == 0) throw DimensionError("same padding requires an odd kernel extent");
        d.pad = (d.k - 1) / 2;
    } else {
        d.pad = 0;
    }
    if (d.k > d.h + 2 * d.pad || d.k > d.w + 2 * d.pad)
        throw DimensionError("conv2d kernel larger than padded input");
    d.oh = (d.h + 2 * d.pad - d.k) / d.stride + 1;
    d.ow = (d.w + 2 * d.pad - d.k) / d.stride + 1;
    return d;
}
}  // namespace

Tensor Graph::conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride,
                     Padding padding) {
    ConvDims d = conv_dims(input, kernels, bias, stride, padding);
    int ii = ensure_node(input), ik = ensure_node(kernels), ib = ensure_node(bias);
    auto in = input.data_, kw = kernels.data_, bz = bias.data_;
    std::vector<double> out(static_cast<std::size_t>(d.oh) * d.ow * d.cout);
    for (int oy = 0; oy < d.oh; ++oy)
        for (int ox = 0; ox < d.ow; ++ox) {
            double* orow = out.data() + (static_cast<std::size_t>(oy) * d.ow + ox) * d.cout;
            for (int co = 0; co < d.cout; ++co) orow[co] = (*bz)[static_cast<std::size_t>(co)];
            for (int ky = 0; ky < d.k; ++ky) {
                int iy = oy * d.stride - d.pad + ky;
                if (iy < 0 || iy >= d.h) continue;
                for (int kx = 0; kx < d.k; ++kx) {
                    int ix = ox * d.stride - d.pad + kx;
                    if (ix < 0 || ix >= d.w) continue;
                    const double* irow = in->data() + (static_cast<std::size_t>(iy) * d.w + ix) * d.cin;
                    const double* krow =
                        kw->data() + (static_cast<std::size_t>(ky) * d.k + kx) * d.cin * d.cout;
                    for (int ci = 0; ci < d.cin; ++ci) {
                        double a = irow[ci];
                        const double* kv = krow + static_cast<std::size_t>(ci) * d.cout;
                        for (int co = 0; co < d.cout; ++co) orow[co] += a * kv[co];
                    }
                }
            }
        }
    return make_result(
        {d.oh, d.ow, d.cout}, std::move(out), {ii, ik, ib},
        [ii, ik, ib, in, kw, d](const std::vector<double>& g, BackwardCtx& ctx) {
            auto& din = ctx.grad_of(ii);
            auto& dk = ctx.grad_of(ik);
            auto& db = ctx.grad_of(ib);
            for (int oy = 0; oy < d.oh; ++oy)
                for (int ox = 0; ox < d.ow; ++ox) {
                    const double* grow = g.data() + (static_cast<std::size_t>(oy) * d.ow + ox) * d.cout;
                    for (int co = 0; co < d.cout; ++co) db[static_cast<std::size_t>(co)] += grow[co];
                    for (int ky = 0; ky < d.k; ++ky) {
                        int iy = oy * d.stride - d.pad + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (int kx = 0; kx < d.k; ++kx) {
                            int ix = ox * d.stride - d.pad + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            std::size_t ibase = (static_cast<std::size_t>(iy) * d.w + ix) * d.cin;
                            std::size_t kbase =
                                (static_cast<std::size_t>(ky) * d.k + kx) * d.cin * d.cout;
                            for (int ci = 0; ci < d.cin; ++ci) {
                                double a = (*in)[ibase + ci];
                                const double* kv = kw->data() + kbase + static_cast<std::size_t>(ci) * d.cout;
                                double* dkv = dk.data() + kbase + static_cast<std::size_t>(ci) * d.cout;
                                double acc = 0.0;
                                for (int co = 0; co < d.cout; ++co) {
                                    double gv = grow[co];
                                    dkv[co] += a * gv;
                                    acc += kv[co] * gv;
                                }
                                din[ibase + ci] += acc;
                            }
                        }
                    }
                }
        });
}

Tensor Graph::pool2d(const Tensor& input, int window, int stride, PoolKind kind) {
    if (input.rank() != 2 && input.rank() != 3)
        throw DimensionError("pool2d input must be rank 2 or 3");
    int h = input.extent(0), w = input.extent(1);
    int c = input.rank() == 3 ? input.extent(2) : 1;
    if (window < 1 || stride < 1) throw DimensionError("pool2d window and stride must be >= 1");
    if (window > h || window > w)
        throw DimensionError("pool2d window " + std::to_string(window) +
                             " exceeds input extent " + shape_str(input.shape()));
    int oh = (h - window) / stride + 1;
    int ow = (w - window) / stride + 1;
    int ii = ensure_node(input);
    auto in = input.data_;
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
    // For max pooling remember the chosen source index per output element;
    // ties resolve to the first maximum in row-major scan order.
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    if (kind == PoolKind::Max) argmax->resize(out.size());
    double inv_area = 1.0 / (static_cast<double>(window) * window);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < c; ++ch) {
                std::size_t oidx = (static_cast<std::size_t>(oy) * ow + ox) * c + ch;
                if (kind == PoolKind::Max) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (int wy = 0; wy < window; ++wy)
                        for (int wx = 0; wx < window; ++wx) {
                            std::size_t idx =
                                (static_cast<std::size_t>(oy * stride + wy) * w + ox * stride + wx) * c + ch;
                            if ((*in)[idx] > best) {
                                best = (*in)[idx];
                                best_idx = idx;
                            }
                        }
                    out[oidx] = best;
                    (*argmax)[oidx] = best_idx;
                } else {
                    double acc = 0.0;
                    for (int wy = 0; wy < window; ++wy)
                        for (int wx = 0; wx < window; ++wx)
                            acc += (*in)[(static_cast<std::size_t>(oy * stride + wy) * w +
                                          ox * stride + wx) * c + ch];
                    out[oidx] = acc * inv_area;
                }
            }
    Shape out_shape = input.rank() == 3 ? Shape{oh, ow, c} : Shape{oh, ow};
    if (kind == PoolKind::Max) {
        return make_result(std::move(out_shape), std::move(out), {ii},
                           [ii, argmax](const std::vector<double>& g, BackwardCtx& ctx) {
                               auto& din = ctx.grad_of(ii);
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   din[(*argmax)[i]] += g[i];
                           });
    }
    return make_result(std::move(out_shape), std::move(out), {ii},
                       [ii, oh, ow, c, w, window, stride, inv_area](const std::vector<double>& g,
                                                                    BackwardCtx& ctx) {
                           auto& din = ctx.grad_of(ii);
                           for (int oy = 0; oy < oh; ++oy)
                               for (int ox = 0; ox < ow; ++ox)
                                   for (int ch = 0; ch < c; ++ch) {
                                       double gv = g[(static_cast<std::size_t>(oy) * ow + ox) * c + ch] * inv_area;
                                       for (int wy = 0; wy < window; ++wy)
                                           for (int wx = 0; wx < window; ++wx)
                                               din[(static_cast<std::size_t>(oy * stride + wy) * w +
                                                    ox * stride + wx) * c + ch] += gv;
                                   }
                       });
}

namespace {
std::vector<double> stable_softmax(const std::vector<double>& logits) {
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}
}  // namespace

Tensor Graph::softmax_cross_entropy(const Tensor& logits, const Tensor& onehot) {
    if (logits.shape() != onehot.shape())
        throw DimensionError("softmax_cross_entropy: logits and one-hot shapes differ");
    if (logits.size() < 2) throw ValidationError("softmax_cross_entropy needs >= 2 classes");
    int hot = -1;
    for (std::size_t i = 0; i < onehot.size(); ++i) {
        double y = onehot[i];
        if (y == 1.0) {
            if (hot >= 0) throw ValidationError("one-hot vector has multiple ones");
            hot = static_cast<int>(i);
        } else if (y != 0.0) {
            throw ValidationError("one-hot vector entries must be exactly 0 or 1");
        }
    }
    if (hot < 0) throw ValidationError("one-hot vector has no 1 entry");

    int il = ensure_node(logits);
    auto ld = logits.data_;
    double m = (*ld)[0];
    for (double v : *ld) m = std::max(m, v);
    double z = 0.0;
    for (double v : *ld) z += std::exp(v - m);
    double loss = -((*ld)[static_cast<std::size_t>(hot)] - m - std::log(z));
    auto prob = std::make_shared<std::vector<double>>(stable_softmax(*ld));
    return make_result({1}, {loss}, {il},
                       [il, prob, hot](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& dl = ctx.grad_of(il);
                           for (std::size_t i = 0; i < dl.size(); ++i) {
                               double y = (static_cast<int>(i) == hot) ? 1.0 : 0.0;
                               dl[i] += g[0] * ((*prob)[i] - y);
                           }
                       });
}

Tensor Graph::softmax(const Tensor& logits) {
    int il = ensure_node(logits);
    std::vector<double> p = stable_softmax(logits.values());
    auto pc = std::make_shared<std::vector<double>>(p);
    return make_result(logits.shape(), std::move(p), {il},
                       [il, pc](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& dl = ctx.grad_of(il);
                           double dot = 0.0;
                           for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * (*pc)[j];
                           for (std::size_t i = 0; i < g.size(); ++i)
                               dl[i] += (*pc)[i] * (g[i] - dot);
                       });
}

Tensor Graph::sum(const Tensor& a) {
    int ia = ensure_node(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return make_result({1}, {acc}, {ia},
                       [ia](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (double& v : da) v += g[0];
                       });
}

Tensor Graph::take(const Tensor& a, std::size_t flat) {
    if (flat >= a.size()) throw ValidationError("take: index out of range");
    int ia = ensure_node(a);
    return make_result({1}, {a[flat]}, {ia},
                       [ia, flat](const std::vector<double>& g, BackwardCtx& ctx) {
                           ctx.grad_of(ia)[flat] += g[0];
                       });
}

Tensor Graph::spread(const Tensor& scalar, int n) {
    double v = scalar.value();
    int ia = ensure_node(scalar);
    return make_result({n}, std::vector<double>(static_cast<std::size_t>(n), v), {ia},
                       [ia](const std::vector<double>& g, BackwardCtx& ctx) {
                           double acc = 0.0;
                           for (double gv : g) acc += gv;
                           ctx.grad_of(ia)[0] += acc;
                       });
}

Tensor Graph::channel_sum(const Tensor& hwc) {
    if (hwc.rank() != 3) throw DimensionError("channel_sum input must be rank 3 [h,w,c]");
    int h = hwc.extent(0), w = hwc.extent(1), c = hwc.extent(2);
    int ia = ensure_node(hwc);
    std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double* row = hwc.data() + p * static_cast<std::size_t>(c);
        for (int ch = 0; ch < c; ++ch) out[p] += row[ch];
    }
    return make_result({h, w}, std::move(out), {ia},
                       [ia, c](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t p = 0; p < g.size(); ++p) {
                               double* row = da.data() + p * static_cast<std::size_t>(c);
                               for (int ch = 0; ch < c; ++ch) row[ch] += g[p];
                           }
                       });
}

Tensor Graph::global_avg_pool(const Tensor& hwc) {
    if (hwc.rank() != 3) throw DimensionError("global_avg_pool input must be rank 3 [h,w,c]");
    int h = hwc.extent(0), w = hwc.extent(1), c = hwc.extent(2);
    int ia = ensure_node(hwc);
    double inv = 1.0 / (static_cast<double>(h) * w);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
        for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch)] += hwc[p * c + ch];
    for (double& v : out) v *= inv;
    return make_result({c}, std::move(out), {ia},
                       [ia, h, w, c, inv](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
                               for (int ch = 0; ch < c; ++ch)
                                   da[p * c + ch] += g[static_cast<std::size_t>(ch)] * inv;
                       });
}

Tensor Graph::mask_above_mean(const Tensor& a, double* tau_out) {
    if (a.rank() != 2) throw DimensionError("mask_above_mean input must be rank 2 [h,w]");
    int ia = ensure_node(a);
    double tau = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tau += a[i];
    tau /= static_cast<double>(a.size());
    if (tau_out) *tau_out = tau;
    auto kept = std::make_shared<std::vector<bool>>(a.size());
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > tau) {
            out[i] = a[i];
            (*kept)[i] = true;
        }
    }
    return make_result(a.shape(), std::move(out), {ia},
                       [ia, kept](const std::vector<double>& g, BackwardCtx& ctx) {
                           auto& da = ctx.grad_of(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if ((*kept)[i]) da[i] += g[i];
                       });
}

void Graph::run_backward(std::vector<std::vector<double>>& table) {
    BackwardCtx ctx{*this, table};
    for (std::size_t id = nodes_.size(); id-- > 0;) {
        auto& entry = table[id];
        if (entry.empty()) continue;
        Node& n = nodes_[id];
        if (n.pull) n.pull(entry, ctx);
        if (n.sink && n.sink->active) {
            auto& acc = n.sink->g;
            for (std::size_t i = 0; i < entry.size(); ++i) acc[i] += entry[i];
        }
    }
}

void Graph::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ValidationError("backward requires a scalar loss");
    int id = node_of(loss);
    if (id < 0) throw ValidationError("backward: loss is not a node of this graph");
    std::vector<std::vector<double>> table(nodes_.size());
    table[static_cast<std::size_t>(id)] = {1.0};
    run_backward(table);
}

void Graph::backward_seeded(std::span<const std::pair<Tensor, std::vector<double>>> seeds) {
    std::vector<std::vector<double>> table(nodes_.size());
    for (const auto& [t, seed] : seeds) {
        int id = node_of(t);
        if (id < 0) throw ValidationError("backward_seeded: tensor is not a node of this graph");
        if (seed.size() != t.size())
            throw DimensionError("backward_seeded: seed length does not match tensor size");
        auto& entry = table[static_cast<std::size_t>(id)];
        if (entry.empty()) entry.assign(seed.size(), 0.0);
        for (std::size_t i = 0; i < seed.size(); ++i) entry[i] += seed[i];
    }
    run_backward(table);
}

void Graph::reset() {
    nodes_.clear();
    ids_.clear();
}

}  // namespace fdl
