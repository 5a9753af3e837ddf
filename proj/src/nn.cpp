#include "fdl/nn.hpp"

#include <utility>

namespace fdl {

std::string to_string(ArchFamily f) {
    switch (f) {
        case ArchFamily::VggLike: return "vgg_like";
        case ArchFamily::ResNetLike: return "resnet_like";
        case ArchFamily::AlexNetLike: return "alexnet_like";
    }
    return "?";
}

ArchFamily arch_family_from_string(const std::string& s) {
    if (s == "vgg_like") return ArchFamily::VggLike;
    if (s == "resnet_like") return ArchFamily::ResNetLike;
    if (s == "alexnet_like") return ArchFamily::AlexNetLike;
    throw ConfigError("unknown architecture family: " + s);
}

int ArchSpec::scaled(int base) const {
    if (width_num <= 0 || width_den <= 0) throw ConfigError("width_scale must be positive");
    long long v = (static_cast<long long>(base) * width_num + width_den / 2) / width_den;
    return v < 1 ? 1 : static_cast<int>(v);
}

// ---------------------------------------------------------------------------
// builder
// ---------------------------------------------------------------------------

LayerGraphBuilder::LayerGraphBuilder(Shape input_shape)
    : cur_(input_shape), input_shape_(std::move(input_shape)) {
    if (cur_.size() != 3) throw DimensionError("model input shape must be [h,w,c]");
    shape_numel(cur_);
}

void LayerGraphBuilder::plan_param(const std::string& name, Shape shape, int fan_in) {
    for (const auto& p : plan_)
        if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
    plan_.push_back({name, std::move(shape), fan_in});
}

LayerGraphBuilder& LayerGraphBuilder::conv(int kernel, int c_out, int stride, Padding pad) {
    if (cur_.size() != 3) throw DimensionError("conv layer requires a rank-3 activation");
    int h = cur_[0], w = cur_[1], c_in = cur_[2];
    int p = 0;
    if (pad == Padding::Same) {
        if (kernel % 2 == 0) throw ConfigError("same padding requires an odd kernel");
        p = (kernel - 1) / 2;
    }
    if (kernel > h + 2 * p || kernel > w + 2 * p)
        throw ConfigError("conv kernel larger than padded activation " + shape_str(cur_));
    std::string id = "conv" + std::to_string(counter_++);
    plan_param(id + ".w", {kernel, kernel, c_in, c_out}, kernel * kernel * c_in);
    plan_param(id + ".b", {c_out}, 0);
    layers_.push_back(layers::Conv{id + ".w", id + ".b", kernel, stride, pad});
    cur_ = {(h + 2 * p - kernel) / stride + 1, (w + 2 * p - kernel) / stride + 1, c_out};
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::relu() {
    bool after_conv = !layers_.empty() && std::holds_alternative<layers::Conv>(layers_.back());
    layers_.push_back(layers::Relu{});
    if (after_conv && cur_.size() == 3) {
        tap_ = static_cast<int>(layers_.size()) - 1;
        tap_shape_ = cur_;
    }
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::max_pool(int window, int stride) {
    if (cur_.size() != 3) throw DimensionError("pool layer requires a rank-3 activation");
    if (window > cur_[0] || window > cur_[1])
        throw ConfigError("pool window exceeds activation " + shape_str(cur_));
    layers_.push_back(layers::Pool{window, stride, PoolKind::Max});
    cur_ = {(cur_[0] - window) / stride + 1, (cur_[1] - window) / stride + 1, cur_[2]};
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::avg_pool(int window, int stride) {
    if (cur_.size() != 3) throw DimensionError("pool layer requires a rank-3 activation");
    if (window > cur_[0] || window > cur_[1])
        throw ConfigError("pool window exceeds activation " + shape_str(cur_));
    layers_.push_back(layers::Pool{window, stride, PoolKind::Avg});
    cur_ = {(cur_[0] - window) / stride + 1, (cur_[1] - window) / stride + 1, cur_[2]};
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::residual(int c_out) {
    if (cur_.size() != 3) throw DimensionError("residual block requires a rank-3 activation");
    int c_in = cur_[2];
    std::string id = "res" + std::to_string(counter_++);
    layers::Residual r;
    r.w1 = id + ".w1";
    r.b1 = id + ".b1";
    r.w2 = id + ".w2";
    r.b2 = id + ".b2";
    plan_param(r.w1, {3, 3, c_in, c_out}, 9 * c_in);
    plan_param(r.b1, {c_out}, 0);
    plan_param(r.w2, {3, 3, c_out, c_out}, 9 * c_out);
    plan_param(r.b2, {c_out}, 0);
    if (c_in != c_out) {
        r.proj_w = id + ".proj_w";
        r.proj_b = id + ".proj_b";
        r.has_proj = true;
        plan_param(r.proj_w, {1, 1, c_in, c_out}, c_in);
        plan_param(r.proj_b, {c_out}, 0);
    }
    layers_.push_back(r);
    cur_ = {cur_[0], cur_[1], c_out};
    tap_ = static_cast<int>(layers_.size()) - 1;
    tap_shape_ = cur_;
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::flatten() {
    layers_.push_back(layers::Flatten{});
    cur_ = {static_cast<int>(shape_numel(cur_))};
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::dense(int out_features) {
    if (cur_.size() != 1) throw DimensionError("dense layer requires a flat activation");
    std::string id = "dense" + std::to_string(counter_++);
    plan_param(id + ".w", {cur_[0], out_features}, cur_[0]);
    plan_param(id + ".b", {out_features}, 0);
    layers_.push_back(layers::Dense{id + ".w", id + ".b"});
    cur_ = {out_features};
    return *this;
}

LayerGraphBuilder& LayerGraphBuilder::global_avg_pool() {
    if (cur_.size() != 3) throw DimensionError("global_avg_pool requires a rank-3 activation");
    layers_.push_back(layers::GlobalAvgPool{});
    cur_ = {cur_[2]};
    return *this;
}

LayerGraph LayerGraphBuilder::build(std::optional<std::uint64_t> seed) const {
    if (cur_.size() != 1) throw ConfigError("model must end in a flat logits vector");
    // tap_ may stay -1 for conv-free classifier heads; base models always
    // have a convolutional activation to tap.
    LayerGraph m;
    m.layers_ = layers_;
    m.input_shape_ = input_shape_;
    m.tap_ = tap_;
    m.tap_shape_ = tap_shape_;
    m.n_classes_ = cur_[0];
    Rng rng = seed ? Rng(*seed) : Rng::from_entropy();
    for (const auto& p : plan_) {
        Tensor t(p.shape);
        if (p.fan_in > 0) {
            double stddev = std::sqrt(2.0 / static_cast<double>(p.fan_in));
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
        }
        t.ensure_grad();
        m.params_.emplace(p.name, std::move(t));
    }
    return m;
}

// ---------------------------------------------------------------------------
// LayerGraph
// ---------------------------------------------------------------------------

LayerGraph::ForwardResult LayerGraph::forward(Graph& g, const Tensor& input) const {
    if (input.shape() != input_shape_)
        throw DimensionError("input shape " + shape_str(input.shape()) +
                             " does not match model input " + shape_str(input_shape_));
    Tensor x = input;
    Tensor tap;
    auto param = [this](const std::string& name) -> const Tensor& {
        return params_.at(name);
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& layer = layers_[i];
        if (auto* c = std::get_if<layers::Conv>(&layer)) {
            x = g.conv2d(x, param(c->w), param(c->b), c->stride, c->pad);
        } else if (std::get_if<layers::Relu>(&layer)) {
            x = g.relu(x);
        } else if (auto* p = std::get_if<layers::Pool>(&layer)) {
            x = g.pool2d(x, p->window, p->stride, p->kind);
        } else if (auto* r = std::get_if<layers::Residual>(&layer)) {
            Tensor main = g.relu(g.conv2d(x, param(r->w1), param(r->b1), 1, Padding::Same));
            main = g.conv2d(main, param(r->w2), param(r->b2), 1, Padding::Same);
            Tensor skip = r->has_proj
                              ? g.conv2d(x, param(r->proj_w), param(r->proj_b), 1, Padding::Valid)
                              : x;
            x = g.relu(g.add(main, skip));
        } else if (std::get_if<layers::Flatten>(&layer)) {
            x = x.flattened();
        } else if (auto* d = std::get_if<layers::Dense>(&layer)) {
            const Tensor& w = param(d->w);
            Tensor y = g.matmul(x.reshaped({1, x.extent(0)}), w);
            y = g.add(y, param(d->b).reshaped({1, w.extent(1)}));
            x = y.reshaped({w.extent(1)});
        } else if (std::get_if<layers::GlobalAvgPool>(&layer)) {
            x = g.global_avg_pool(x);
        }
        if (static_cast<int>(i) == tap_) tap = x;
    }
    return {x, tap};
}

Tensor LayerGraph::infer(const Tensor& input) const {
    Graph g;
    return forward(g, input).logits.clone();
}

std::vector<Tensor> LayerGraph::param_list() {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (auto& [name, t] : params_) out.push_back(t);
    return out;
}

std::size_t LayerGraph::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

LayerGraph LayerGraph::clone() const {
    LayerGraph m;
    m.layers_ = layers_;
    m.input_shape_ = input_shape_;
    m.tap_ = tap_;
    m.tap_shape_ = tap_shape_;
    m.n_classes_ = n_classes_;
    for (const auto& [name, t] : params_) {
        Tensor c = t.clone();
        c.ensure_grad();
        m.params_.emplace(name, std::move(c));
    }
    return m;
}

bool LayerGraph::params_equal(const LayerGraph& a, const LayerGraph& b) {
    if (a.params_.size() != b.params_.size()) return false;
    auto ia = a.params_.begin();
    auto ib = b.params_.begin();
    for (; ia != a.params_.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.shape() != ib->second.shape()) return false;
        if (ia->second.values() != ib->second.values()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// families
// ---------------------------------------------------------------------------

LayerGraph build_model(const ArchSpec& spec, std::optional<std::uint64_t> seed) {
    if (spec.input_h < 8 || spec.input_w < 8)
        throw ConfigError("input smaller than 8x8 cannot feed the downsampling chain");
    if (spec.n_classes < 2) throw ConfigError("n_classes must be >= 2");
    LayerGraphBuilder b({spec.input_h, spec.input_w, spec.input_c});
    switch (spec.family) {
        case ArchFamily::VggLike:
            b.conv(3, spec.scaled(16)).relu()
             .conv(3, spec.scaled(16)).relu()
             .max_pool()
             .conv(3, spec.scaled(32)).relu()
             .max_pool()
             .conv(3, spec.scaled(32)).relu()
             .max_pool()
             .flatten()
             .dense(spec.n_classes);
            break;
        case ArchFamily::ResNetLike:
            b.conv(3, spec.scaled(16)).relu()
             .residual(spec.scaled(16))
             .max_pool()
             .residual(spec.scaled(32))
             .max_pool()
             .residual(spec.scaled(32))
             .max_pool()
             .flatten()
             .dense(spec.n_classes);
            break;
        case ArchFamily::AlexNetLike:
            b.conv(5, spec.scaled(16)).relu()
             .max_pool()
             .conv(5, spec.scaled(32)).relu()
             .max_pool()
             .conv(3, spec.scaled(48)).relu()
             .conv(3, spec.scaled(32)).relu()
             .max_pool()
             .flatten()
             .dense(spec.scaled(64)).relu()
             .dense(spec.n_classes);
            break;
    }
    return b.build(seed);
}

}  // namespace fdl
