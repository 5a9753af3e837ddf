#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fdl/rng.hpp"
#include "fdl/tensor.hpp"

namespace fdl {

/// Base-model architecture families. These are desk-scale analogs of the
/// full networks: same structural idiom (plain conv stacks, residual blocks
/// with identity skips, large-kernel front end + wide dense head), 4-8 conv
/// layers, final conv width 32 at width_scale 1.
enum class ArchFamily { VggLike, ResNetLike, AlexNetLike };

std::string to_string(ArchFamily f);
ArchFamily arch_family_from_string(const std::string& s);

struct ArchSpec {
    ArchFamily family = ArchFamily::VggLike;
    // width_scale as an exact rational so configs hash/serialize stably
    int width_num = 1;
    int width_den = 1;
    int input_h = 32;
    int input_w = 32;
    int input_c = 3;
    int n_classes = 10;

    int scaled(int base) const;
    /// Channel count of the last convolutional activation.
    int final_conv_width() const { return scaled(32); }
};

namespace layers {
struct Conv {
    std::string w, b;
    int kernel = 3;
    int stride = 1;
    Padding pad = Padding::Same;
};
struct Relu {};
struct Pool {
    int window = 2;
    int stride = 2;
    PoolKind kind = PoolKind::Max;
};
/// conv-relu-conv plus skip; a 1x1 projection conv is inserted on the skip
/// path when the channel counts differ. Output = relu(main + skip).
struct Residual {
    std::string w1, b1, w2, b2;
    std::string proj_w, proj_b;  // empty when the skip is the identity
    bool has_proj = false;
};
struct Flatten {};
struct Dense {
    std::string w, b;
};
struct GlobalAvgPool {};

using Any = std::variant<Conv, Relu, Pool, Residual, Flatten, Dense, GlobalAvgPool>;
}  // namespace layers

/// One base CNN: an ordered layer list plus its named parameter tensors.
/// Layer shape compatibility is checked at construction; the tap index marks
/// the post-activation output of the last convolutional layer.
class LayerGraph {
public:
    struct ForwardResult {
        Tensor logits;
        Tensor last_conv;  // rank-3 [h,w,d], post-ReLU, autodiff-connected
    };

    /// Runs all layers on one input; records onto `g`.
    ForwardResult forward(Graph& g, const Tensor& input) const;

    /// Logits only, recorded on a local throwaway graph (no gradients kept).
    Tensor infer(const Tensor& input) const;

    const std::map<std::string, Tensor>& params() const { return params_; }
    std::map<std::string, Tensor>& params() { return params_; }
    std::vector<Tensor> param_list();

    const Shape& input_shape() const { return input_shape_; }
    int n_classes() const { return n_classes_; }
    int last_conv_tap() const { return tap_; }
    const Shape& last_conv_shape() const { return tap_shape_; }
    std::size_t param_count() const;

    /// Deep copy (fresh parameter buffers).
    LayerGraph clone() const;

    /// Bitwise parameter equality; layer structure must match.
    static bool params_equal(const LayerGraph& a, const LayerGraph& b);

private:
    friend class LayerGraphBuilder;
    std::vector<layers::Any> layers_;
    std::map<std::string, Tensor> params_;
    Shape input_shape_;
    Shape tap_shape_;
    int n_classes_ = 0;
    int tap_ = -1;
};

/// Incremental builder with shape inference. He-normal initialization
/// happens in build(): weights ~ Normal(0, 2/fan_in) drawn in layer order
/// from the seeded generator, biases zero.
class LayerGraphBuilder {
public:
    explicit LayerGraphBuilder(Shape input_shape);

    LayerGraphBuilder& conv(int kernel, int c_out, int stride = 1, Padding pad = Padding::Same);
    LayerGraphBuilder& relu();
    LayerGraphBuilder& max_pool(int window = 2, int stride = 2);
    LayerGraphBuilder& avg_pool(int window = 2, int stride = 2);
    LayerGraphBuilder& residual(int c_out);
    LayerGraphBuilder& flatten();
    LayerGraphBuilder& dense(int out_features);
    LayerGraphBuilder& global_avg_pool();

    /// seed == nullopt draws from entropy (the "none" init strategy).
    LayerGraph build(std::optional<std::uint64_t> seed) const;

private:
    struct ParamPlan {
        std::string name;
        Shape shape;
        int fan_in;  // 0 => zero-init (biases)
    };
    void plan_param(const std::string& name, Shape shape, int fan_in);
    Shape cur_;
    Shape input_shape_;
    std::vector<layers::Any> layers_;
    std::vector<ParamPlan> plan_;
    Shape tap_shape_;
    int tap_ = -1;
    int counter_ = 0;
};

/// Builds the family model described by `spec`. Throws ConfigError when the input is
/// too small for the family's downsampling chain (spatial minimum 8x8).
LayerGraph build_model(const ArchSpec& spec, std::optional<std::uint64_t> seed);

}  // namespace fdl
