#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fdl/errors.hpp"

namespace fdl {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Graph;

/// Dense N-D array of doubles, row-major. Copies are shallow: they share the
/// value buffer and the gradient accumulator. Values are treated as immutable
/// while a Graph that recorded them is alive; the optimizer mutates parameter
/// buffers only between passes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    int extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

    const double* data() const { return data_->data(); }
    double* data() { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }
    std::vector<double>& values() { return *data_; }

    double operator[](std::size_t flat) const { return (*data_)[flat]; }
    double& operator[](std::size_t flat) { return (*data_)[flat]; }
    double at(std::initializer_list<int> idx) const;
    double& at(std::initializer_list<int> idx);

    /// Scalar extraction; throws ValidationError unless size() == 1.
    double value() const;

    bool all_finite() const;

    // --- gradient accumulator ---
    bool grad_active() const { return grad_ && grad_->active; }
    /// Allocate (zeroed) and activate the gradient accumulator.
    void ensure_grad();
    void zero_grad();
    const std::vector<double>& grad() const;

    /// View with a different shape over the same buffer (and the same autodiff
    /// node, since nodes are keyed by buffer identity).
    Tensor reshaped(Shape new_shape) const;
    Tensor flattened() const;

    /// Deep copy, detached from any graph, inactive gradient.
    Tensor clone() const;

private:
    friend class Graph;
    struct GradStore {
        std::vector<double> g;
        bool active = false;
    };

    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    std::shared_ptr<GradStore> grad_;
};

enum class OpKind { Add, Sub, Mul, Div, Exp, Relu, MaxWith };
enum class Padding { Valid, Same };
enum class PoolKind { Max, Avg };

/// Reverse-mode tape. Operations append nodes in execution order, so node ids
/// are already a topological order; backward() is one reverse sweep that
/// visits each reachable node exactly once. The tape is define-by-run: call
/// reset() (or use a fresh Graph) per forward pass. A Graph must stay on one
/// thread; independent Graphs may run concurrently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // elementwise, equal shapes
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor div(const Tensor& a, const Tensor& b);
    // elementwise against a scalar constant (the scalar gets no node)
    Tensor add(const Tensor& a, double b);
    Tensor sub(const Tensor& a, double b);
    Tensor mul(const Tensor& a, double b);
    Tensor div(const Tensor& a, double b);
    Tensor exp(const Tensor& a);
    Tensor relu(const Tensor& a);
    Tensor max_with(const Tensor& a, double c);
    /// Elementwise sqrt; subgradient at 0 is defined as 0 so that norms of
    /// zero vectors backpropagate finitely.
    Tensor sqrt(const Tensor& a);

    /// Uniform dispatch over the elementwise kinds. Unary kinds (Exp, Relu)
    /// ignore `b`; MaxWith requires the scalar overload.
    Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b);
    Tensor elementwise(OpKind kind, const Tensor& a, double b = 0.0);

    Tensor matmul(const Tensor& a, const Tensor& b);

    /// Cross-correlation (no kernel flip). input: [h,w,c_in], kernels:
    /// [k,k,c_in,c_out], bias: [c_out]. Same padding requires odd k and pads
    /// symmetrically with zeros; output extent floor((h+2p-k)/stride)+1.
    Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                  int stride, Padding padding);

    /// Square-window spatial pooling per channel on [h,w,c] (or [h,w]).
    /// Max-pool backward routes to the first maximum in row-major scan order.
    Tensor pool2d(const Tensor& input, int window, int stride, PoolKind kind);

    /// -sum_k y_k log softmax(logits)_k, max-subtracted; backward yhat - y.
    Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot);

    /// Softmax probabilities (stable); sums to 1.
    Tensor softmax(const Tensor& logits);

    Tensor sum(const Tensor& a);                       // -> scalar
    Tensor take(const Tensor& a, std::size_t flat);    // -> scalar a[flat]
    Tensor spread(const Tensor& scalar, int n);        // scalar -> [n] broadcast
    Tensor channel_sum(const Tensor& hwc);             // [h,w,c] -> [h,w]
    Tensor global_avg_pool(const Tensor& hwc);         // [h,w,c] -> [c]

    /// Mean-threshold mask: tau = mean(A); kept where A > tau (strict), else 0.
    /// tau is a constant of the forward pass (no gradient through the mean);
    /// kept positions pass gradient unchanged.
    Tensor mask_above_mean(const Tensor& a, double* tau_out = nullptr);

    /// Backward from a scalar loss; accumulates additively into the grad of
    /// every reachable tensor whose gradient accumulator is active.
    void backward(const Tensor& loss);

    /// Backward from several nodes at once, each seeded with an explicit
    /// output-gradient. Seed length must equal the tensor's size.
    void backward_seeded(std::span<const std::pair<Tensor, std::vector<double>>> seeds);

    /// Drop all recorded nodes (buffers they kept alive are released).
    void reset();

    std::size_t node_count() const { return nodes_.size(); }
    /// Node id of a tensor in this tape, or -1 if it was never recorded here.
    int node_of(const Tensor& t) const;

private:
    struct BackwardCtx;
    struct Node {
        std::vector<int> inputs;
        std::size_t out_size = 0;
        std::shared_ptr<Tensor::GradStore> sink;
        std::shared_ptr<std::vector<double>> keep_alive;
        std::function<void(const std::vector<double>&, BackwardCtx&)> pull;
    };

    int ensure_node(const Tensor& t);
    Tensor make_result(Shape shape, std::vector<double> values, std::vector<int> inputs,
                       std::function<void(const std::vector<double>&, BackwardCtx&)> pull);
    void run_backward(std::vector<std::vector<double>>& table);
    static void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

    std::vector<Node> nodes_;
    std::unordered_map<const std::vector<double>*, int> ids_;
};

}  // namespace fdl
