#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Tensors are immutable values backed by shared storage. Differentiable
// computation happens on an explicit Tape: leaves are registered with
// Tape::var, primitive ops record nodes when any input lives on the tape,
// and Tape::backward walks the nodes in reverse creation order (creation
// order is topological by construction).
//
// Broadcasting is limited to a trailing-shape rule: a binary op accepts
// operands of equal shape, or a right operand whose shape is a suffix of
// the left one (the right operand repeats across the leading dimensions).
// Anything else requires an explicit reshape.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace crl {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t numel(const Shape& s);

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_ ? data_->size() : 0); }
  const std::vector<double>& data() const;
  double operator[](std::int64_t i) const { return data()[static_cast<std::size_t>(i)]; }

  // Value of a single-element tensor.
  double value() const;

  bool requires_grad() const { return node_ >= 0; }
  int node_id() const { return node_; }
  Tape* tape() const { return tape_; }

  // Same values, detached from any tape.
  Tensor detached() const;

 private:
  friend class Tape;
  friend Tensor record_op(Tape* tape, Tensor value, std::vector<int> input_nodes,
                          std::function<void(const std::vector<double>&, Tape&)> backward);
  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Gradients of a backward pass, keyed by leaf node id.
class GradientMap {
 public:
  const Tensor& at(const Tensor& leaf) const;
  const Tensor& at(int node_id) const;
  bool contains(int node_id) const { return grads_.count(node_id) > 0; }

 private:
  friend class Tape;
  std::unordered_map<int, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf that will receive a gradient.
  Tensor var(const Tensor& value);

  // Reverse pass from a scalar root. Returns gradients for every leaf
  // reachable from the root.
  GradientMap backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend Tensor record_op(Tape* tape, Tensor value,
                          std::vector<int> input_nodes,
                          std::function<void(const std::vector<double>&, Tape&)> backward);

  struct Node {
    Shape shape;
    std::vector<int> inputs;
    bool is_leaf = false;
    std::function<void(const std::vector<double>& grad_out, Tape&)> backward;
  };

  void accumulate(int node, const std::vector<double>& g);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> slots_;  // live only during backward

  friend void detail_accumulate(Tape& t, int node, const std::vector<double>& g);
};

// Elementwise with trailing-shape broadcast on the right operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D only

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double alpha = 0.2);
Tensor tanh_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor logsumexp(const Tensor& x, int axis);  // 2-D, axis in {0,1}, keeps dim
Tensor softmax(const Tensor& x, int axis);    // 2-D, axis in {0,1}

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor transpose(const Tensor& x);  // 2-D
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor stop_gradient(const Tensor& x);

// Conveniences built from the primitives above.
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor abs_op(const Tensor& x);

}  // namespace crl
