#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle to a dense row-major array of doubles. Ops that
// touch a tensor with requires_grad() append a node to the thread's active
// Tape; Tape::backward() walks those nodes once, in reverse order, and
// accumulates vector-Jacobian products into every operand that wants them.
// Leaf parameters are never recorded themselves, they only receive gradients.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xdc {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::optional<std::size_t> node_id;
  std::string name;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(Shape shape, double value) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  static Tensor parameter(std::string name, Shape shape,
                          std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    t.impl_->requires_grad = true;
    t.impl_->name = std::move(name);
    return t;
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double item() const {
    if (impl_->data.size() != 1)
      throw ShapeError("item: tensor of shape " + to_string(shape()) +
                       " is not a scalar");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  const std::string& name() const { return impl_->name; }
  std::optional<std::size_t> node_id() const { return impl_->node_id; }

  // Empty span when no gradient has reached this tensor.
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  // A constant copy detached from any tape.
  Tensor detach() const { return Tensor(shape(), impl_->data); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  using Backward = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t record(const Tensor& out, Backward fn) {
    const std::size_t id = nodes_.size();
    out.impl()->requires_grad = true;
    out.impl()->node_id = id;
    nodes_.push_back({out.impl(), std::move(fn)});
    return id;
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs every reachable vjp once.
  void backward(const Tensor& loss) {
    if (loss.size() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " +
                       to_string(loss.shape()));
    if (!loss.node_id() || *loss.node_id() >= nodes_.size() ||
        nodes_[*loss.node_id()].out != loss.impl())
      throw std::logic_error("backward: loss is not on this tape");
    for (auto& n : nodes_) n.out->grad.clear();
    loss.impl()->grad_buffer()[0] = 1.0;
    for (std::size_t i = *loss.node_id() + 1; i-- > 0;) {
      if (nodes_[i].out->grad.empty()) continue;
      nodes_[i].backward();
    }
  }

  void clear() { nodes_.clear(); }

  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> out;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Makes `tape` the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) {
    Tape::active() = &tape;
  }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

struct NamedGradient {
  std::string name;
  std::vector<double> grad;
};
using GradientMap = std::vector<NamedGradient>;

// Runs the backward pass and collects one gradient per parameter, in order.
// Parameters the loss does not depend on get zeros.
inline GradientMap backward(Tape& tape, const Tensor& loss,
                            std::span<const Tensor> params) {
  for (auto p : params) p.zero_grad();
  tape.backward(loss);
  GradientMap out;
  out.reserve(params.size());
  for (const auto& p : params) {
    auto g = p.grad().empty() ? std::vector<double>(p.size(), 0.0)
                              : std::vector<double>(p.grad().begin(),
                                                    p.grad().end());
    out.push_back({p.name(), std::move(g)});
  }
  return out;
}

}  // namespace xdc
