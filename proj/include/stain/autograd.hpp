#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stain/kernels.hpp"
#include "stain/tensor.hpp"

namespace stain::numerics {

// A trainable tensor with its accumulated gradient and optimizer state.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor velocity;
};

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  double scalar() const { return value()[0]; }
};

// Records executed primitives so gradients can be propagated in reverse.
// A tape built with record_grad=false keeps only forward values.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& param);

  // Seeds d(loss)/d(loss) = 1 and walks the tape backwards once. Parameter
  // gradients are added to Parameter::grad.
  void backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_grad_; }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(std::initializer_list<Var> vars) const;

  // Gradient buffer of a node, zero-initialised on first touch.
  Tensor& grad_buffer(std::size_t id);

  Var push(Tensor value, bool requires_grad, BackwardFn backward);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  bool record_grad_;
  std::deque<Node> nodes_;  // deque: value() references survive later pushes
};

// Differentiable counterparts of the kernels.
Var conv2d(Var input, Var kernels, Var bias);
Var conv_transpose2d(Var input, Var kernels, Var bias);
Var maxpool2d(Var input);
Var dense(Var input, Var weight, Var bias);
Var matvec(Var weight, Var input);
Var activation(Var input, Activation kind);
inline Var relu(Var x) { return activation(x, Activation::relu); }
inline Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }
inline Var tanh(Var x) { return activation(x, Activation::tanh); }
Var add(Var a, Var b);
Var concat_channels(Var a, Var b);
Var slice_channels(Var input, std::size_t begin, std::size_t count);
Var crop_pad(Var input, std::size_t height, std::size_t width);
Var channel_mean(Var input);
Var upsample_nearest2x(Var input);
Var reshape(Var input, Shape shape);
Var scale(Var input, double factor);
// Maximum over single-element tensors; subgradient to the first argmax.
Var max_of(std::span<const Var> scalars);
Var bce_loss(Var prediction, int label);

// v <- momentum * v + grad; value <- value - lr * v; grad <- 0.
// Throws NumericError naming the first parameter with a non-finite gradient,
// before any parameter is modified.
void sgd_step(std::span<Parameter> params, double lr, double momentum);

// Rescales all gradients so their joint L2 norm is at most max_norm (0 = no-op).
// Returns the norm before rescaling.
double clip_grad_norm(std::span<Parameter> params, double max_norm);
void zero_grad(std::span<Parameter> params);

}  // namespace stain::numerics
