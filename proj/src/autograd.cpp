#include "stain/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "stain/error.hpp"

namespace stain::numerics {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Tensor::zeros_like(value)),
      velocity(Tensor::zeros_like(value)) {}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Tensor value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_grad_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& param) {
  Var v = push(param.value, true, nullptr);
  if (record_grad_) nodes_[v.id].param = &param;
  return v;
}

bool Tape::requires_grad(std::initializer_list<Var> vars) const {
  if (!record_grad_) return false;
  for (const Var& v : vars) {
    if (nodes_[v.id].requires_grad) return true;
  }
  return false;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on a different tape");
  if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a single value");
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    // Nodes the loss does not reach keep an empty gradient and are skipped.
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto dst = n.param->grad.data();
      const auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

namespace {

Tensor* grad_if(Tape& t, Var v) { return t.requires_grad(v.id) ? &t.grad_buffer(v.id) : nullptr; }

}  // namespace

Var conv2d(Var input, Var kernels, Var bias) {
  Tape& t = *input.tape;
  Tensor out = conv2d(input.value(), kernels.value(), bias.value());
  return t.push(std::move(out), t.requires_grad({input, kernels, bias}), [=](Tape& tp, std::size_t self) {
    conv2d_backward(tp.value(input.id), tp.value(kernels.id), tp.grad(self), grad_if(tp, input),
                    grad_if(tp, kernels), grad_if(tp, bias));
  });
}

Var conv_transpose2d(Var input, Var kernels, Var bias) {
  Tape& t = *input.tape;
  Tensor out = conv_transpose2d(input.value(), kernels.value(), bias.value());
  return t.push(std::move(out), t.requires_grad({input, kernels, bias}), [=](Tape& tp, std::size_t self) {
    conv_transpose2d_backward(tp.value(input.id), tp.value(kernels.id), tp.grad(self), grad_if(tp, input),
                              grad_if(tp, kernels), grad_if(tp, bias));
  });
}

Var maxpool2d(Var input) {
  Tape& t = *input.tape;
  PoolResult r = maxpool2d_with_indices(input.value());
  const bool rg = t.requires_grad({input});
  return t.push(std::move(r.output), rg, [input, argmax = std::move(r.argmax)](Tape& tp, std::size_t self) {
    maxpool2d_backward(argmax, tp.grad(self), tp.grad_buffer(input.id));
  });
}

Var matvec(Var weight, Var input) {
  Tape& t = *input.tape;
  Tensor out = matvec(weight.value(), input.value());
  return t.push(std::move(out), t.requires_grad({weight, input}), [=](Tape& tp, std::size_t self) {
    matvec_backward(tp.value(weight.id), tp.value(input.id), tp.grad(self), grad_if(tp, weight),
                    grad_if(tp, input));
  });
}

Var dense(Var input, Var weight, Var bias) { return add(matvec(weight, input), bias); }

Var activation(Var input, Activation kind) {
  Tape& t = *input.tape;
  Tensor out = activation(input.value(), kind);
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    activation_backward(tp.value(input.id), tp.value(self), tp.grad(self), kind, tp.grad_buffer(input.id));
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().shape() != b.value().shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(a.value().shape()) + " vs " +
                                shape_to_string(b.value().shape()));
  }
  Tensor out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.push(std::move(out), t.requires_grad({a, b}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v.id)) continue;
      auto gv = tp.grad_buffer(v.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var concat_channels(Var a, Var b) {
  Tape& t = *a.tape;
  Tensor out = concat_channels(a.value(), b.value());
  return t.push(std::move(out), t.requires_grad({a, b}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const std::size_t na = tp.value(a.id).size();
    if (tp.requires_grad(a.id)) {
      auto ga = tp.grad_buffer(a.id).data();
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b.id)) {
      auto gb = tp.grad_buffer(b.id).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

Var slice_channels(Var input, std::size_t begin, std::size_t count) {
  Tape& t = *input.tape;
  Tensor out = slice_channels(input.value(), begin, count);
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const Tensor& in = tp.value(input.id);
    const std::size_t offset = begin * in.dim(1) * in.dim(2);
    auto gi = tp.grad_buffer(input.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[offset + i] += g[i];
  });
}

Var crop_pad(Var input, std::size_t height, std::size_t width) {
  Tape& t = *input.tape;
  Tensor out = crop_pad(input.value(), height, width);
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gi = tp.grad_buffer(input.id);
    const std::size_t c = gi.dim(0), h = gi.dim(1), w = gi.dim(2);
    const std::size_t ch = std::min(h, height), cw = std::min(w, width);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) gi.at(k, y, x) += g.at(k, y, x);
      }
    }
  });
}

Var channel_mean(Var input) {
  Tape& t = *input.tape;
  Tensor out = channel_mean(input.value());
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    Tensor& gi = tp.grad_buffer(input.id);
    const std::size_t c = gi.dim(0), plane = g.size();
    const double inv = 1.0 / static_cast<double>(c);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < plane; ++i) gi[k * plane + i] += g[i] * inv;
    }
  });
}

Var upsample_nearest2x(Var input) {
  Tape& t = *input.tape;
  Tensor out = upsample_nearest2x(input.value());
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gi = tp.grad_buffer(input.id);
    for (std::size_t k = 0; k < g.dim(0); ++k) {
      for (std::size_t y = 0; y < g.dim(1); ++y) {
        for (std::size_t x = 0; x < g.dim(2); ++x) gi.at(k, y / 2, x / 2) += g.at(k, y, x);
      }
    }
  });
}

Var reshape(Var input, Shape shape) {
  Tape& t = *input.tape;
  const Tensor& in = input.value();
  Tensor out(std::move(shape), in.values());
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    auto gi = tp.grad_buffer(input.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
}

Var scale(Var input, double factor) {
  Tape& t = *input.tape;
  Tensor out = input.value();
  for (auto& v : out.data()) v *= factor;
  return t.push(std::move(out), t.requires_grad({input}), [=](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    auto gi = tp.grad_buffer(input.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
  });
}

Var max_of(std::span<const Var> scalars) {
  if (scalars.empty()) throw std::invalid_argument("max_of: empty input");
  Tape& t = *scalars[0].tape;
  std::size_t best = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) throw std::invalid_argument("max_of: inputs must be single values");
    if (scalars[i].scalar() > scalars[best].scalar()) best = i;
  }
  const Var winner = scalars[best];
  // Only the winning input receives gradient.
  return t.push(Tensor({1}, winner.scalar()), t.requires_grad(winner.id), [winner](Tape& tp, std::size_t self) {
    tp.grad_buffer(winner.id)[0] += tp.grad(self)[0];
  });
}

Var bce_loss(Var prediction, int label) {
  Tape& t = *prediction.tape;
  if (prediction.value().size() != 1) throw std::invalid_argument("bce_loss: prediction must be a single value");
  const double p = prediction.scalar();
  return t.push(Tensor({1}, bce_loss(p, label)), t.requires_grad({prediction}),
                [prediction, label, p](Tape& tp, std::size_t self) {
                  tp.grad_buffer(prediction.id)[0] += tp.grad(self)[0] * bce_loss_grad(p, label);
                });
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double ss = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad.data()) ss += g * g;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.grad.data()) g *= s;
    }
  }
  return norm;
}

void sgd_step(std::span<Parameter> params, double lr, double momentum) {
  for (const Parameter& p : params) {
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
  }
  for (Parameter& p : params) {
    auto v = p.velocity.data();
    auto g = p.grad.data();
    auto w = p.value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      w[i] -= lr * v[i];
      g[i] = 0.0;
    }
  }
}

void zero_grad(std::span<Parameter> params) {
  for (Parameter& p : params) p.grad.fill(0.0);
}

}  // namespace stain::numerics
