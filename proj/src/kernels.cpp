#include "stain/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace stain::numerics {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                                ", got shape " + shape_to_string(t.shape()));
  }
}

void require_axis(std::size_t got, std::size_t want, const char* op, const char* axis) {
  if (got != want) {
    throw std::invalid_argument(std::string(op) + ": mismatch on axis " + axis + " (expected " +
                                std::to_string(want) + ", got " + std::to_string(got) + ")");
  }
}

void check_conv_args(const Tensor& input, const Tensor& kernels, const Tensor& bias, const char* op) {
  require_rank(input, 3, op, "input");
  require_rank(kernels, 4, op, "kernels");
  require_rank(bias, 1, op, "bias");
  require_axis(kernels.dim(1), input.dim(0), op, "kernels.in_channels");
  require_axis(kernels.dim(2), kKernel, op, "kernels.height");
  require_axis(kernels.dim(3), kKernel, op, "kernels.width");
  require_axis(bias.dim(0), kernels.dim(0), op, "bias.out_channels");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  check_conv_args(input, kernels, bias, "conv2d");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < kKernel) throw std::invalid_argument("conv2d: input height " + std::to_string(h) + " < 2");
  if (w < kKernel) throw std::invalid_argument("conv2d: input width " + std::to_string(w) + " < 2");
  const std::size_t cout = kernels.dim(0), oh = h - 1, ow = w - 1;
  Tensor out({cout, oh, ow});
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double* oplane = o + oc * oh * ow;
    std::fill(oplane, oplane + oh * ow, bias[oc]);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* kk = k + (oc * cin + c) * 4;
      const double k00 = kk[0], k01 = kk[1], k10 = kk[2], k11 = kk[3];
      const double* iplane = in + c * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        const double* r0 = iplane + y * w;
        const double* r1 = r0 + w;
        double* orow = oplane + y * ow;
        for (std::size_t x = 0; x < ow; ++x) {
          orow[x] += r0[x] * k00 + r0[x + 1] * k01 + r1[x] * k10 + r1[x + 1] * k11;
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out, Tensor* grad_input,
                     Tensor* grad_kernels, Tensor* grad_bias) {
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), oh = h - 1, ow = w - 1;
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  const double* g = grad_out.data().data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const double* gplane = g + oc * oh * ow;
    if (grad_bias) {
      double s = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) s += gplane[i];
      (*grad_bias)[oc] += s;
    }
    for (std::size_t c = 0; c < cin; ++c) {
      const double* iplane = in + c * h * w;
      if (grad_kernels) {
        double s00 = 0, s01 = 0, s10 = 0, s11 = 0;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* r0 = iplane + y * w;
          const double* r1 = r0 + w;
          const double* grow = gplane + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            s00 += grow[x] * r0[x];
            s01 += grow[x] * r0[x + 1];
            s10 += grow[x] * r1[x];
            s11 += grow[x] * r1[x + 1];
          }
        }
        double* gk = grad_kernels->data().data() + (oc * cin + c) * 4;
        gk[0] += s00;
        gk[1] += s01;
        gk[2] += s10;
        gk[3] += s11;
      }
      if (grad_input) {
        const double* kk = k + (oc * cin + c) * 4;
        const double k00 = kk[0], k01 = kk[1], k10 = kk[2], k11 = kk[3];
        double* giplane = grad_input->data().data() + c * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
          double* r0 = giplane + y * w;
          double* r1 = r0 + w;
          const double* grow = gplane + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const double gv = grow[x];
            r0[x] += gv * k00;
            r0[x + 1] += gv * k01;
            r1[x] += gv * k10;
            r1[x + 1] += gv * k11;
          }
        }
      }
    }
  }
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  check_conv_args(input, kernels, bias, "conv_transpose2d");
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), oh = h + 1, ow = w + 1;
  Tensor out({cout, oh, ow});
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double* oplane = o + oc * oh * ow;
    std::fill(oplane, oplane + oh * ow, bias[oc]);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* kk = k + (oc * cin + c) * 4;
      const double k00 = kk[0], k01 = kk[1], k10 = kk[2], k11 = kk[3];
      const double* iplane = in + c * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const double* irow = iplane + y * w;
        double* r0 = oplane + y * ow;
        double* r1 = r0 + ow;
        for (std::size_t x = 0; x < w; ++x) {
          const double v = irow[x];
          r0[x] += v * k00;
          r0[x + 1] += v * k01;
          r1[x] += v * k10;
          r1[x + 1] += v * k11;
        }
      }
    }
  }
  return out;
}

void conv_transpose2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                               Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias) {
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), oh = h + 1, ow = w + 1;
  const double* in = input.data().data();
  const double* k = kernels.data().data();
  const double* g = grad_out.data().data();
  for (std::size_t oc = 0; oc < cout; ++oc) {
    const double* gplane = g + oc * oh * ow;
    if (grad_bias) {
      double s = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) s += gplane[i];
      (*grad_bias)[oc] += s;
    }
    for (std::size_t c = 0; c < cin; ++c) {
      const double* iplane = in + c * h * w;
      const double* kk = k + (oc * cin + c) * 4;
      const double k00 = kk[0], k01 = kk[1], k10 = kk[2], k11 = kk[3];
      double s00 = 0, s01 = 0, s10 = 0, s11 = 0;
      double* giplane = grad_input ? grad_input->data().data() + c * h * w : nullptr;
      for (std::size_t y = 0; y < h; ++y) {
        const double* irow = iplane + y * w;
        const double* g0 = gplane + y * ow;
        const double* g1 = g0 + ow;
        for (std::size_t x = 0; x < w; ++x) {
          s00 += irow[x] * g0[x];
          s01 += irow[x] * g0[x + 1];
          s10 += irow[x] * g1[x];
          s11 += irow[x] * g1[x + 1];
        }
        if (giplane) {
          double* girow = giplane + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            girow[x] += g0[x] * k00 + g0[x + 1] * k01 + g1[x] * k10 + g1[x + 1] * k11;
          }
        }
      }
      if (grad_kernels) {
        double* gk = grad_kernels->data().data() + (oc * cin + c) * 4;
        gk[0] += s00;
        gk[1] += s01;
        gk[2] += s10;
        gk[3] += s11;
      }
    }
  }
}

PoolResult maxpool2d_with_indices(const Tensor& input) {
  require_rank(input, 3, "maxpool2d", "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < 2) throw std::invalid_argument("maxpool2d: input height " + std::to_string(h) + " < 2");
  if (w < 2) throw std::invalid_argument("maxpool2d: input width " + std::to_string(w) + " < 2");
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({c, oh, ow}), std::vector<std::size_t>(c * oh * ow)};
  const double* in = input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = (ch * h + 2 * y) * w + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i) {
          if (in[cand[i]] > in[best]) best = cand[i];
        }
        const std::size_t oi = (ch * oh + y) * ow + x;
        r.output[oi] = in[best];
        r.argmax[oi] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2d(const Tensor& input) { return maxpool2d_with_indices(input).output; }

void maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out, Tensor& grad_input) {
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
}

Tensor matvec(const Tensor& weight, const Tensor& input) {
  require_rank(weight, 2, "dense", "weight");
  require_rank(input, 1, "dense", "input");
  require_axis(input.dim(0), weight.dim(1), "dense", "input.features");
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  Tensor out({m});
  const double* wv = weight.data().data();
  const double* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = wv + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    out[i] = s;
  }
  return out;
}

void matvec_backward(const Tensor& weight, const Tensor& input, const Tensor& grad_out, Tensor* grad_weight,
                     Tensor* grad_input) {
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  const double* wv = weight.data().data();
  const double* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double g = grad_out[i];
    if (g == 0.0) continue;
    if (grad_weight) {
      double* gw = grad_weight->data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) gw[j] += g * x[j];
    }
    if (grad_input) {
      const double* row = wv + i * n;
      double* gi = grad_input->data().data();
      for (std::size_t j = 0; j < n; ++j) gi[j] += g * row[j];
    }
  }
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(bias, 1, "dense", "bias");
  require_rank(weight, 2, "dense", "weight");
  require_axis(bias.dim(0), weight.dim(0), "dense", "bias.outputs");
  Tensor out = matvec(weight, input);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
  return out;
}

double sigmoid(double x) {
  // Clamped so the result stays strictly inside (0, 1) for every finite x.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, lo, hi);
}

Tensor activation(const Tensor& input, Activation kind) {
  Tensor out = Tensor::zeros_like(input);
  const auto in = input.data();
  auto o = out.data();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = sigmoid(in[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
      break;
  }
  return out;
}

void activation_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out, Activation kind,
                         Tensor& grad_input) {
  const auto in = input.data();
  const auto out = output.data();
  const auto g = grad_out.data();
  auto gi = grad_input.data();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) gi[i] += in[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) gi[i] += g[i] * out[i] * (1.0 - out[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) gi[i] += g[i] * (1.0 - out[i] * out[i]);
      break;
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels", "a");
  require_rank(b, 3, "concat_channels", "b");
  require_axis(b.dim(1), a.dim(1), "concat_channels", "height");
  require_axis(b.dim(2), a.dim(2), "concat_channels", "width");
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  auto o = out.data();
  std::copy(a.data().begin(), a.data().end(), o.begin());
  std::copy(b.data().begin(), b.data().end(), o.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count) {
  require_rank(input, 3, "slice_channels", "input");
  if (count == 0 || begin + count > input.dim(0)) {
    throw std::invalid_argument("slice_channels: channel range out of bounds");
  }
  const std::size_t plane = input.dim(1) * input.dim(2);
  const auto first = input.data().begin() + static_cast<std::ptrdiff_t>(begin * plane);
  return Tensor({count, input.dim(1), input.dim(2)}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * plane)));
}

Tensor crop_pad(const Tensor& input, std::size_t height, std::size_t width) {
  require_rank(input, 3, "crop_pad", "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, height, width});
  const std::size_t ch = std::min(h, height), cw = std::min(w, width);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < ch; ++y) {
      const double* src = input.data().data() + (k * h + y) * w;
      std::copy(src, src + cw, out.data().data() + (k * height + y) * width);
    }
  }
  return out;
}

Tensor channel_mean(const Tensor& input) {
  require_rank(input, 3, "channel_mean", "input");
  const std::size_t c = input.dim(0), plane = input.dim(1) * input.dim(2);
  Tensor out({1, input.dim(1), input.dim(2)});
  for (std::size_t k = 0; k < c; ++k) {
    const double* src = input.data().data() + k * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < plane; ++i) out[i] *= inv;
  return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
  require_rank(input, 3, "upsample_nearest2x", "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t x = 0; x < 2 * w; ++x) out.at(k, y, x) = input.at(k, y / 2, x / 2);
    }
  }
  return out;
}

double bce_loss(double prediction, int label) {
  const double p = std::clamp(prediction, kBceEpsilon, 1.0 - kBceEpsilon);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double bce_loss_grad(double prediction, int label) {
  const double p = std::clamp(prediction, kBceEpsilon, 1.0 - kBceEpsilon);
  return label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

}  // namespace stain::numerics
