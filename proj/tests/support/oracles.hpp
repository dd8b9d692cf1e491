// Independent reference implementations used as test oracles. Everything in
// here is deliberately written as plain nested loops over multi-indices,
// sharing no code with the library's kernels.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "evsnn/tensor.hpp"

namespace oracle {

using evsnn::Rng;
using evsnn::Tensor;

// |a - b| <= tol * max(1, |a|, |b|)
inline bool close_rel(double a, double b, double tol) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= tol * scale;
}

// Direct cross-correlation, symmetric zero padding.
inline Tensor conv2d_ref(const Tensor& in, const Tensor& k, int stride, int pad) {
  const auto& is = in.shape();
  const auto& ks = k.shape();
  const int64_t n = is[0], cin = is[1], h = is[2], w = is[3];
  const int64_t cout = ks[0], kh = ks[2], kw = ks[3];
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  Tensor out = Tensor::zeros({n, cout, oh, ow});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride + ky - pad;
                const int64_t ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += in.at({ni, ci, iy, ix}) * k.at({co, ci, ky, kx});
              }
          out.at({ni, co, oy, ox}) = acc;
        }
  return out;
}

inline Tensor conv3d_ref(const Tensor& in, const Tensor& k, std::array<int, 3> stride,
                         std::array<int, 3> pad) {
  const auto& is = in.shape();
  const auto& ks = k.shape();
  const int64_t n = is[0], cin = is[1], t = is[2], h = is[3], w = is[4];
  const int64_t cout = ks[0], kt = ks[2], kh = ks[3], kw = ks[4];
  const int64_t ot = (t + 2 * pad[0] - kt) / stride[0] + 1;
  const int64_t oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
  const int64_t ow = (w + 2 * pad[2] - kw) / stride[2] + 1;
  Tensor out = Tensor::zeros({n, cout, ot, oh, ow});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t oz = 0; oz < ot; ++oz)
        for (int64_t oy = 0; oy < oh; ++oy)
          for (int64_t ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int64_t ci = 0; ci < cin; ++ci)
              for (int64_t kz = 0; kz < kt; ++kz)
                for (int64_t ky = 0; ky < kh; ++ky)
                  for (int64_t kx = 0; kx < kw; ++kx) {
                    const int64_t iz = oz * stride[0] + kz - pad[0];
                    const int64_t iy = oy * stride[1] + ky - pad[1];
                    const int64_t ix = ox * stride[2] + kx - pad[2];
                    if (iz < 0 || iz >= t || iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    acc += in.at({ni, ci, iz, iy, ix}) * k.at({co, ci, kz, ky, kx});
                  }
            out.at({ni, co, oz, oy, ox}) = acc;
          }
  return out;
}

// Per-window scan over the trailing 3 axes (pass window/stride of 1 for a
// leading axis that should stay untouched).
inline Tensor maxpool3_ref(const Tensor& in, std::array<int, 3> window, std::array<int, 3> stride) {
  const auto& is = in.shape();
  const size_t rank = is.size();
  const int64_t d0 = is[rank - 3], d1 = is[rank - 2], d2 = is[rank - 1];
  int64_t lead = 1;
  for (size_t i = 0; i + 3 < rank; ++i) lead *= is[i];
  const int64_t o0 = (d0 - window[0]) / stride[0] + 1;
  const int64_t o1 = (d1 - window[1]) / stride[1] + 1;
  const int64_t o2 = (d2 - window[2]) / stride[2] + 1;
  std::vector<int64_t> out_shape(is.begin(), is.end());
  out_shape[rank - 3] = o0;
  out_shape[rank - 2] = o1;
  out_shape[rank - 1] = o2;
  Tensor out(out_shape);
  int64_t oi = 0;
  for (int64_t b = 0; b < lead; ++b) {
    const double* block = in.data() + b * d0 * d1 * d2;
    for (int64_t z = 0; z < o0; ++z)
      for (int64_t y = 0; y < o1; ++y)
        for (int64_t x = 0; x < o2; ++x) {
          double best = block[(z * stride[0] * d1 + y * stride[1]) * d2 + x * stride[2]];
          for (int64_t dz = 0; dz < window[0]; ++dz)
            for (int64_t dy = 0; dy < window[1]; ++dy)
              for (int64_t dx = 0; dx < window[2]; ++dx) {
                const double v = block[((z * stride[0] + dz) * d1 + (y * stride[1] + dy)) * d2 +
                                       (x * stride[2] + dx)];
                if (v > best) best = v;
              }
          out[oi++] = best;
        }
  }
  return out;
}

inline Tensor matmul_ref(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int64_t n = x.dim(0), f = x.dim(1), c = w.dim(1);
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) {
      double acc = b[j];
      for (int64_t k = 0; k < f; ++k) acc += x.at({i, k}) * w.at({k, j});
      out.at({i, j}) = acc;
    }
  return out;
}

// Central finite differences with perturbation 1e-4 * max(1, |x|), applied
// to an arbitrary re-evaluable scalar function of the listed tensors.
inline Tensor fd_gradient(const std::function<double()>& eval, Tensor& param) {
  Tensor grad(param.shape());
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double x0 = param[i];
    const double h = 1e-4 * std::max(1.0, std::fabs(x0));
    param[i] = x0 + h;
    const double fp = eval();
    param[i] = x0 - h;
    const double fm = eval();
    param[i] = x0;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Scalar transcription of the discrete neuron equations: charge (leak
// coefficient form), fire at threshold, hard reset. Used per element to
// cross-check the vectorized layer bitwise.
struct ScalarNeuronRef {
  double v;
  double coeff;  // 1/tau for LIF, sigmoid(a) for PLIF
  double v_th;
  double v_reset;

  double step(double x) {
    const double h = v + coeff * (x - (v - v_reset));
    const double s = (h - v_th) >= 0.0 ? 1.0 : 0.0;
    v = h * (1.0 - s) + v_reset * s;
    return s;
  }
};

// Smooth stand-in for the Heaviside threshold whose derivative is the arctan
// surrogate: arctan(pi alpha u / 2) / pi + 1/2.
inline double smooth_theta(double u, double alpha) {
  return std::atan(std::numbers::pi * alpha * u / 2.0) / std::numbers::pi + 0.5;
}

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

}  // namespace oracle
