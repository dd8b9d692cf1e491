#include <algorithm>
#include <cstring>
#include <memory>

#include "evsnn/errors.hpp"
#include "evsnn/ops.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evsnn {

namespace {

int64_t out_extent(int64_t in, int pad_lo, int pad_hi, int64_t k, int stride) {
  return (in + pad_lo + pad_hi - k) / stride + 1;
}

// First/last output index whose input coordinate ox*stride + koff - pad_lo
// stays inside [0, in_extent).
void out_range(int64_t out_n, int64_t in_extent, int stride, int64_t koff, int pad_lo,
               int64_t& lo, int64_t& hi) {
  const int64_t shift = koff - pad_lo;
  lo = 0;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  hi = std::min(out_n - 1, (in_extent - 1 - shift) / stride);
}

}  // namespace

Var conv2d_padded(const Var& input, const Var& kernel, std::array<int, 2> stride,
                  std::array<int, 2> pad_lo, std::array<int, 2> pad_hi) {
  const auto& ishape = input->value.shape();
  const auto& kshape = kernel->value.shape();
  if (ishape.size() != 4 || kshape.size() != 4) {
    throw ValidationError("conv2d: expected input [N,Cin,H,W] and kernel [Cout,Cin,kh,kw], got " +
                          shape_str(ishape) + " and " + shape_str(kshape));
  }
  if (ishape[1] != kshape[1]) {
    throw ValidationError("conv2d: channel mismatch, input " + shape_str(ishape) + " vs kernel " +
                          shape_str(kshape));
  }
  const int64_t n = ishape[0], cin = ishape[1], h = ishape[2], w = ishape[3];
  const int64_t cout = kshape[0], kh = kshape[2], kw = kshape[3];
  if (kh > h + pad_lo[0] + pad_hi[0] || kw > w + pad_lo[1] + pad_hi[1]) {
    throw ValidationError("conv2d: kernel " + shape_str(kshape) + " larger than padded input " +
                          shape_str(ishape));
  }
  const int64_t oh = out_extent(h, pad_lo[0], pad_hi[0], kh, stride[0]);
  const int64_t ow = out_extent(w, pad_lo[1], pad_hi[1], kw, stride[1]);
  const int sy = stride[0], sx = stride[1];

  Tensor out = Tensor::zeros({n, cout, oh, ow});
  const double* in = input->value.data();
  const double* kv = kernel->value.data();
  double* ov = out.data();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < n * cout; ++p) {
    const int64_t ni = p / cout, co = p % cout;
    double* oplane = ov + p * oh * ow;
    for (int64_t ci = 0; ci < cin; ++ci) {
      const double* iplane = in + (ni * cin + ci) * h * w;
      const double* kplane = kv + (co * cin + ci) * kh * kw;
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          const double wv = kplane[ky * kw + kx];
          int64_t ox_lo, ox_hi;
          out_range(ow, w, sx, kx, pad_lo[1], ox_lo, ox_hi);
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * sy + ky - pad_lo[0];
            if (iy < 0 || iy >= h) continue;
            const double* irow = iplane + iy * w + (ox_lo * sx + kx - pad_lo[1]);
            double* orow = oplane + oy * ow;
            if (sx == 1) {
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * irow[ox - ox_lo];
            } else {
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * irow[(ox - ox_lo) * sx];
            }
          }
        }
      }
    }
  }

  return make_node(std::move(out), {input, kernel},
                   [input, kernel, n, cin, cout, h, w, kh, kw, oh, ow, sy, sx, pad_lo](Node& self) {
    const double* kv = kernel->value.data();
    const double* gout = self.grad.data();
    if (input->requires_grad) {
      Tensor& gin = input->ensure_grad();
      double* gi = gin.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t p = 0; p < n * cin; ++p) {
        const int64_t ni = p / cin, ci = p % cin;
        double* gplane = gi + p * h * w;
        for (int64_t co = 0; co < cout; ++co) {
          const double* goplane = gout + (ni * cout + co) * oh * ow;
          const double* kplane = kv + (co * cin + ci) * kh * kw;
          for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
              const double wv = kplane[ky * kw + kx];
              int64_t ox_lo, ox_hi;
              out_range(ow, w, sx, kx, pad_lo[1], ox_lo, ox_hi);
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * sy + ky - pad_lo[0];
                if (iy < 0 || iy >= h) continue;
                double* grow = gplane + iy * w + (ox_lo * sx + kx - pad_lo[1]);
                const double* gorow = goplane + oy * ow;
                if (sx == 1) {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) grow[ox - ox_lo] += wv * gorow[ox];
                } else {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) grow[(ox - ox_lo) * sx] += wv * gorow[ox];
                }
              }
            }
          }
        }
      }
    }
    if (kernel->requires_grad) {
      Tensor& gk = kernel->ensure_grad();
      double* gkv = gk.data();
      const double* in = input->value.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t q = 0; q < cout * cin; ++q) {
        const int64_t co = q / cin, ci = q % cin;
        double* kplane = gkv + q * kh * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx) {
            int64_t ox_lo, ox_hi;
            out_range(ow, w, sx, kx, pad_lo[1], ox_lo, ox_hi);
            double acc = 0.0;
            for (int64_t ni = 0; ni < n; ++ni) {
              const double* iplane = in + (ni * cin + ci) * h * w;
              const double* goplane = gout + (ni * cout + co) * oh * ow;
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * sy + ky - pad_lo[0];
                if (iy < 0 || iy >= h) continue;
                const double* irow = iplane + iy * w + (ox_lo * sx + kx - pad_lo[1]);
                const double* gorow = goplane + oy * ow;
                if (sx == 1) {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += irow[ox - ox_lo] * gorow[ox];
                } else {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += irow[(ox - ox_lo) * sx] * gorow[ox];
                }
              }
            }
            kplane[ky * kw + kx] += acc;
          }
        }
      }
    }
  });
}

Var conv2d(const Var& input, const Var& kernel, int stride, int padding) {
  return conv2d_padded(input, kernel, {stride, stride}, {padding, padding}, {padding, padding});
}

Var conv3d_padded(const Var& input, const Var& kernel, std::array<int, 3> stride,
                  std::array<int, 3> pad_lo, std::array<int, 3> pad_hi) {
  const auto& ishape = input->value.shape();
  const auto& kshape = kernel->value.shape();
  if (ishape.size() != 5 || kshape.size() != 5) {
    throw ValidationError("conv3d: expected input [N,Cin,T,H,W] and kernel [Cout,Cin,kt,kh,kw], got " +
                          shape_str(ishape) + " and " + shape_str(kshape));
  }
  if (ishape[1] != kshape[1]) {
    throw ValidationError("conv3d: channel mismatch, input " + shape_str(ishape) + " vs kernel " +
                          shape_str(kshape));
  }
  const int64_t n = ishape[0], cin = ishape[1], t = ishape[2], h = ishape[3], w = ishape[4];
  const int64_t cout = kshape[0], kt = kshape[2], kh = kshape[3], kw = kshape[4];
  if (kt > t + pad_lo[0] + pad_hi[0] || kh > h + pad_lo[1] + pad_hi[1] || kw > w + pad_lo[2] + pad_hi[2]) {
    throw ValidationError("conv3d: kernel " + shape_str(kshape) + " larger than padded input " +
                          shape_str(ishape));
  }
  const int64_t ot = out_extent(t, pad_lo[0], pad_hi[0], kt, stride[0]);
  const int64_t oh = out_extent(h, pad_lo[1], pad_hi[1], kh, stride[1]);
  const int64_t ow = out_extent(w, pad_lo[2], pad_hi[2], kw, stride[2]);
  const int st = stride[0], sy = stride[1], sx = stride[2];

  Tensor out = Tensor::zeros({n, cout, ot, oh, ow});
  const double* in = input->value.data();
  const double* kv = kernel->value.data();
  double* ov = out.data();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < n * cout; ++p) {
    const int64_t ni = p / cout, co = p % cout;
    double* ovol = ov + p * ot * oh * ow;
    for (int64_t ci = 0; ci < cin; ++ci) {
      const double* ivol = in + (ni * cin + ci) * t * h * w;
      const double* kvol = kv + (co * cin + ci) * kt * kh * kw;
      for (int64_t kz = 0; kz < kt; ++kz) {
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx) {
            const double wv = kvol[(kz * kh + ky) * kw + kx];
            int64_t ox_lo, ox_hi;
            out_range(ow, w, sx, kx, pad_lo[2], ox_lo, ox_hi);
            for (int64_t oz = 0; oz < ot; ++oz) {
              const int64_t iz = oz * st + kz - pad_lo[0];
              if (iz < 0 || iz >= t) continue;
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * sy + ky - pad_lo[1];
                if (iy < 0 || iy >= h) continue;
                const double* irow = ivol + (iz * h + iy) * w + (ox_lo * sx + kx - pad_lo[2]);
                double* orow = ovol + (oz * oh + oy) * ow;
                if (sx == 1) {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * irow[ox - ox_lo];
                } else {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * irow[(ox - ox_lo) * sx];
                }
              }
            }
          }
        }
      }
    }
  }

  return make_node(std::move(out), {input, kernel},
                   [input, kernel, n, cin, cout, t, h, w, kt, kh, kw, ot, oh, ow, st, sy, sx,
                    pad_lo](Node& self) {
    const double* kv = kernel->value.data();
    const double* gout = self.grad.data();
    if (input->requires_grad) {
      Tensor& gin = input->ensure_grad();
      double* gi = gin.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t p = 0; p < n * cin; ++p) {
        const int64_t ni = p / cin, ci = p % cin;
        double* gvol = gi + p * t * h * w;
        for (int64_t co = 0; co < cout; ++co) {
          const double* govol = gout + (ni * cout + co) * ot * oh * ow;
          const double* kvol = kv + (co * cin + ci) * kt * kh * kw;
          for (int64_t kz = 0; kz < kt; ++kz) {
            for (int64_t ky = 0; ky < kh; ++ky) {
              for (int64_t kx = 0; kx < kw; ++kx) {
                const double wv = kvol[(kz * kh + ky) * kw + kx];
                int64_t ox_lo, ox_hi;
                out_range(ow, w, sx, kx, pad_lo[2], ox_lo, ox_hi);
                for (int64_t oz = 0; oz < ot; ++oz) {
                  const int64_t iz = oz * st + kz - pad_lo[0];
                  if (iz < 0 || iz >= t) continue;
                  for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * sy + ky - pad_lo[1];
                    if (iy < 0 || iy >= h) continue;
                    double* grow = gvol + (iz * h + iy) * w + (ox_lo * sx + kx - pad_lo[2]);
                    const double* gorow = govol + (oz * oh + oy) * ow;
                    if (sx == 1) {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) grow[ox - ox_lo] += wv * gorow[ox];
                    } else {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) grow[(ox - ox_lo) * sx] += wv * gorow[ox];
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
    if (kernel->requires_grad) {
      Tensor& gk = kernel->ensure_grad();
      double* gkv = gk.data();
      const double* in = input->value.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t q = 0; q < cout * cin; ++q) {
        const int64_t co = q / cin, ci = q % cin;
        double* kvol = gkv + q * kt * kh * kw;
        for (int64_t kz = 0; kz < kt; ++kz) {
          for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
              int64_t ox_lo, ox_hi;
              out_range(ow, w, sx, kx, pad_lo[2], ox_lo, ox_hi);
              double acc = 0.0;
              for (int64_t ni = 0; ni < n; ++ni) {
                const double* ivol = in + (ni * cin + ci) * t * h * w;
                const double* govol = gout + (ni * cout + co) * ot * oh * ow;
                for (int64_t oz = 0; oz < ot; ++oz) {
                  const int64_t iz = oz * st + kz - pad_lo[0];
                  if (iz < 0 || iz >= t) continue;
                  for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * sy + ky - pad_lo[1];
                    if (iy < 0 || iy >= h) continue;
                    const double* irow = ivol + (iz * h + iy) * w + (ox_lo * sx + kx - pad_lo[2]);
                    const double* gorow = govol + (oz * oh + oy) * ow;
                    if (sx == 1) {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += irow[ox - ox_lo] * gorow[ox];
                    } else {
                      for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) acc += irow[(ox - ox_lo) * sx] * gorow[ox];
                    }
                  }
                }
              }
              kvol[(kz * kh + ky) * kw + kx] += acc;
            }
          }
        }
      }
    }
  });
}

Var conv3d(const Var& input, const Var& kernel, std::array<int, 3> stride, std::array<int, 3> padding) {
  return conv3d_padded(input, kernel, stride, padding, padding);
}

Var maxpool(const Var& input, const std::vector<int>& window, const std::vector<int>& stride) {
  const auto& ishape = input->value.shape();
  const size_t k = window.size();
  if (k != stride.size() || (k != 2 && k != 3)) {
    throw ValidationError("maxpool: window/stride must both have rank 2 or 3");
  }
  if (ishape.size() < k + 1) {
    throw ValidationError("maxpool: input rank " + std::to_string(ishape.size()) +
                          " too small for window rank " + std::to_string(k));
  }
  const size_t spatial_start = ishape.size() - k;
  std::vector<int64_t> out_shape(ishape);
  int64_t lead = 1;
  for (size_t i = 0; i < spatial_start; ++i) lead *= ishape[i];
  for (size_t i = 0; i < k; ++i) {
    const int64_t in_d = ishape[spatial_start + i];
    if (window[i] <= 0 || stride[i] <= 0) throw ValidationError("maxpool: window/stride must be positive");
    if (window[i] > in_d) {
      throw ValidationError("maxpool: window " + std::to_string(window[i]) + " larger than input extent " +
                            std::to_string(in_d));
    }
    out_shape[spatial_start + i] = (in_d - window[i]) / stride[i] + 1;
  }

  // Normalize to 3 pooled axes; rank-2 pools get a unit leading axis.
  int64_t d0 = 1, d1, d2, w0 = 1, w1, w2;
  int s0 = 1, s1, s2;
  if (k == 3) {
    d0 = ishape[spatial_start];
    w0 = window[0];
    s0 = stride[0];
  }
  d1 = ishape[spatial_start + k - 2];
  d2 = ishape[spatial_start + k - 1];
  w1 = window[k - 2];
  w2 = window[k - 1];
  s1 = stride[k - 2];
  s2 = stride[k - 1];
  const int64_t o0 = k == 3 ? out_shape[spatial_start] : 1;
  const int64_t o1 = out_shape[spatial_start + k - 2];
  const int64_t o2 = out_shape[spatial_start + k - 1];

  Tensor out(out_shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const double* in = input->value.data();
  double* ov = out.data();
  int64_t oi = 0;
  for (int64_t b = 0; b < lead; ++b) {
    const double* block = in + b * d0 * d1 * d2;
    const int64_t base = b * d0 * d1 * d2;
    for (int64_t z = 0; z < o0; ++z) {
      for (int64_t y = 0; y < o1; ++y) {
        for (int64_t x = 0; x < o2; ++x) {
          double best = -1.0;
          int64_t best_idx = -1;
          for (int64_t dz = 0; dz < w0; ++dz) {
            for (int64_t dy = 0; dy < w1; ++dy) {
              for (int64_t dx = 0; dx < w2; ++dx) {
                const int64_t idx = ((z * s0 + dz) * d1 + (y * s1 + dy)) * d2 + (x * s2 + dx);
                const double v = block[idx];
                if (best_idx < 0 || v > best) {
                  best = v;
                  best_idx = idx;
                }
              }
            }
          }
          ov[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = base + best_idx;
          ++oi;
        }
      }
    }
  }

  return make_node(std::move(out), {input}, [input, argmax](Node& self) {
    Tensor& gin = input->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      gin[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
    }
  });
}

}  // namespace evsnn
