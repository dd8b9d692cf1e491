#include "evsnn/ops.hpp"

#include <cmath>
#include <cstring>

#include "evsnn/errors.hpp"

namespace evsnn {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) +
                          " vs " + shape_str(b->value.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gb[i] += self.grad[i] * a->value[i];
    }
  });
}

Var emax(const Var& a, const Var& b) {
  require_same_shape(a, b, "emax");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] >= b->value[i] ? a->value[i] : b->value[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      if (a->value[i] >= b->value[i]) {
        if (a->requires_grad) a->ensure_grad()[i] += self.grad[i];
      } else {
        if (b->requires_grad) b->ensure_grad()[i] += self.grad[i];
      }
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * c;
  return make_node(std::move(out), {a}, [a, c](Node& self) {
    Tensor& ga = a->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i] * c;
  });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [a](Node& self) {
    Tensor& ga = a->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
  });
}

namespace {

// Strides for a row-major shape.
std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size());
  int64_t acc = 1;
  for (size_t i = shape.size(); i-- > 0;) {
    s[i] = acc;
    acc *= shape[i];
  }
  return s;
}

void permute_copy(const Tensor& src, Tensor& dst, const std::vector<int>& perm) {
  const auto& in_shape = src.shape();
  const auto in_strides = strides_of(in_shape);
  const auto& out_shape = dst.shape();
  const size_t rank = in_shape.size();
  std::vector<int64_t> idx(rank, 0);
  const int64_t n = src.numel();
  for (int64_t flat_out = 0; flat_out < n; ++flat_out) {
    int64_t flat_in = 0;
    for (size_t axis = 0; axis < rank; ++axis) {
      flat_in += idx[axis] * in_strides[static_cast<size_t>(perm[axis])];
    }
    dst[flat_out] = src[flat_in];
    for (size_t axis = rank; axis-- > 0;) {
      if (++idx[axis] < out_shape[axis]) break;
      idx[axis] = 0;
    }
  }
}

}  // namespace

Var permute(const Var& a, const std::vector<int>& perm) {
  const auto& shape = a->value.shape();
  if (perm.size() != shape.size()) {
    throw ValidationError("permute: axis list rank " + std::to_string(perm.size()) +
                          " does not match tensor rank " + std::to_string(shape.size()));
  }
  std::vector<int64_t> out_shape(shape.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = shape[static_cast<size_t>(perm[i])];
  Tensor out(out_shape);
  permute_copy(a->value, out, perm);

  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  return make_node(std::move(out), {a}, [a, inv](Node& self) {
    Tensor scattered(a->value.shape());
    permute_copy(self.grad, scattered, inv);
    Tensor& ga = a->ensure_grad();
    for (int64_t i = 0; i < scattered.numel(); ++i) ga[i] += scattered[i];
  });
}

Var select_leading(const Var& x, int64_t index) {
  const auto& shape = x->value.shape();
  if (shape.empty() || index < 0 || index >= shape[0]) {
    throw ValidationError("select_leading: index " + std::to_string(index) + " out of range for shape " +
                          shape_str(shape));
  }
  std::vector<int64_t> out_shape(shape.begin() + 1, shape.end());
  if (out_shape.empty()) out_shape = {1};
  const int64_t block = shape_numel(out_shape);
  Tensor out(out_shape);
  std::memcpy(out.data(), x->value.data() + index * block, static_cast<size_t>(block) * sizeof(double));
  return make_node(std::move(out), {x}, [x, index, block](Node& self) {
    Tensor& gx = x->ensure_grad();
    double* dst = gx.data() + index * block;
    for (int64_t i = 0; i < block; ++i) dst[i] += self.grad[i];
  });
}

Var stack_leading(const std::vector<Var>& xs) {
  if (xs.empty()) throw ValidationError("stack_leading: empty input list");
  for (const auto& x : xs) require_same_shape(xs[0], x, "stack_leading");
  const auto& tail = xs[0]->value.shape();
  std::vector<int64_t> out_shape;
  out_shape.push_back(static_cast<int64_t>(xs.size()));
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  const int64_t block = xs[0]->value.numel();
  Tensor out(out_shape);
  for (size_t k = 0; k < xs.size(); ++k) {
    std::memcpy(out.data() + static_cast<int64_t>(k) * block, xs[k]->value.data(),
                static_cast<size_t>(block) * sizeof(double));
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_node(std::move(out), std::move(parents), [block](Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      const Var& p = self.parents[k];
      if (!p->requires_grad) continue;
      Tensor& gp = p->ensure_grad();
      const double* src = self.grad.data() + static_cast<int64_t>(k) * block;
      for (int64_t i = 0; i < block; ++i) gp[i] += src[i];
    }
  });
}

Var mean_leading(const Var& x) {
  const auto& shape = x->value.shape();
  if (shape.empty()) throw ValidationError("mean_leading: scalar input");
  const int64_t lead = shape[0];
  std::vector<int64_t> out_shape(shape.begin() + 1, shape.end());
  if (out_shape.empty()) out_shape = {1};
  const int64_t block = shape_numel(out_shape);
  Tensor out = Tensor::zeros(out_shape);
  for (int64_t k = 0; k < lead; ++k) {
    const double* src = x->value.data() + k * block;
    for (int64_t i = 0; i < block; ++i) out[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(lead);
  for (int64_t i = 0; i < block; ++i) out[i] *= inv;
  return make_node(std::move(out), {x}, [x, lead, block, inv](Node& self) {
    Tensor& gx = x->ensure_grad();
    for (int64_t k = 0; k < lead; ++k) {
      double* dst = gx.data() + k * block;
      for (int64_t i = 0; i < block; ++i) dst[i] += self.grad[i] * inv;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  const auto& bs = b->value.shape();
  if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[0] || ws[1] != bs[0]) {
    throw ValidationError("linear: incompatible shapes x=" + shape_str(xs) + " w=" + shape_str(ws) +
                          " b=" + shape_str(bs));
  }
  const int64_t n = xs[0], f = xs[1], c = ws[1];
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * c;
    for (int64_t j = 0; j < c; ++j) orow[j] = b->value[j];
    const double* xrow = x->value.data() + i * f;
    for (int64_t k = 0; k < f; ++k) {
      const double xv = xrow[k];
      const double* wrow = w->value.data() + k * c;
      for (int64_t j = 0; j < c; ++j) orow[j] += xv * wrow[j];
    }
  }
  return make_node(std::move(out), {x, w, b}, [x, w, b, n, f, c](Node& self) {
    if (x->requires_grad) {
      Tensor& gx = x->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double* grow = self.grad.data() + i * c;
        double* gxrow = gx.data() + i * f;
        for (int64_t k = 0; k < f; ++k) {
          const double* wrow = w->value.data() + k * c;
          double acc = 0.0;
          for (int64_t j = 0; j < c; ++j) acc += grow[j] * wrow[j];
          gxrow[k] += acc;
        }
      }
    }
    if (w->requires_grad) {
      Tensor& gw = w->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double* xrow = x->value.data() + i * f;
        const double* grow = self.grad.data() + i * c;
        for (int64_t k = 0; k < f; ++k) {
          double* gwrow = gw.data() + k * c;
          const double xv = xrow[k];
          for (int64_t j = 0; j < c; ++j) gwrow[j] += xv * grow[j];
        }
      }
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double* grow = self.grad.data() + i * c;
        for (int64_t j = 0; j < c; ++j) gb[j] += grow[j];
      }
    }
  });
}

Var softmax(const Var& logits) {
  const auto& shape = logits->value.shape();
  if (shape.empty()) throw ValidationError("softmax: scalar input");
  const int64_t c = shape.back();
  const int64_t rows = logits->value.numel() / c;
  Tensor out(shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = logits->value.data() + r * c;
    double* o = out.data() + r * c;
    double mx = in[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < c; ++j) o[j] *= inv;
  }
  return make_node(std::move(out), {logits}, [logits, rows, c](Node& self) {
    Tensor& gx = logits->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      double* g = gx.data() + r * c;
      for (int64_t j = 0; j < c; ++j) g[j] += (gy[j] - dot) * y[j];
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets) {
  const auto& shape = logits->value.shape();
  if (shape.size() != 2) {
    throw ValidationError("cross_entropy: logits must be [N,C], got " + shape_str(shape));
  }
  const int64_t n = shape[0], c = shape[1];
  if (static_cast<int64_t>(targets.size()) != n) {
    throw ValidationError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                          std::to_string(n));
  }
  for (int t : targets) {
    if (t < 0 || t >= c) {
      throw ValidationError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                            std::to_string(c) + ")");
    }
  }
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits->value.data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    loss += mx + std::log(sum) - row[targets[static_cast<size_t>(i)]];
  }
  loss /= static_cast<double>(n);
  return make_node(Tensor::scalar(loss), {logits}, [logits, targets, n, c](Node& self) {
    const double gout = self.grad[0] / static_cast<double>(n);
    Tensor& gx = logits->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const double* row = logits->value.data() + i * c;
      double mx = row[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
      double* g = gx.data() + i * c;
      for (int64_t j = 0; j < c; ++j) {
        const double p = std::exp(row[j] - mx) / sum;
        g[j] += gout * (p - (j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0));
      }
    }
  });
}

BatchNormState BatchNormState::make(int64_t channels, double momentum, double eps) {
  BatchNormState s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  s.momentum = momentum;
  s.eps = eps;
  return s;
}

namespace {
Var batchnorm_axis1(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode);
}

Var batchnorm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode,
              int channel_axis) {
  const size_t rank = x->value.rank();
  if (channel_axis < 0 || static_cast<size_t>(channel_axis) >= rank) {
    throw ValidationError("batchnorm: channel axis " + std::to_string(channel_axis) +
                          " outside tensor rank " + std::to_string(rank));
  }
  if (channel_axis == 1) return batchnorm_axis1(x, gamma, beta, state, mode);
  std::vector<int> perm(rank);
  for (size_t i = 0; i < rank; ++i) perm[i] = static_cast<int>(i);
  std::swap(perm[1], perm[static_cast<size_t>(channel_axis)]);
  return permute(batchnorm_axis1(permute(x, perm), gamma, beta, state, mode), perm);
}

namespace {

Var batchnorm_axis1(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode) {
  const auto& shape = x->value.shape();
  if (shape.size() < 2) throw ValidationError("batchnorm: input rank must be >= 2, got " + shape_str(shape));
  const int64_t c = shape[1];
  if (gamma->value.numel() != c || beta->value.numel() != c) {
    throw ValidationError("batchnorm: gamma/beta size must match channel count " + std::to_string(c));
  }
  const int64_t n0 = shape[0];
  int64_t spatial = 1;
  for (size_t i = 2; i < shape.size(); ++i) spatial *= shape[i];
  const int64_t m = n0 * spatial;  // reduction size per channel
  if (m == 0) throw ValidationError("batchnorm: zero-size reduction");

  Tensor mean({c}), var({c});
  if (mode == Mode::kTrain) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int64_t b = 0; b < n0; ++b) {
        const double* p = x->value.data() + (b * c + ch) * spatial;
        for (int64_t s = 0; s < spatial; ++s) acc += p[s];
      }
      mean[ch] = acc / static_cast<double>(m);
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int64_t b = 0; b < n0; ++b) {
        const double* p = x->value.data() + (b * c + ch) * spatial;
        for (int64_t s = 0; s < spatial; ++s) {
          const double d = p[s] - mean[ch];
          acc += d * d;
        }
      }
      var[ch] = acc / static_cast<double>(m);
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean[ch];
      state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] + state.momentum * var[ch];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor inv_std({c});
  for (int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + state.eps);

  Tensor out(shape);
  Tensor xhat(shape);
  for (int64_t b = 0; b < n0; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* p = x->value.data() + (b * c + ch) * spatial;
      double* ph = xhat.data() + (b * c + ch) * spatial;
      double* po = out.data() + (b * c + ch) * spatial;
      const double mu = mean[ch], is = inv_std[ch], g = gamma->value[ch], bt = beta->value[ch];
      for (int64_t s = 0; s < spatial; ++s) {
        ph[s] = (p[s] - mu) * is;
        po[s] = g * ph[s] + bt;
      }
    }
  }

  auto xhat_shared = std::make_shared<Tensor>(std::move(xhat));
  auto invstd_shared = std::make_shared<Tensor>(std::move(inv_std));
  const bool train = mode == Mode::kTrain;
  return make_node(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat_shared, invstd_shared, n0, c, spatial, train](Node& self) {
    const Tensor& xh = *xhat_shared;
    const Tensor& istd = *invstd_shared;
    const int64_t m = n0 * spatial;
    // Per-channel reductions of the incoming gradient.
    Tensor sum_gy({c}), sum_gy_xhat({c});
    for (int64_t ch = 0; ch < c; ++ch) {
      double a = 0.0, b2 = 0.0;
      for (int64_t b = 0; b < n0; ++b) {
        const double* gy = self.grad.data() + (b * c + ch) * spatial;
        const double* h = xh.data() + (b * c + ch) * spatial;
        for (int64_t s = 0; s < spatial; ++s) {
          a += gy[s];
          b2 += gy[s] * h[s];
        }
      }
      sum_gy[ch] = a;
      sum_gy_xhat[ch] = b2;
    }
    if (gamma->requires_grad) {
      Tensor& gg = gamma->ensure_grad();
      for (int64_t ch = 0; ch < c; ++ch) gg[ch] += sum_gy_xhat[ch];
    }
    if (beta->requires_grad) {
      Tensor& gb = beta->ensure_grad();
      for (int64_t ch = 0; ch < c; ++ch) gb[ch] += sum_gy[ch];
    }
    if (x->requires_grad) {
      Tensor& gx = x->ensure_grad();
      for (int64_t b = 0; b < n0; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const double* gy = self.grad.data() + (b * c + ch) * spatial;
          const double* h = xh.data() + (b * c + ch) * spatial;
          double* g = gx.data() + (b * c + ch) * spatial;
          const double scale_ = gamma->value[ch] * istd[ch];
          if (train) {
            const double mg = sum_gy[ch] / static_cast<double>(m);
            const double mgx = sum_gy_xhat[ch] / static_cast<double>(m);
            for (int64_t s = 0; s < spatial; ++s) {
              g[s] += scale_ * (gy[s] - mg - h[s] * mgx);
            }
          } else {
            for (int64_t s = 0; s < spatial; ++s) g[s] += scale_ * gy[s];
          }
        }
      }
    }
  });
}

}  // namespace

}  // namespace evsnn
