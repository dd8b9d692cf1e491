#include "evsnn/neuron.hpp"

#include <cmath>
#include <numbers>

#include "evsnn/errors.hpp"
#include "evsnn/ops.hpp"

namespace evsnn {

double heaviside(double u) { return u >= 0.0 ? 1.0 : 0.0; }

double surrogate_grad(double u, double alpha) {
  const double z = std::numbers::pi * alpha * u / 2.0;
  return alpha / (2.0 * (1.0 + z * z));
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

NeuronParams NeuronParams::lif(double tau, double v_th, double v_reset, double alpha) {
  NeuronParams p;
  p.kind = NeuronKind::kLif;
  p.tau = tau;
  p.v_th = v_th;
  p.v_reset = v_reset;
  p.alpha = alpha;
  p.validate();
  return p;
}

NeuronParams NeuronParams::plif(Var a, double v_th, double v_reset, double alpha) {
  NeuronParams p;
  p.kind = NeuronKind::kPlif;
  p.a = std::move(a);
  p.v_th = v_th;
  p.v_reset = v_reset;
  p.alpha = alpha;
  p.validate();
  return p;
}

void NeuronParams::validate() const {
  if (!(v_reset < v_th)) {
    throw ValidationError("neuron: v_reset (" + std::to_string(v_reset) + ") must lie below v_th (" +
                          std::to_string(v_th) + ")");
  }
  if (kind == NeuronKind::kLif && !(tau > 0.0)) {
    throw ValidationError("neuron: tau must be positive, got " + std::to_string(tau));
  }
  if (kind == NeuronKind::kPlif && (!a || a->value.numel() != 1)) {
    throw ValidationError("neuron: PLIF requires a scalar parameter a");
  }
  if (!(alpha > 0.0)) {
    throw ValidationError("neuron: surrogate width alpha must be positive");
  }
}

NeuronState NeuronState::initial(const std::vector<int64_t>& shape, double v_reset) {
  return NeuronState{constant(Tensor::full(shape, v_reset))};
}

void reset_state(NeuronState& state, double v_reset) {
  state.v = constant(Tensor::full(state.v->value.shape(), v_reset));
}

Var lif_charge(const Var& v_prev, const Var& x, double tau, double v_reset) {
  if (!(tau > 0.0)) throw ValidationError("lif_charge: tau must be positive, got " + std::to_string(tau));
  if (!v_prev->value.same_shape(x->value)) {
    throw ValidationError("lif_charge: shape mismatch " + shape_str(v_prev->value.shape()) + " vs " +
                          shape_str(x->value.shape()));
  }
  const double coeff = 1.0 / tau;
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = v_prev->value[i] + coeff * (x->value[i] - (v_prev->value[i] - v_reset));
  }
  return make_node(std::move(out), {v_prev, x}, [v_prev, x, coeff](Node& self) {
    if (v_prev->requires_grad) {
      Tensor& gv = v_prev->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gv[i] += self.grad[i] * (1.0 - coeff);
    }
    if (x->requires_grad) {
      Tensor& gx = x->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i] * coeff;
    }
  });
}

Var plif_charge(const Var& v_prev, const Var& x, const Var& a, double v_reset) {
  if (!v_prev->value.same_shape(x->value)) {
    throw ValidationError("plif_charge: shape mismatch " + shape_str(v_prev->value.shape()) + " vs " +
                          shape_str(x->value.shape()));
  }
  if (a->value.numel() != 1) throw ValidationError("plif_charge: a must be a scalar");
  const double coeff = sigmoid(a->value[0]);
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = v_prev->value[i] + coeff * (x->value[i] - (v_prev->value[i] - v_reset));
  }
  return make_node(std::move(out), {v_prev, x, a}, [v_prev, x, a, coeff, v_reset](Node& self) {
    if (v_prev->requires_grad) {
      Tensor& gv = v_prev->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gv[i] += self.grad[i] * (1.0 - coeff);
    }
    if (x->requires_grad) {
      Tensor& gx = x->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i] * coeff;
    }
    if (a->requires_grad) {
      // dH/da = (x - (v_prev - v_reset)) * sigma'(a), summed over elements.
      double acc = 0.0;
      for (int64_t i = 0; i < self.grad.numel(); ++i) {
        acc += self.grad[i] * (x->value[i] - (v_prev->value[i] - v_reset));
      }
      a->ensure_grad()[0] += acc * coeff * (1.0 - coeff);
    }
  });
}

Var fire(const Var& h, double v_th, double alpha) {
  Tensor out(h->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = heaviside(h->value[i] - v_th);
  return make_node(std::move(out), {h}, [h, v_th, alpha](Node& self) {
    Tensor& gh = h->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      gh[i] += self.grad[i] * surrogate_grad(h->value[i] - v_th, alpha);
    }
  });
}

Var hard_reset(const Var& h, const Var& s, double v_reset) {
  if (!h->value.same_shape(s->value)) {
    throw ValidationError("hard_reset: shape mismatch " + shape_str(h->value.shape()) + " vs " +
                          shape_str(s->value.shape()));
  }
  Tensor out(h->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = h->value[i] * (1.0 - s->value[i]) + v_reset * s->value[i];
  }
  return make_node(std::move(out), {h, s}, [h, s, v_reset](Node& self) {
    if (h->requires_grad) {
      Tensor& gh = h->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gh[i] += self.grad[i] * (1.0 - s->value[i]);
    }
    if (s->requires_grad) {
      Tensor& gs = s->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) gs[i] += self.grad[i] * (v_reset - h->value[i]);
    }
  });
}

Var layer_step(NeuronState& state, const Var& x, const NeuronParams& params) {
  if (!state.v->value.same_shape(x->value)) {
    throw ValidationError("layer_step: state shape " + shape_str(state.v->value.shape()) +
                          " does not match input " + shape_str(x->value.shape()));
  }
  Var h = params.kind == NeuronKind::kLif
              ? lif_charge(state.v, x, params.tau, params.v_reset)
              : plif_charge(state.v, x, params.a, params.v_reset);
  Var s = fire(h, params.v_th, params.alpha);
  state.v = hard_reset(h, s, params.v_reset);
  return s;
}

Var scan_time_major(const Var& x, const NeuronParams& params) {
  const auto& shape = x->value.shape();
  if (shape.size() < 2) throw ValidationError("scan_time_major: need a leading time axis");
  std::vector<int64_t> tail(shape.begin() + 1, shape.end());
  NeuronState state = NeuronState::initial(tail, params.v_reset);
  std::vector<Var> spikes;
  spikes.reserve(static_cast<size_t>(shape[0]));
  for (int64_t t = 0; t < shape[0]; ++t) {
    spikes.push_back(layer_step(state, select_leading(x, t), params));
  }
  return stack_leading(spikes);
}

}  // namespace evsnn
