#pragma once

#include "evsnn/autograd.hpp"

namespace evsnn {

// Pointwise pieces of the discrete spiking neuron: charge, fire, hard reset.
// Spikes are exact {0,1}; gradients cross the threshold through an arctan
// surrogate of width `alpha`.

double heaviside(double u);                     // 1 iff u >= 0 (fires exactly at threshold)
double surrogate_grad(double u, double alpha);  // alpha / (2 (1 + (pi alpha u / 2)^2))
double sigmoid(double a);

enum class NeuronKind { kLif, kPlif };

struct NeuronParams {
  double v_th = 1.0;
  double v_reset = 0.0;
  double alpha = 2.0;  // surrogate width
  NeuronKind kind = NeuronKind::kPlif;
  double tau = 2.0;  // LIF only
  Var a;             // PLIF only: learnable scalar, leak coefficient = sigmoid(a)

  static NeuronParams lif(double tau, double v_th = 1.0, double v_reset = 0.0, double alpha = 2.0);
  static NeuronParams plif(Var a, double v_th = 1.0, double v_reset = 0.0, double alpha = 2.0);
  void validate() const;
};

// Membrane potentials V(t-1), one per neuron. Owned by a single forward pass.
struct NeuronState {
  Var v;

  static NeuronState initial(const std::vector<int64_t>& shape, double v_reset);
};

void reset_state(NeuronState& state, double v_reset);

// H = v_prev + (1/tau) (x - (v_prev - v_reset))
Var lif_charge(const Var& v_prev, const Var& x, double tau, double v_reset);

// H = v_prev + sigmoid(a) (x - (v_prev - v_reset)); a stays on the tape.
Var plif_charge(const Var& v_prev, const Var& x, const Var& a, double v_reset);

// S = heaviside(H - v_th); backward substitutes surrogate_grad(H - v_th, alpha).
Var fire(const Var& h, double v_th, double alpha);

// V = H (1 - S) + v_reset S. No detachment: grads flow through both terms.
Var hard_reset(const Var& h, const Var& s, double v_reset);

// One simulation timestep: charge -> fire -> reset. Returns the spikes and
// advances state.v to the post-reset potential.
Var layer_step(NeuronState& state, const Var& x, const NeuronParams& params);

// Stateful scan over the leading (time) axis of x: fresh state at v_reset,
// one layer_step per slice, spikes restacked in order.
Var scan_time_major(const Var& x, const NeuronParams& params);

}  // namespace evsnn
