#pragma once

#include <array>
#include <vector>

#include "evsnn/autograd.hpp"

namespace evsnn {

// ---- elementwise / structural ----------------------------------------------

Var add(const Var& a, const Var& b);            // same shape
Var sub(const Var& a, const Var& b);            // same shape
Var mul(const Var& a, const Var& b);            // Hadamard, same shape
Var emax(const Var& a, const Var& b);           // elementwise max; ties route grad to `a`
Var scale(const Var& a, double c);
Var reshape(const Var& a, std::vector<int64_t> shape);
Var permute(const Var& a, const std::vector<int>& perm);

// x[index] along the leading axis: [D0, rest...] -> [rest...].
Var select_leading(const Var& x, int64_t index);
// Inverse of a full set of select_leading calls: [rest...] x L -> [L, rest...].
Var stack_leading(const std::vector<Var>& xs);
// Mean over the leading axis: [D0, rest...] -> [rest...].
Var mean_leading(const Var& x);

// ---- dense layers -----------------------------------------------------------

// x:[N,F] * w:[F,C] + b:[C] -> [N,C]
Var linear(const Var& x, const Var& w, const Var& b);

// Numerically stable softmax along the last axis.
Var softmax(const Var& logits);

// Mean over the batch of -log softmax(logits)[target]. Log-sum-exp inside.
Var cross_entropy(const Var& logits, const std::vector<int>& targets);

// ---- convolution / pooling ---------------------------------------------------
//
// Cross-correlation (no kernel flip). The public ops take symmetric
// zero-padding per axis; the *_padded variants take separate leading and
// trailing pads, which the network builder uses to keep even kernel sizes
// shape-preserving.

Var conv2d(const Var& input, const Var& kernel, int stride, int padding);
Var conv2d_padded(const Var& input, const Var& kernel, std::array<int, 2> stride,
                  std::array<int, 2> pad_lo, std::array<int, 2> pad_hi);

Var conv3d(const Var& input, const Var& kernel, std::array<int, 3> stride, std::array<int, 3> padding);
Var conv3d_padded(const Var& input, const Var& kernel, std::array<int, 3> stride,
                  std::array<int, 3> pad_lo, std::array<int, 3> pad_hi);

// Max pooling over the trailing window.size() axes, no padding (windows that
// do not fit are truncated away). Backward routes each window's gradient to
// the first maximal element in scan order.
Var maxpool(const Var& input, const std::vector<int>& window, const std::vector<int>& stride);

// ---- batch normalization ------------------------------------------------------

enum class Mode { kTrain, kEval };

// Running statistics owned by the layer, updated in train mode with
// momentum `momentum` (biased batch variance on both paths).
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState make(int64_t channels, double momentum = 0.1, double eps = 1e-5);
};

// Normalizes the channel axis over every other axis of the presented batch
// (time folds into batch for the layouts the networks use).
Var batchnorm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode,
              int channel_axis = 1);

}  // namespace evsnn
