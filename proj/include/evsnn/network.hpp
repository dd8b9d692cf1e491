#pragma once

#include <string>
#include <vector>

#include "evsnn/events.hpp"
#include "evsnn/neuron.hpp"
#include "evsnn/ops.hpp"

namespace evsnn {

enum class Arch { k2d, k3d };

// Flat description of one layer, enough to audit parameter counts and echo
// the architecture.
struct LayerSpec {
  enum class Kind { kConv2d, kConv3d, kBatchNorm, kPlif, kMaxPool, kFlatten, kLinear };
  Kind kind;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int ft = 1, fh = 1, fw = 1;
  int stride = 1;
  int64_t in_features = 0;
  int64_t out_features = 0;

  int64_t param_count() const;
};

struct ArchConfig {
  Arch arch = Arch::k2d;
  int64_t channels = 16;
  int num_blocks = 7;
  int ft = 3, fh = 3, fw = 3;  // 3d conv kernel; the 2d path uses fh x fw
  int num_classes = 2;
  int64_t input_h = 32;
  int64_t input_w = 32;
  double v_th = 1.0;
  double v_reset = 0.0;
  double alpha = 2.0;     // surrogate width
  double plif_init = 0.0;  // initial a, leak coefficient sigmoid(0) = 1/2
  uint64_t init_seed = 1;
};

struct ConvUnit {
  Var weight;  // [Cout,Cin,kh,kw] or [Cout,Cin,kt,kh,kw]
  std::array<int, 3> pad_lo{0, 0, 0};
  std::array<int, 3> pad_hi{0, 0, 0};
};

struct BnUnit {
  Var gamma;
  Var beta;
  BatchNormState state;
};

struct PlifUnit {
  Var a;
};

// conv -> BN -> PLIF
struct Stage {
  ConvUnit conv;
  BnUnit bn;
  PlifUnit plif;
};

// Two stages with a spike-element-wise ADD residual connection.
struct SewBlock {
  Stage s1;
  Stage s2;
  bool pool_after = false;
};

class Network {
 public:
  ArchConfig config;
  Mode mode = Mode::kTrain;

  Stage stem;
  std::vector<SewBlock> blocks;
  Var head_weight;
  Var head_bias;
  int64_t head_features = 0;
  int64_t final_h = 0;
  int64_t final_w = 0;

  std::vector<Var> parameters() const;
  // Learnable tensors plus BN running statistics, in checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<LayerSpec> layer_specs() const;
  int64_t parameter_count() const;

  NeuronParams neuron_params(const PlifUnit& plif) const;
};

// Stem conv + `num_blocks` SEW-ADD residual blocks + flatten + linear head.
// 2x2 max pooling follows a block while both spatial extents stay at or
// above the window after pooling. The 2d variant runs one frame per
// simulation timestep with neuron state carried across timesteps; the 3d
// variant convolves over (t, y, x) and the PLIF layers scan the temporal
// feature axis statefully.
Network build_sew_resnet_2d(const ArchConfig& config);
Network build_sew_resnet_3d(const ArchConfig& config);
Network build_network(const ArchConfig& config);

// One residual block on a time-major activation ([T,N,C,H,W] for 2d,
// [N,C,T,H,W] for 3d). Exposed for block-level contract tests.
Var sew_block_forward(Network& net, SewBlock& block, const Var& spikes_in);

// Full pass over one clip. 2d: per-timestep head outputs averaged over time
// (rate decoding). 3d: head applied per remaining temporal position, then
// averaged. Neuron state is created fresh inside the call, so repeated calls
// are pure in (parameters, clip).
Var forward_clip_var(Network& net, const FrameClip& clip);
Tensor forward_clip(Network& net, const FrameClip& clip);  // -> [num_classes]

// Batched 2d input [T,N,2,H,W] / 3d input [N,2,T,H,W]; returns [N, classes].
Var forward_batch(Network& net, const Var& input);

// Architecture description file: newline-delimited key=value pairs with the
// exact key set arch, channels, blocks, ft, fh, fw, classes, vth, vreset,
// alpha.
std::string render_arch_description(const ArchConfig& config);

}  // namespace evsnn
