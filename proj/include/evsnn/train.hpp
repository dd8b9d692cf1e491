#pragma once

#include <string>
#include <vector>

#include "evsnn/consensus.hpp"
#include "evsnn/network.hpp"

namespace evsnn {

enum class OptimizerKind { kSgd, kAdam };
enum class ModelKind { kTsSnn, kSnn3d };

struct TrainConfig {
  ModelKind model = ModelKind::kTsSnn;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr0 = 1e-3;
  int epochs = 100;
  int batch_size = 8;
  uint64_t seed = 1;

  int t_slices = 24;           // integration slices T
  int t_train = 12;            // frames sampled per clip on the 3d path
  int segments = 3;            // L
  int frames_per_segment = 5;  // K
  ConsensusKind consensus = ConsensusKind::kAverage;

  double sgd_momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables gradient clipping
  int checkpoint_every = 0;  // 0 = final checkpoint only

  int64_t channels = 16;
  int num_blocks = 7;
  int ft = 3, fh = 3, fw = 3;
  double v_th = 1.0;
  double v_reset = 0.0;
  double alpha = 2.0;

  void validate() const;
  ArchConfig arch_config(int num_classes, int64_t input_h, int64_t input_w) const;
};

struct LabeledClip {
  FrameClip clip;
  int label = 0;
};

struct Dataset {
  std::vector<LabeledClip> items;
  std::vector<std::string> class_names;

  size_t size() const { return items.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
};

// lr0 (1 + cos(pi t / T_max)) / 2; eta_min = 0, stepped per epoch.
double cosine_lr(int epoch, int t_max, double lr0);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::vector<Tensor> m;  // SGD velocity / Adam first moment
  std::vector<Tensor> v;  // Adam second moment
  int64_t step_count = 0;

  static OptimizerState make(OptimizerKind kind, const std::vector<Var>& params);
};

// v <- momentum v + g; p <- p - lr v
void sgd_step(const std::vector<Var>& params, const std::vector<Tensor>& grads, OptimizerState& state,
              double lr, double momentum = 0.9);

// Bias-corrected Adam.
void adam_step(const std::vector<Var>& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// T_train distinct indices from [0, T), ascending.
std::vector<int> sample_frames(int64_t t, int64_t t_train, Rng& rng);

// One pass over the shuffled dataset: model-appropriate forward, cross
// entropy, backprop, optimizer step per mini-batch at cosine_lr(epoch).
// Deterministic given (config.seed, epoch). Returns the mean per-sample loss.
double train_epoch(Network& net, const Dataset& data, const TrainConfig& config, OptimizerState& opt,
                   int epoch);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [label][prediction]
  int64_t total = 0;
};

// Argmax accuracy in eval mode with deterministic plans (evenly spaced
// segment frames; all T frames on the 3d path).
EvalResult evaluate(Network& net, const Dataset& data, const TrainConfig& config);

// Prediction for a single clip in the current network mode.
int predict_label(Network& net, const FrameClip& clip, const TrainConfig& config);

struct TrainRunResult {
  double final_loss = 0.0;
  double final_accuracy = 0.0;
};

// Full run: epoch loop writing `metrics.log` (one `epoch=<i> lr=<v> loss=<v>
// acc=<v>` line per epoch) and `model.ckpt` into out_dir.
TrainRunResult train(Network& net, const Dataset& data, const TrainConfig& config,
                     const std::string& out_dir);

// key=value dump of every field, one per line, fixed order.
std::string render_config(const TrainConfig& config);

// Reads a labels.csv manifest (`file,label` header) and the FRC1 clips it
// names. Class ids follow the sorted distinct label names.
Dataset load_dataset(const std::string& dir);

}  // namespace evsnn
