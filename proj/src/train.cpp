#include "evsnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "evsnn/checkpoint.hpp"
#include "evsnn/errors.hpp"

namespace evsnn {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ValidationError("config: lr0 must be positive");
  if (epochs < 1) throw ValidationError("config: epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("config: batch_size must be at least 1");
  if (t_slices < 1) throw ValidationError("config: T must be at least 1");
  if (model == ModelKind::kSnn3d && t_train > t_slices) {
    throw ValidationError("config: T_train (" + std::to_string(t_train) + ") must not exceed T (" +
                          std::to_string(t_slices) + ")");
  }
  if (model == ModelKind::kSnn3d && t_train < 1) throw ValidationError("config: T_train must be at least 1");
  if (model == ModelKind::kTsSnn) {
    if (segments < 1) throw ValidationError("config: segments must be at least 1");
    if (frames_per_segment < 1) throw ValidationError("config: frames_per_segment must be at least 1");
    if (static_cast<int64_t>(segments) * frames_per_segment > t_slices) {
      throw ValidationError("config: L*K (" + std::to_string(segments) + "*" +
                            std::to_string(frames_per_segment) + ") must not exceed T (" +
                            std::to_string(t_slices) + ")");
    }
  }
  if (clip_norm < 0.0) throw ValidationError("config: clip_norm must be non-negative");
}

ArchConfig TrainConfig::arch_config(int num_classes, int64_t input_h, int64_t input_w) const {
  ArchConfig a;
  a.arch = model == ModelKind::kTsSnn ? Arch::k2d : Arch::k3d;
  a.channels = channels;
  a.num_blocks = num_blocks;
  a.ft = ft;
  a.fh = fh;
  a.fw = fw;
  a.num_classes = num_classes;
  a.input_h = input_h;
  a.input_w = input_w;
  a.v_th = v_th;
  a.v_reset = v_reset;
  a.alpha = alpha;
  a.init_seed = seed;
  return a;
}

double cosine_lr(int epoch, int t_max, double lr0) {
  if (t_max <= 0) throw ValidationError("cosine_lr: T_max must be positive");
  if (epoch < 0 || epoch > t_max) {
    throw ValidationError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0," +
                          std::to_string(t_max) + "]");
  }
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(t_max))) / 2.0;
}

OptimizerState OptimizerState::make(OptimizerKind kind, const std::vector<Var>& params) {
  OptimizerState s;
  s.kind = kind;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p->value.shape()));
    if (kind == OptimizerKind::kAdam) s.v.push_back(Tensor::zeros(p->value.shape()));
  }
  return s;
}

namespace {

void check_step_shapes(const std::vector<Var>& params, const std::vector<Tensor>& grads,
                       const OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ValidationError("optimizer: parameter/gradient/state counts do not match");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(grads[i])) {
      throw ValidationError("optimizer: gradient shape " + shape_str(grads[i].shape()) +
                            " does not match parameter " + shape_str(params[i]->value.shape()));
    }
  }
}

}  // namespace

void sgd_step(const std::vector<Var>& params, const std::vector<Tensor>& grads, OptimizerState& state,
              double lr, double momentum) {
  check_step_shapes(params, grads, state);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& vel = state.m[i];
    Tensor& p = params[i]->value;
    const Tensor& g = grads[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      vel[j] = momentum * vel[j] + g[j];
      p[j] -= lr * vel[j];
    }
  }
  ++state.step_count;
}

void adam_step(const std::vector<Var>& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr, double beta1, double beta2, double eps) {
  check_step_shapes(params, grads, state);
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    Tensor& p = params[i]->value;
    const Tensor& g = grads[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

std::vector<int> sample_frames(int64_t t, int64_t t_train, Rng& rng) {
  if (t_train < 1 || t_train > t) {
    throw ValidationError("sample_frames: cannot draw " + std::to_string(t_train) + " frames from " +
                          std::to_string(t));
  }
  return rng.sample_without_replacement(static_cast<int>(t), static_cast<int>(t_train));
}

namespace {

Var sample_logits(Network& net, const LabeledClip& item, const TrainConfig& config, uint64_t plan_seed) {
  if (config.model == ModelKind::kTsSnn) {
    Rng rng(plan_seed);
    SegmentPlan plan = plan_segments(item.clip.t(), config.segments, config.frames_per_segment, rng);
    return ts_consensus_logits(net, item.clip, plan, config.consensus);
  }
  Rng rng(plan_seed);
  auto idx = sample_frames(item.clip.t(), config.t_train, rng);
  FrameClip sub = gather_frames(item.clip, idx);
  return forward_clip_var(net, sub);
}

}  // namespace

double train_epoch(Network& net, const Dataset& data, const TrainConfig& config, OptimizerState& opt,
                   int epoch) {
  config.validate();
  if (data.items.empty()) throw ValidationError("train_epoch: empty dataset");
  for (const auto& item : data.items) {
    if (item.label < 0 || item.label >= net.config.num_classes) {
      throw ValidationError("train_epoch: label " + std::to_string(item.label) +
                            " outside [0," + std::to_string(net.config.num_classes) + ")");
    }
  }
  net.mode = Mode::kTrain;
  const auto params = net.parameters();
  const double lr = cosine_lr(epoch, config.epochs, config.lr0);

  std::vector<size_t> order(data.items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(hash_combine(config.seed, static_cast<uint64_t>(epoch)));
  shuffle_rng.shuffle(order);

  std::vector<Tensor> grad_accum;
  grad_accum.reserve(params.size());
  for (const auto& p : params) grad_accum.push_back(Tensor::zeros(p->value.shape()));

  double loss_sum = 0.0;
  size_t cursor = 0;
  while (cursor < order.size()) {
    const size_t batch_end = std::min(cursor + static_cast<size_t>(config.batch_size), order.size());
    const int64_t batch_n = static_cast<int64_t>(batch_end - cursor);
    for (auto& g : grad_accum) g.fill(0.0);
    for (size_t b = cursor; b < batch_end; ++b) {
      const LabeledClip& item = data.items[order[b]];
      const uint64_t plan_seed =
          hash_combine(hash_combine(config.seed, static_cast<uint64_t>(epoch)), 0x1000 + order[b]);
      zero_grad(params);
      Var logits = sample_logits(net, item, config, plan_seed);
      Var loss = cross_entropy(logits, {item.label});
      loss_sum += loss->value[0];
      backward(loss);
      for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = params[i]->grad;
        Tensor& acc = grad_accum[i];
        for (int64_t j = 0; j < g.numel(); ++j) acc[j] += g[j];
      }
    }
    const double inv = 1.0 / static_cast<double>(batch_n);
    for (auto& g : grad_accum) {
      for (int64_t j = 0; j < g.numel(); ++j) g[j] *= inv;
    }
    if (config.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grad_accum) {
        for (int64_t j = 0; j < g.numel(); ++j) sq += g[j] * g[j];
      }
      const double norm = std::sqrt(sq);
      if (norm > config.clip_norm) {
        const double scale_factor = config.clip_norm / norm;
        for (auto& g : grad_accum) {
          for (int64_t j = 0; j < g.numel(); ++j) g[j] *= scale_factor;
        }
      }
    }
    if (config.optimizer == OptimizerKind::kSgd) {
      sgd_step(params, grad_accum, opt, lr, config.sgd_momentum);
    } else {
      adam_step(params, grad_accum, opt, lr, config.adam_beta1, config.adam_beta2, config.adam_eps);
    }
    cursor = batch_end;
  }
  return loss_sum / static_cast<double>(data.items.size());
}

int predict_label(Network& net, const FrameClip& clip, const TrainConfig& config) {
  Tensor scores;
  if (config.model == ModelKind::kTsSnn) {
    SegmentPlan plan = plan_segments_even(clip.t(), config.segments, config.frames_per_segment);
    scores = predict_ts(net, clip, plan, config.consensus)->value;
  } else {
    scores = forward_clip(net, clip);  // all T frames at evaluation
  }
  int best = 0;
  for (int64_t j = 1; j < scores.numel(); ++j) {
    if (scores[j] > scores[best]) best = static_cast<int>(j);
  }
  return best;
}

EvalResult evaluate(Network& net, const Dataset& data, const TrainConfig& config) {
  if (data.items.empty()) throw ValidationError("evaluate: empty dataset");
  const Mode saved = net.mode;
  net.mode = Mode::kEval;
  const int c = net.config.num_classes;
  EvalResult result;
  result.confusion.assign(static_cast<size_t>(c), std::vector<int64_t>(static_cast<size_t>(c), 0));
  int64_t correct = 0;
  for (const auto& item : data.items) {
    const int pred = predict_label(net, item.clip, config);
    result.confusion[static_cast<size_t>(item.label)][static_cast<size_t>(pred)]++;
    if (pred == item.label) ++correct;
  }
  result.total = static_cast<int64_t>(data.items.size());
  result.accuracy = static_cast<double>(correct) / static_cast<double>(result.total);
  net.mode = saved;
  return result;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainRunResult train(Network& net, const Dataset& data, const TrainConfig& config,
                     const std::string& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.log", std::ios::trunc);
  if (!metrics) throw IoError("cannot open " + out_dir + "/metrics.log for writing");
  OptimizerState opt = OptimizerState::make(config.optimizer, net.parameters());
  TrainRunResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = train_epoch(net, data, config, opt, epoch);
    const EvalResult ev = evaluate(net, data, config);
    const double lr = cosine_lr(epoch, config.epochs, config.lr0);
    metrics << "epoch=" << epoch << " lr=" << fmt_double(lr) << " loss=" << fmt_double(loss)
            << " acc=" << fmt_double(ev.accuracy) << "\n";
    metrics.flush();
    result.final_loss = loss;
    result.final_accuracy = ev.accuracy;
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_network(net, out_dir + "/model_epoch" + std::to_string(epoch) + ".ckpt");
    }
  }
  save_network(net, out_dir + "/model.ckpt");
  return result;
}

std::string render_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "model=" << (c.model == ModelKind::kTsSnn ? "ts_snn" : "snn3d") << "\n";
  out << "optimizer=" << (c.optimizer == OptimizerKind::kSgd ? "sgd" : "adam") << "\n";
  out << "lr0=" << fmt_double(c.lr0) << "\n";
  out << "epochs=" << c.epochs << "\n";
  out << "batch_size=" << c.batch_size << "\n";
  out << "seed=" << c.seed << "\n";
  out << "T=" << c.t_slices << "\n";
  out << "T_train=" << c.t_train << "\n";
  out << "segments=" << c.segments << "\n";
  out << "frames_per_segment=" << c.frames_per_segment << "\n";
  out << "consensus=" << consensus_kind_name(c.consensus) << "\n";
  out << "sgd_momentum=" << fmt_double(c.sgd_momentum) << "\n";
  out << "adam_beta1=" << fmt_double(c.adam_beta1) << "\n";
  out << "adam_beta2=" << fmt_double(c.adam_beta2) << "\n";
  out << "adam_eps=" << fmt_double(c.adam_eps) << "\n";
  out << "clip_norm=" << fmt_double(c.clip_norm) << "\n";
  out << "checkpoint_every=" << c.checkpoint_every << "\n";
  out << "channels=" << c.channels << "\n";
  out << "blocks=" << c.num_blocks << "\n";
  out << "ft=" << c.ft << "\n";
  out << "fh=" << c.fh << "\n";
  out << "fw=" << c.fw << "\n";
  out << "vth=" << fmt_double(c.v_th) << "\n";
  out << "vreset=" << fmt_double(c.v_reset) << "\n";
  out << "alpha=" << fmt_double(c.alpha) << "\n";
  return out.str();
}

Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/labels.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path);
  std::string line;
  if (!std::getline(manifest, line) || line != "file,label") {
    throw FormatError("labels.csv: first line must be 'file,label'");
  }
  std::vector<std::pair<std::string, std::string>> rows;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("labels.csv: malformed row '" + line + "'");
    rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  if (rows.empty()) throw ValidationError("labels.csv: no entries");

  std::map<std::string, int> class_ids;
  for (const auto& [file, label] : rows) class_ids.emplace(label, 0);
  Dataset data;
  for (auto& [name, id] : class_ids) {
    id = static_cast<int>(data.class_names.size());
    data.class_names.push_back(name);
  }
  for (const auto& [file, label] : rows) {
    LabeledClip item;
    item.clip = parse_clip(read_file(dir + "/" + file));
    item.label = class_ids[label];
    data.items.push_back(std::move(item));
  }
  return data;
}

}  // namespace evsnn
