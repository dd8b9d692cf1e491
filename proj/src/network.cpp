#include "evsnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "evsnn/errors.hpp"

namespace evsnn {

namespace {

Var init_conv_weight(std::vector<int64_t> shape, Rng& rng, const std::string& name) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return parameter(Tensor::uniform(std::move(shape), -bound, bound, rng), name);
}

Stage make_stage_2d(int64_t cin, int64_t cout, int fh, int fw, const ArchConfig& cfg, Rng& rng,
                    const std::string& prefix) {
  Stage s;
  s.conv.weight = init_conv_weight({cout, cin, fh, fw}, rng, prefix + ".conv.weight");
  // Same padding; even kernels pad one less on the leading side.
  s.conv.pad_lo = {0, (fh - 1) / 2, (fw - 1) / 2};
  s.conv.pad_hi = {0, fh / 2, fw / 2};
  s.bn.gamma = parameter(Tensor::full({cout}, 1.0), prefix + ".bn.gamma");
  s.bn.beta = parameter(Tensor::zeros({cout}), prefix + ".bn.beta");
  s.bn.state = BatchNormState::make(cout);
  s.plif.a = parameter(Tensor::scalar(cfg.plif_init), prefix + ".plif.a");
  return s;
}

Stage make_stage_3d(int64_t cin, int64_t cout, int ft, int fh, int fw, const ArchConfig& cfg, Rng& rng,
                    const std::string& prefix) {
  Stage s;
  s.conv.weight = init_conv_weight({cout, cin, ft, fh, fw}, rng, prefix + ".conv.weight");
  s.conv.pad_lo = {(ft - 1) / 2, (fh - 1) / 2, (fw - 1) / 2};
  s.conv.pad_hi = {ft / 2, fh / 2, fw / 2};
  s.bn.gamma = parameter(Tensor::full({cout}, 1.0), prefix + ".bn.gamma");
  s.bn.beta = parameter(Tensor::zeros({cout}), prefix + ".bn.beta");
  s.bn.state = BatchNormState::make(cout);
  s.plif.a = parameter(Tensor::scalar(cfg.plif_init), prefix + ".plif.a");
  return s;
}

// Pooling plan: 2x2 (1x2x2 in 3d) window applies after a block while the
// pooled extents stay at or above the window, so shapes never degenerate.
std::vector<bool> pool_plan(const ArchConfig& cfg, int64_t& h, int64_t& w) {
  std::vector<bool> plan;
  h = cfg.input_h;
  w = cfg.input_w;
  for (int b = 0; b < cfg.num_blocks; ++b) {
    if (h / 2 >= 2 && w / 2 >= 2) {
      plan.push_back(true);
      h /= 2;
      w /= 2;
    } else {
      plan.push_back(false);
    }
  }
  return plan;
}

void validate_build(const ArchConfig& cfg) {
  if (cfg.channels <= 0 || cfg.num_classes <= 0 || cfg.num_blocks <= 0) {
    throw ValidationError("network: channels, classes and blocks must be positive");
  }
  if (cfg.input_h < 2 || cfg.input_w < 2) {
    throw ValidationError("network: input " + std::to_string(cfg.input_h) + "x" +
                          std::to_string(cfg.input_w) + " too small for the pool chain; minimum input size is 2x2");
  }
  if (cfg.ft <= 0 || cfg.fh <= 0 || cfg.fw <= 0) {
    throw ValidationError("network: kernel dims must be positive");
  }
}

void check_activation(const Var& v, const std::string& where) {
  if (!v->value.all_finite()) {
    throw NumericError("non-finite activation after " + where);
  }
}

// [T,N,C,H,W] <-> [T*N,C,H,W]
Var fold_time(const Var& x5) {
  const auto& s = x5->value.shape();
  return reshape(x5, {s[0] * s[1], s[2], s[3], s[4]});
}

Var unfold_time(const Var& x4, int64_t t, int64_t n) {
  const auto& s = x4->value.shape();
  return reshape(x4, {t, n, s[1], s[2], s[3]});
}

}  // namespace

NeuronParams Network::neuron_params(const PlifUnit& plif) const {
  return NeuronParams::plif(plif.a, config.v_th, config.v_reset, config.alpha);
}

namespace {

// conv -> BN -> PLIF on a time-major 2d activation [T,N,C,H,W].
Var stage_forward_2d(Network& net, Stage& stage, const Var& x5, const std::string& where) {
  const auto& s = x5->value.shape();
  const int64_t t = s[0], n = s[1];
  Var y = conv2d_padded(fold_time(x5), stage.conv.weight, {1, 1},
                        {stage.conv.pad_lo[1], stage.conv.pad_lo[2]},
                        {stage.conv.pad_hi[1], stage.conv.pad_hi[2]});
  check_activation(y, where + ".conv");
  y = batchnorm(y, stage.bn.gamma, stage.bn.beta, stage.bn.state, net.mode);
  check_activation(y, where + ".bn");
  return scan_time_major(unfold_time(y, t, n), net.neuron_params(stage.plif));
}

// conv -> BN -> PLIF on a 3d activation [N,C,T,H,W]; the PLIF scans the
// temporal feature axis.
Var stage_forward_3d(Network& net, Stage& stage, const Var& x, const std::string& where) {
  Var y = conv3d_padded(x, stage.conv.weight, {1, 1, 1}, stage.conv.pad_lo, stage.conv.pad_hi);
  check_activation(y, where + ".conv");
  y = batchnorm(y, stage.bn.gamma, stage.bn.beta, stage.bn.state, net.mode);
  check_activation(y, where + ".bn");
  Var tm = permute(y, {2, 0, 1, 3, 4});  // [T,N,C,H,W]
  Var spikes = scan_time_major(tm, net.neuron_params(stage.plif));
  return permute(spikes, {1, 2, 0, 3, 4});
}

Var pool_2d(const Var& x5) {
  const auto& s = x5->value.shape();
  Var pooled = maxpool(fold_time(x5), {2, 2}, {2, 2});
  return unfold_time(pooled, s[0], s[1]);
}

Var pool_3d(const Var& x) { return maxpool(x, {1, 2, 2}, {1, 2, 2}); }

}  // namespace

Var sew_block_forward(Network& net, SewBlock& block, const Var& spikes_in) {
  Var branch;
  if (net.config.arch == Arch::k2d) {
    branch = stage_forward_2d(net, block.s2, stage_forward_2d(net, block.s1, spikes_in, "block.s1"),
                              "block.s2");
  } else {
    branch = stage_forward_3d(net, block.s2, stage_forward_3d(net, block.s1, spikes_in, "block.s1"),
                              "block.s2");
  }
  return add(branch, spikes_in);
}

Network build_sew_resnet_2d(const ArchConfig& config) {
  validate_build(config);
  Network net;
  net.config = config;
  net.config.arch = Arch::k2d;
  Rng rng(hash_combine(config.init_seed, 0x2d));
  const int64_t c = config.channels;
  // Pointwise stem, mirroring the 1x1x1 stem of the 3d variant.
  net.stem = make_stage_2d(2, c, 1, 1, config, rng, "stem");
  const auto plan = pool_plan(config, net.final_h, net.final_w);
  for (int b = 0; b < config.num_blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    SewBlock blk;
    blk.s1 = make_stage_2d(c, c, config.fh, config.fw, config, rng, prefix + ".s1");
    blk.s2 = make_stage_2d(c, c, config.fh, config.fw, config, rng, prefix + ".s2");
    blk.pool_after = plan[static_cast<size_t>(b)];
    net.blocks.push_back(std::move(blk));
  }
  net.head_features = c * net.final_h * net.final_w;
  const double bound = 1.0 / std::sqrt(static_cast<double>(net.head_features));
  net.head_weight =
      parameter(Tensor::uniform({net.head_features, config.num_classes}, -bound, bound, rng), "head.weight");
  net.head_bias = parameter(Tensor::zeros({config.num_classes}), "head.bias");
  return net;
}

Network build_sew_resnet_3d(const ArchConfig& config) {
  validate_build(config);
  Network net;
  net.config = config;
  net.config.arch = Arch::k3d;
  Rng rng(hash_combine(config.init_seed, 0x3d));
  const int64_t c = config.channels;
  // 1x1x1 stem.
  net.stem = make_stage_3d(2, c, 1, 1, 1, config, rng, "stem");
  const auto plan = pool_plan(config, net.final_h, net.final_w);
  for (int b = 0; b < config.num_blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    SewBlock blk;
    blk.s1 = make_stage_3d(c, c, config.ft, config.fh, config.fw, config, rng, prefix + ".s1");
    blk.s2 = make_stage_3d(c, c, config.ft, config.fh, config.fw, config, rng, prefix + ".s2");
    blk.pool_after = plan[static_cast<size_t>(b)];
    net.blocks.push_back(std::move(blk));
  }
  net.head_features = c * net.final_h * net.final_w;
  const double bound = 1.0 / std::sqrt(static_cast<double>(net.head_features));
  net.head_weight =
      parameter(Tensor::uniform({net.head_features, config.num_classes}, -bound, bound, rng), "head.weight");
  net.head_bias = parameter(Tensor::zeros({config.num_classes}), "head.bias");
  return net;
}

Network build_network(const ArchConfig& config) {
  return config.arch == Arch::k2d ? build_sew_resnet_2d(config) : build_sew_resnet_3d(config);
}

Var forward_batch(Network& net, const Var& input) {
  const auto& shape = input->value.shape();
  if (shape.size() != 5) {
    throw ValidationError("forward: expected a 5-d input, got " + shape_str(shape));
  }
  Var x;
  if (net.config.arch == Arch::k2d) {
    if (shape[2] != 2 || shape[3] != net.config.input_h || shape[4] != net.config.input_w) {
      throw ValidationError("forward: clip shape " + shape_str(shape) + " does not match network input [T,N,2," +
                            std::to_string(net.config.input_h) + "," + std::to_string(net.config.input_w) + "]");
    }
    x = stage_forward_2d(net, net.stem, input, "stem");
    for (size_t b = 0; b < net.blocks.size(); ++b) {
      x = sew_block_forward(net, net.blocks[b], x);
      check_activation(x, "block" + std::to_string(b));
      if (net.blocks[b].pool_after) x = pool_2d(x);
    }
  } else {
    if (shape[1] != 2 || shape[3] != net.config.input_h || shape[4] != net.config.input_w) {
      throw ValidationError("forward: clip shape " + shape_str(shape) + " does not match network input [N,2,T," +
                            std::to_string(net.config.input_h) + "," + std::to_string(net.config.input_w) + "]");
    }
    x = stage_forward_3d(net, net.stem, input, "stem");
    for (size_t b = 0; b < net.blocks.size(); ++b) {
      x = sew_block_forward(net, net.blocks[b], x);
      check_activation(x, "block" + std::to_string(b));
      if (net.blocks[b].pool_after) x = pool_3d(x);
    }
    x = permute(x, {2, 0, 1, 3, 4});  // -> [T,N,C,H,W]
  }
  // Rate decoding: per-timestep head outputs averaged over time.
  const auto& xs = x->value.shape();
  const int64_t t = xs[0], n = xs[1];
  Var flat = reshape(x, {t * n, xs[2] * xs[3] * xs[4]});
  Var logits = linear(flat, net.head_weight, net.head_bias);
  check_activation(logits, "head");
  return mean_leading(reshape(logits, {t, n, net.config.num_classes}));
}

Var forward_clip_var(Network& net, const FrameClip& clip) {
  const auto& s = clip.data.shape();
  Tensor input;
  if (net.config.arch == Arch::k2d) {
    input = clip.data.reshaped({s[0], 1, s[1], s[2], s[3]});  // [T,1,2,H,W]
  } else {
    // [T,2,H,W] -> [1,2,T,H,W]
    input = Tensor({1, s[1], s[0], s[2], s[3]});
    const int64_t t = s[0], hw = s[2] * s[3];
    for (int64_t k = 0; k < t; ++k) {
      for (int64_t c = 0; c < s[1]; ++c) {
        const double* src = clip.data.data() + (k * s[1] + c) * hw;
        double* dst = input.data() + (c * t + k) * hw;
        std::copy(src, src + hw, dst);
      }
    }
  }
  return forward_batch(net, constant(std::move(input)));
}

Tensor forward_clip(Network& net, const FrameClip& clip) {
  Var out = forward_clip_var(net, clip);
  return out->value.reshaped({net.config.num_classes});
}

std::vector<Var> Network::parameters() const {
  std::vector<Var> out;
  auto add_stage = [&out](const Stage& s) {
    out.push_back(s.conv.weight);
    out.push_back(s.bn.gamma);
    out.push_back(s.bn.beta);
    out.push_back(s.plif.a);
  };
  add_stage(stem);
  for (const auto& b : blocks) {
    add_stage(b.s1);
    add_stage(b.s2);
  }
  out.push_back(head_weight);
  out.push_back(head_bias);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_stage = [&out](Stage& s, const std::string& prefix) {
    out.emplace_back(prefix + ".conv.weight", &s.conv.weight->value);
    out.emplace_back(prefix + ".bn.gamma", &s.bn.gamma->value);
    out.emplace_back(prefix + ".bn.beta", &s.bn.beta->value);
    out.emplace_back(prefix + ".bn.running_mean", &s.bn.state.running_mean);
    out.emplace_back(prefix + ".bn.running_var", &s.bn.state.running_var);
    out.emplace_back(prefix + ".plif.a", &s.plif.a->value);
  };
  add_stage(stem, "stem");
  for (size_t b = 0; b < blocks.size(); ++b) {
    add_stage(blocks[b].s1, "block" + std::to_string(b) + ".s1");
    add_stage(blocks[b].s2, "block" + std::to_string(b) + ".s2");
  }
  out.emplace_back("head.weight", &head_weight->value);
  out.emplace_back("head.bias", &head_bias->value);
  return out;
}

int64_t LayerSpec::param_count() const {
  switch (kind) {
    case Kind::kConv2d:
      return out_channels * in_channels * fh * fw;
    case Kind::kConv3d:
      return out_channels * in_channels * ft * fh * fw;
    case Kind::kBatchNorm:
      return 2 * out_channels;
    case Kind::kPlif:
      return 1;
    case Kind::kLinear:
      return in_features * out_features + out_features;
    case Kind::kMaxPool:
    case Kind::kFlatten:
      return 0;
  }
  return 0;
}

std::vector<LayerSpec> Network::layer_specs() const {
  std::vector<LayerSpec> out;
  const bool is3d = config.arch == Arch::k3d;
  auto add_stage = [&](const Stage& s) {
    const auto& ws = s.conv.weight->value.shape();
    LayerSpec conv;
    conv.kind = is3d ? LayerSpec::Kind::kConv3d : LayerSpec::Kind::kConv2d;
    conv.out_channels = ws[0];
    conv.in_channels = ws[1];
    if (is3d) {
      conv.ft = static_cast<int>(ws[2]);
      conv.fh = static_cast<int>(ws[3]);
      conv.fw = static_cast<int>(ws[4]);
    } else {
      conv.fh = static_cast<int>(ws[2]);
      conv.fw = static_cast<int>(ws[3]);
    }
    out.push_back(conv);
    LayerSpec bn;
    bn.kind = LayerSpec::Kind::kBatchNorm;
    bn.in_channels = bn.out_channels = ws[0];
    out.push_back(bn);
    LayerSpec plif;
    plif.kind = LayerSpec::Kind::kPlif;
    out.push_back(plif);
  };
  add_stage(stem);
  for (const auto& b : blocks) {
    add_stage(b.s1);
    add_stage(b.s2);
    if (b.pool_after) {
      LayerSpec pool;
      pool.kind = LayerSpec::Kind::kMaxPool;
      pool.ft = is3d ? 1 : 0;
      pool.fh = pool.fw = 2;
      out.push_back(pool);
    }
  }
  LayerSpec flat;
  flat.kind = LayerSpec::Kind::kFlatten;
  out.push_back(flat);
  LayerSpec head;
  head.kind = LayerSpec::Kind::kLinear;
  head.in_features = head_features;
  head.out_features = config.num_classes;
  out.push_back(head);
  return out;
}

int64_t Network::parameter_count() const {
  int64_t acc = 0;
  for (const auto& p : parameters()) acc += p->value.numel();
  return acc;
}

std::string render_arch_description(const ArchConfig& config) {
  char buf[64];
  std::string out;
  out += std::string("arch=") + (config.arch == Arch::k2d ? "2d" : "3d") + "\n";
  out += "channels=" + std::to_string(config.channels) + "\n";
  out += "blocks=" + std::to_string(config.num_blocks) + "\n";
  out += "ft=" + std::to_string(config.ft) + "\n";
  out += "fh=" + std::to_string(config.fh) + "\n";
  out += "fw=" + std::to_string(config.fw) + "\n";
  out += "classes=" + std::to_string(config.num_classes) + "\n";
  std::snprintf(buf, sizeof(buf), "vth=%.17g\n", config.v_th);
  out += buf;
  std::snprintf(buf, sizeof(buf), "vreset=%.17g\n", config.v_reset);
  out += buf;
  std::snprintf(buf, sizeof(buf), "alpha=%.17g\n", config.alpha);
  out += buf;
  return out;
}

}  // namespace evsnn
