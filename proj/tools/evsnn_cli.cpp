// Command-line front end: synth | preprocess | train | eval | inspect.
// Exit codes: 0 success, 2 validation/format, 3 state/compat, 4 I/O.

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "evsnn/checkpoint.hpp"
#include "evsnn/errors.hpp"
#include "evsnn/events.hpp"
#include "evsnn/train.hpp"

namespace fs = std::filesystem;
using namespace evsnn;

namespace {

std::string clip_name(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%04d%s", index, ext);
  return buf;
}

// ---- config file ------------------------------------------------------------

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config: expected key=value, got '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void apply_kv(TrainConfig& c, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "model") {
        if (value == "ts_snn") c.model = ModelKind::kTsSnn;
        else if (value == "snn3d") c.model = ModelKind::kSnn3d;
        else throw ValidationError("config: model must be ts_snn or snn3d, got '" + value + "'");
      } else if (key == "optimizer") {
        if (value == "sgd") c.optimizer = OptimizerKind::kSgd;
        else if (value == "adam") c.optimizer = OptimizerKind::kAdam;
        else throw ValidationError("config: optimizer must be sgd or adam, got '" + value + "'");
      } else if (key == "lr0") c.lr0 = std::stod(value);
      else if (key == "epochs") c.epochs = std::stoi(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "T") c.t_slices = std::stoi(value);
      else if (key == "T_train") c.t_train = std::stoi(value);
      else if (key == "segments") c.segments = std::stoi(value);
      else if (key == "frames_per_segment") c.frames_per_segment = std::stoi(value);
      else if (key == "consensus") c.consensus = consensus_kind_from(value);
      else if (key == "sgd_momentum") c.sgd_momentum = std::stod(value);
      else if (key == "adam_beta1") c.adam_beta1 = std::stod(value);
      else if (key == "adam_beta2") c.adam_beta2 = std::stod(value);
      else if (key == "adam_eps") c.adam_eps = std::stod(value);
      else if (key == "clip_norm") c.clip_norm = std::stod(value);
      else if (key == "checkpoint_every") c.checkpoint_every = std::stoi(value);
      else if (key == "channels") c.channels = std::stoll(value);
      else if (key == "blocks") c.num_blocks = std::stoi(value);
      else if (key == "ft") c.ft = std::stoi(value);
      else if (key == "fh") c.fh = std::stoi(value);
      else if (key == "fw") c.fw = std::stoi(value);
      else if (key == "vth") c.v_th = std::stod(value);
      else if (key == "vreset") c.v_reset = std::stod(value);
      else if (key == "alpha") c.alpha = std::stod(value);
      else throw ValidationError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ValidationError("config: cannot parse value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw ValidationError("config: value '" + value + "' out of range for key '" + key + "'");
    }
  }
}

struct TrainFlags {
  std::string config_path, arch_path, data_dir, out_dir, checkpoint;
  std::map<std::string, std::string> overrides;
};

// Architecture description files use arch=2d|3d; map that onto the model
// kind (the 2d path is the temporal-segment model).
void apply_arch_file(TrainConfig& c, const std::string& path, int expected_classes) {
  auto kv = parse_kv_file(path);
  const auto arch = kv.find("arch");
  if (arch == kv.end()) throw ValidationError("arch file: missing 'arch' key");
  if (arch->second == "2d") c.model = ModelKind::kTsSnn;
  else if (arch->second == "3d") c.model = ModelKind::kSnn3d;
  else throw ValidationError("arch file: arch must be 2d or 3d, got '" + arch->second + "'");
  kv.erase(arch);
  const auto classes = kv.find("classes");
  if (classes != kv.end()) {
    if (expected_classes > 0 && std::stoi(classes->second) != expected_classes) {
      throw ValidationError("arch file declares " + classes->second + " classes but the dataset has " +
                            std::to_string(expected_classes));
    }
    kv.erase("classes");
  }
  apply_kv(c, kv);
}

void add_override_flags(CLI::App* cmd, TrainFlags& f) {
  auto hook = [&f](const std::string& key) {
    return [&f, key](const std::string& v) { f.overrides[key] = v; };
  };
  cmd->add_option_function<std::string>("--model", hook("model"), "ts_snn | snn3d");
  cmd->add_option_function<std::string>("--optimizer", hook("optimizer"), "sgd | adam");
  cmd->add_option_function<std::string>("--lr0", hook("lr0"), "initial learning rate");
  cmd->add_option_function<std::string>("--epochs", hook("epochs"), "total epochs (T_max for annealing)");
  cmd->add_option_function<std::string>("--batch-size", hook("batch_size"), "mini-batch size");
  cmd->add_option_function<std::string>("--seed", hook("seed"), "global seed");
  cmd->add_option_function<std::string>("--T", hook("T"), "integration slices (must match the data)");
  cmd->add_option_function<std::string>("--T-train", hook("T_train"), "frames sampled per clip (3d path)");
  cmd->add_option_function<std::string>("--segments", hook("segments"), "segment count L");
  cmd->add_option_function<std::string>("--frames-per-segment", hook("frames_per_segment"),
                                        "frames K drawn per segment");
  cmd->add_option_function<std::string>("--consensus", hook("consensus"), "sum | avg | max");
  cmd->add_option_function<std::string>("--clip-norm", hook("clip_norm"), "gradient norm clip (0 = off)");
  cmd->add_option_function<std::string>("--checkpoint-every", hook("checkpoint_every"),
                                        "checkpoint every N epochs (0 = final only)");
  cmd->add_option_function<std::string>("--channels", hook("channels"), "conv channels");
  cmd->add_option_function<std::string>("--blocks", hook("blocks"), "SEW block count");
  cmd->add_option_function<std::string>("--ft", hook("ft"), "temporal kernel extent f_t");
  cmd->add_option_function<std::string>("--fh", hook("fh"), "spatial kernel extent f_h");
  cmd->add_option_function<std::string>("--fw", hook("fw"), "spatial kernel extent f_w");
  cmd->add_option_function<std::string>("--vth", hook("vth"), "firing threshold");
  cmd->add_option_function<std::string>("--vreset", hook("vreset"), "reset potential");
  cmd->add_option_function<std::string>("--alpha", hook("alpha"), "surrogate width");
}

TrainConfig resolve_config(const TrainFlags& f) {
  TrainConfig c;
  c.t_slices = 0;  // infer from data unless given
  if (!f.config_path.empty()) apply_kv(c, parse_kv_file(f.config_path));
  apply_kv(c, f.overrides);  // flags win over file values
  return c;
}

// Reconciles the config's T with the data and validates the combination.
void check_config_against_data(const Dataset& data, TrainConfig& c) {
  const auto& first = data.items.front().clip.data.shape();
  for (const auto& item : data.items) {
    if (item.clip.data.shape() != first) {
      throw ValidationError("dataset: clips disagree on shape; expected " + shape_str(first));
    }
  }
  if (c.t_slices == 0) {
    c.t_slices = static_cast<int>(first[0]);
  } else if (c.t_slices != first[0]) {
    throw ValidationError("config: T=" + std::to_string(c.t_slices) + " but the data was integrated with T=" +
                          std::to_string(first[0]));
  }
  if (c.model == ModelKind::kSnn3d && c.t_train > c.t_slices) {
    throw ValidationError("config: T_train (" + std::to_string(c.t_train) + ") exceeds the data's T (" +
                          std::to_string(c.t_slices) + ")");
  }
  c.validate();
}

Dataset load_and_check(const std::string& dir, TrainConfig& c) {
  Dataset data = load_dataset(dir);
  check_config_against_data(data, c);
  return data;
}

// ---- subcommands ------------------------------------------------------------

int cmd_synth(const std::string& out_dir, int n_clips, int size, int64_t events_per_clip, uint64_t seed) {
  if (n_clips <= 0 || size <= 1) throw ValidationError("synth: n_clips must be positive and size at least 2");
  fs::create_directories(out_dir);
  const int n_left = (n_clips + 1) / 2;
  const int n_right = n_clips / 2;
  const auto width = static_cast<uint32_t>(size);
  auto left = synth_moving_bar(width, width, n_left, BarClass::kLeft, events_per_clip, seed);
  auto right = synth_moving_bar(width, width, n_right, BarClass::kRight, events_per_clip, seed);
  std::string manifest = "file,label\n";
  int index = 0;
  auto emit = [&](const std::vector<std::pair<EventStream, BarClass>>& clips) {
    for (const auto& [stream, label] : clips) {
      const std::string name = clip_name(index++, ".evt");
      write_file(out_dir + "/" + name, write_events(stream, EventFormat::kBinary));
      manifest += name + "," + bar_class_name(label) + "\n";
    }
  };
  emit(left);
  emit(right);
  write_file(out_dir + "/labels.csv", std::vector<uint8_t>(manifest.begin(), manifest.end()));
  std::cout << "wrote " << n_clips << " clips to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_dir, const std::string& out_dir, int t_slices, bool binarize) {
  if (t_slices <= 0) throw ValidationError("preprocess: T must be positive");
  std::ifstream manifest(in_dir + "/labels.csv");
  if (!manifest) throw IoError("cannot open " + in_dir + "/labels.csv");
  std::string line;
  if (!std::getline(manifest, line) || line != "file,label") {
    throw FormatError("labels.csv: first line must be 'file,label'");
  }
  fs::create_directories(out_dir);
  std::string out_manifest = "file,label\n";
  std::string skipped;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("labels.csv: malformed row '" + line + "'");
    const std::string file = line.substr(0, comma);
    const std::string label = line.substr(comma + 1);
    EventStream stream;
    try {
      stream = parse_events(read_file(in_dir + "/" + file), EventFormat::kBinary);
    } catch (const std::runtime_error& e) {
      throw ValidationError(file + ": " + e.what());
    }
    if (static_cast<int64_t>(stream.events.size()) < t_slices) {
      std::cerr << "warning: " << file << " has " << stream.events.size() << " events, fewer than T="
                << t_slices << "; skipped\n";
      skipped += file + "\n";
      continue;
    }
    FrameClip clip = integrate_frames(stream, slice_by_count(stream, t_slices));
    if (binarize) {
      for (int64_t i = 0; i < clip.data.numel(); ++i) clip.data[i] = clip.data[i] > 0.0 ? 1.0 : 0.0;
    }
    std::string out_name = file;
    const auto dot = out_name.rfind('.');
    if (dot != std::string::npos) out_name = out_name.substr(0, dot);
    out_name += ".frc";
    write_file(out_dir + "/" + out_name, write_clip(clip));
    out_manifest += out_name + "," + label + "\n";
  }
  write_file(out_dir + "/labels.csv", std::vector<uint8_t>(out_manifest.begin(), out_manifest.end()));
  write_file(out_dir + "/skipped.txt", std::vector<uint8_t>(skipped.begin(), skipped.end()));
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  TrainConfig config = resolve_config(flags);
  Dataset data = load_and_check(flags.data_dir, config);
  const auto& shape = data.items.front().clip.data.shape();
  Network net = build_network(config.arch_config(data.num_classes(), shape[2], shape[3]));
  fs::create_directories(flags.out_dir);
  {
    // Echo the fully resolved configuration plus the architecture
    // description for provenance and later evaluation.
    const std::string rendered = render_config(config);
    write_file(flags.out_dir + "/config.resolved", std::vector<uint8_t>(rendered.begin(), rendered.end()));
    const std::string arch = render_arch_description(net.config);
    write_file(flags.out_dir + "/arch.cfg", std::vector<uint8_t>(arch.begin(), arch.end()));
  }
  TrainRunResult result = train(net, data, config, flags.out_dir);
  std::cout << "final loss=" << result.final_loss << " acc=" << result.final_accuracy << "\n";
  return 0;
}

int cmd_eval(const TrainFlags& flags) {
  TrainConfig config = resolve_config(flags);
  Dataset data = load_dataset(flags.data_dir);
  if (!flags.arch_path.empty()) apply_arch_file(config, flags.arch_path, data.num_classes());
  check_config_against_data(data, config);
  const auto& shape = data.items.front().clip.data.shape();
  Network net = build_network(config.arch_config(data.num_classes(), shape[2], shape[3]));
  load_network(net, flags.checkpoint);
  const EvalResult result = evaluate(net, data, config);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", result.accuracy);
  std::cout << "accuracy=" << buf << "\n";
  std::cout << "confusion (rows = true class, cols = predicted):\n";
  for (size_t i = 0; i < result.confusion.size(); ++i) {
    std::cout << data.class_names[i] << ":";
    for (int64_t v : result.confusion[i]) std::cout << " " << v;
    std::cout << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 5 && std::memcmp(bytes.data(), "CKPT1", 5) == 0) {
    const auto tensors = parse_checkpoint(bytes);
    std::cout << "CKPT1 checkpoint, " << tensors.size() << " tensors\n";
    int64_t total = 0;
    for (const auto& t : tensors) {
      std::cout << "  " << t.name << " " << shape_str(t.value.shape()) << " (" << t.value.numel()
                << " values)\n";
      total += t.value.numel();
    }
    std::cout << "total values: " << total << "\n";
    return 0;
  }
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "EVT1", 4) == 0) {
    const EventStream s = parse_events(bytes, EventFormat::kBinary);
    std::cout << "EVT1 event stream, sensor " << s.width << "x" << s.height << ", " << s.events.size()
              << " events\n";
    if (!s.events.empty()) {
      std::cout << "t range: [" << s.events.front().t << ", " << s.events.back().t << "] us\n";
      int64_t on = 0;
      for (const auto& e : s.events) on += e.p;
      std::cout << "polarity split: " << on << " on / " << (static_cast<int64_t>(s.events.size()) - on)
                << " off\n";
    }
    return 0;
  }
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "FRC1", 4) == 0) {
    const FrameClip clip = parse_clip(bytes);
    std::cout << "FRC1 frame clip, shape " << shape_str(clip.data.shape()) << "\n";
    std::cout << "total mass: " << clip.total_mass() << "\n";
    return 0;
  }
  throw ValidationError("unknown magic in " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-camera spiking neural network engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic moving-bar dataset (EVT1 + labels.csv)");
  std::string synth_out;
  int synth_n = 40, synth_size = 32;
  int64_t synth_events = 4800;
  uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--clips", synth_n, "number of clips (split evenly between left/right)");
  synth->add_option("--size", synth_size, "sensor width and height in pixels");
  synth->add_option("--events", synth_events, "events per clip");
  synth->add_option("--seed", synth_seed, "generator seed");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "integrate EVT1 streams into FRC1 clips");
  std::string pre_in, pre_out;
  int pre_t = 16;
  bool pre_binarize = false;
  pre->add_option("--in", pre_in, "directory with EVT1 files and labels.csv")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_option("--T", pre_t, "number of integration slices");
  pre->add_flag("--binarize", pre_binarize, "clamp frame counts to {0,1}");

  // train
  auto* tr = app.add_subcommand("train", "train a model end to end");
  TrainFlags train_flags;
  tr->add_option("--config", train_flags.config_path, "key=value config file");
  tr->add_option("--data", train_flags.data_dir, "directory with FRC1 clips and labels.csv")->required();
  tr->add_option("--out", train_flags.out_dir, "output directory")->required();
  add_override_flags(tr, train_flags);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  TrainFlags eval_flags;
  ev->add_option("--checkpoint", eval_flags.checkpoint, "CKPT1 file")->required();
  ev->add_option("--config", eval_flags.config_path, "key=value config file");
  ev->add_option("--arch", eval_flags.arch_path,
                 "architecture description file (keys: arch, channels, blocks, ft, fh, fw, classes, "
                 "vth, vreset, alpha)");
  ev->add_option("--data", eval_flags.data_dir, "directory with FRC1 clips and labels.csv")->required();
  add_override_flags(ev, eval_flags);

  // inspect
  auto* ins = app.add_subcommand("inspect", "summarize an EVT1/FRC1/CKPT1 file");
  std::string inspect_path;
  ins->add_option("file", inspect_path, "file to inspect")->required();

  try {
    app.parse(argc, argv);
    if (*synth) return cmd_synth(synth_out, synth_n, synth_size, synth_events, synth_seed);
    if (*pre) return cmd_preprocess(pre_in, pre_out, pre_t, pre_binarize);
    if (*tr) return cmd_train(train_flags);
    if (*ev) return cmd_eval(eval_flags);
    if (*ins) return cmd_inspect(inspect_path);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
