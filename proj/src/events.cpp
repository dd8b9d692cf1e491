#include "evsnn/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

namespace {

constexpr char kEvtMagic[4] = {'E', 'V', 'T', '1'};
constexpr char kFrcMagic[4] = {'F', 'R', 'C', '1'};
constexpr size_t kRecordBytes = 13;  // u16 x, u16 y, u64 t, u8 p

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float get_f32(const uint8_t* p) {
  const uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void validate_record(const Event& e, uint32_t width, uint32_t height, size_t index) {
  if (e.p > 1) {
    throw ValidationError("event record " + std::to_string(index) + ": polarity " + std::to_string(e.p) +
                          " not in {0,1}");
  }
  if (e.x >= width || e.y >= height) {
    throw ValidationError("event record " + std::to_string(index) + ": pixel (" + std::to_string(e.x) +
                          "," + std::to_string(e.y) + ") outside sensor " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
}

void sort_by_time(EventStream& s) {
  // Stable so that simultaneous events keep file order.
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
}

EventStream parse_binary(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kEvtMagic, 4) != 0) {
    throw FormatError("EVT1: missing or malformed header");
  }
  EventStream s;
  s.width = get_u32(bytes.data() + 4);
  s.height = get_u32(bytes.data() + 8);
  const uint64_t count = get_u64(bytes.data() + 12);
  if (s.width == 0 || s.height == 0) throw FormatError("EVT1: zero sensor dimension in header");
  if (bytes.size() != 20 + count * kRecordBytes) {
    throw FormatError("EVT1: expected " + std::to_string(20 + count * kRecordBytes) + " bytes for " +
                      std::to_string(count) + " records, got " + std::to_string(bytes.size()));
  }
  s.events.reserve(count);
  const uint8_t* p = bytes.data() + 20;
  for (uint64_t i = 0; i < count; ++i, p += kRecordBytes) {
    Event e;
    e.x = get_u16(p);
    e.y = get_u16(p + 2);
    e.t = get_u64(p + 4);
    e.p = p[12];
    validate_record(e, s.width, s.height, i);
    s.events.push_back(e);
  }
  sort_by_time(s);
  return s;
}

EventStream parse_csv(const std::vector<uint8_t>& bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty input");
  EventStream s;
  unsigned long w = 0, h = 0;
  if (std::sscanf(line.c_str(), "# width=%lu height=%lu", &w, &h) != 2 || w == 0 || h == 0) {
    throw FormatError("csv: first line must be '# width=<W> height=<H>'");
  }
  s.width = static_cast<uint32_t>(w);
  s.height = static_cast<uint32_t>(h);
  if (!std::getline(in, line) || line != "x,y,t,p") {
    throw FormatError("csv: second line must be the column header 'x,y,t,p'");
  }
  size_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    unsigned long x = 0, y = 0, p = 0;
    unsigned long long t = 0;
    if (std::sscanf(line.c_str(), "%lu,%lu,%llu,%lu", &x, &y, &t, &p) != 4) {
      throw FormatError("csv: malformed record " + std::to_string(index) + ": '" + line + "'");
    }
    if (x > UINT16_MAX || y > UINT16_MAX) {
      throw ValidationError("event record " + std::to_string(index) + ": coordinate exceeds u16 range");
    }
    Event e{static_cast<uint16_t>(x), static_cast<uint16_t>(y), static_cast<uint64_t>(t),
            static_cast<uint8_t>(p > 255 ? 255 : p)};
    if (p > 1) {
      throw ValidationError("event record " + std::to_string(index) + ": polarity " + std::to_string(p) +
                            " not in {0,1}");
    }
    validate_record(e, s.width, s.height, index);
    s.events.push_back(e);
    ++index;
  }
  sort_by_time(s);
  return s;
}

}  // namespace

EventStream parse_events(const std::vector<uint8_t>& bytes, EventFormat format) {
  return format == EventFormat::kBinary ? parse_binary(bytes) : parse_csv(bytes);
}

std::vector<uint8_t> write_events(const EventStream& stream, EventFormat format) {
  std::vector<uint8_t> out;
  if (format == EventFormat::kBinary) {
    out.reserve(20 + stream.events.size() * kRecordBytes);
    out.insert(out.end(), kEvtMagic, kEvtMagic + 4);
    put_u32(out, stream.width);
    put_u32(out, stream.height);
    put_u64(out, stream.events.size());
    for (const Event& e : stream.events) {
      put_u16(out, e.x);
      put_u16(out, e.y);
      put_u64(out, e.t);
      out.push_back(e.p);
    }
  } else {
    std::string text = "# width=" + std::to_string(stream.width) +
                       " height=" + std::to_string(stream.height) + "\nx,y,t,p\n";
    for (const Event& e : stream.events) {
      text += std::to_string(e.x) + "," + std::to_string(e.y) + "," + std::to_string(e.t) + "," +
              std::to_string(e.p) + "\n";
    }
    out.assign(text.begin(), text.end());
  }
  return out;
}

std::vector<IndexRange> slice_by_count(const EventStream& stream, int64_t t_slices) {
  if (t_slices <= 0) throw ValidationError("slice_by_count: T must be positive, got " + std::to_string(t_slices));
  const int64_t n = static_cast<int64_t>(stream.events.size());
  if (n < t_slices) {
    throw ValidationError("slice_by_count: " + std::to_string(n) + " events cannot fill " +
                          std::to_string(t_slices) + " slices");
  }
  const int64_t base = n / t_slices;
  const int64_t extra = n % t_slices;  // earliest slices take the remainder
  std::vector<IndexRange> out;
  out.reserve(static_cast<size_t>(t_slices));
  int64_t pos = 0;
  for (int64_t k = 0; k < t_slices; ++k) {
    const int64_t size = base + (k < extra ? 1 : 0);
    out.push_back({pos, pos + size});
    pos += size;
  }
  return out;
}

FrameClip integrate_frames(const EventStream& stream, const std::vector<IndexRange>& slices) {
  const int64_t n = static_cast<int64_t>(stream.events.size());
  const int64_t t = static_cast<int64_t>(slices.size());
  if (t == 0) throw ValidationError("integrate_frames: empty slice list");
  const int64_t h = stream.height, w = stream.width;
  FrameClip clip{Tensor::zeros({t, 2, h, w})};
  double* d = clip.data.data();
  for (int64_t k = 0; k < t; ++k) {
    const IndexRange& r = slices[static_cast<size_t>(k)];
    if (r.begin < 0 || r.end < r.begin || r.end > n) {
      throw ValidationError("integrate_frames: slice " + std::to_string(k) + " [" + std::to_string(r.begin) +
                            "," + std::to_string(r.end) + ") out of bounds for " + std::to_string(n) +
                            " events");
    }
    double* frame = d + k * 2 * h * w;
    for (int64_t i = r.begin; i < r.end; ++i) {
      const Event& e = stream.events[static_cast<size_t>(i)];
      frame[(e.p * h + e.y) * w + e.x] += 1.0;
    }
  }
  return clip;
}

double FrameClip::total_mass() const {
  double acc = 0.0;
  for (int64_t i = 0; i < data.numel(); ++i) acc += data[i];
  return acc;
}

const char* bar_class_name(BarClass c) { return c == BarClass::kLeft ? "left" : "right"; }

std::vector<std::pair<EventStream, BarClass>> synth_moving_bar(uint32_t width, uint32_t height,
                                                               int n_clips, BarClass label,
                                                               int64_t events_per_clip, uint64_t seed) {
  if (width == 0 || height == 0 || n_clips <= 0) {
    throw ValidationError("synth_moving_bar: dimensions and clip count must be positive");
  }
  if (events_per_clip < 16) {
    throw ValidationError("synth_moving_bar: events_per_clip must be at least 16, got " +
                          std::to_string(events_per_clip));
  }

  constexpr double kDurationUs = 1.0e6;
  constexpr uint64_t kDwellUs = 2;  // arrive->leave gap; far below pair spacing

  std::vector<std::pair<EventStream, BarClass>> out;
  out.reserve(static_cast<size_t>(n_clips));
  for (int clip = 0; clip < n_clips; ++clip) {
    Rng rng(hash_combine(hash_combine(seed, static_cast<uint64_t>(clip)),
                         label == BarClass::kLeft ? 0x10ull : 0x20ull));
    EventStream s;
    s.width = width;
    s.height = height;
    const int64_t pairs = events_per_clip / 2;
    const double spacing = kDurationUs / static_cast<double>(pairs);
    s.events.reserve(static_cast<size_t>(events_per_clip));
    for (int64_t i = 0; i < pairs; ++i) {
      const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(pairs);
      int64_t col = static_cast<int64_t>(u * width);
      if (col >= static_cast<int64_t>(width)) col = width - 1;
      if (label == BarClass::kLeft) col = static_cast<int64_t>(width) - 1 - col;
      const uint16_t x = static_cast<uint16_t>(col);
      const uint16_t y = static_cast<uint16_t>(rng.below(height));
      const double jitter = (rng.uniform() - 0.5) * spacing * 0.25;
      const double base = u * kDurationUs + jitter;
      const uint64_t t1 = static_cast<uint64_t>(base < 0.0 ? 0.0 : base);
      s.events.push_back({x, y, t1, 1});
      s.events.push_back({x, y, t1 + kDwellUs, 0});
    }
    // Odd request: one extra arrival event at the far edge.
    if (events_per_clip % 2 == 1) {
      const uint16_t x = label == BarClass::kLeft ? 0 : static_cast<uint16_t>(width - 1);
      s.events.push_back({x, static_cast<uint16_t>(rng.below(height)),
                          static_cast<uint64_t>(kDurationUs) + 10, 1});
    }
    sort_by_time(s);
    // Enforce strictly increasing timestamps.
    for (size_t i = 1; i < s.events.size(); ++i) {
      if (s.events[i].t <= s.events[i - 1].t) s.events[i].t = s.events[i - 1].t + 1;
    }
    out.emplace_back(std::move(s), label);
  }
  return out;
}

std::vector<uint8_t> write_clip(const FrameClip& clip) {
  const auto& shape = clip.data.shape();
  if (shape.size() != 4 || shape[1] != 2) {
    throw ValidationError("write_clip: clip must have shape [T,2,H,W], got " + shape_str(shape));
  }
  std::vector<uint8_t> out;
  out.reserve(20 + static_cast<size_t>(clip.data.numel()) * 4);
  out.insert(out.end(), kFrcMagic, kFrcMagic + 4);
  put_u32(out, static_cast<uint32_t>(shape[0]));
  put_u32(out, static_cast<uint32_t>(shape[1]));
  put_u32(out, static_cast<uint32_t>(shape[2]));
  put_u32(out, static_cast<uint32_t>(shape[3]));
  for (int64_t i = 0; i < clip.data.numel(); ++i) put_f32(out, static_cast<float>(clip.data[i]));
  return out;
}

FrameClip parse_clip(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kFrcMagic, 4) != 0) {
    throw FormatError("FRC1: missing or malformed header");
  }
  const int64_t t = get_u32(bytes.data() + 4);
  const int64_t c = get_u32(bytes.data() + 8);
  const int64_t h = get_u32(bytes.data() + 12);
  const int64_t w = get_u32(bytes.data() + 16);
  if (c != 2) throw FormatError("FRC1: channel count must be 2, got " + std::to_string(c));
  if (t <= 0 || h <= 0 || w <= 0) throw FormatError("FRC1: non-positive dimension in header");
  const size_t expected = 20 + static_cast<size_t>(t * c * h * w) * 4;
  if (bytes.size() != expected) {
    throw FormatError("FRC1: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  FrameClip clip{Tensor({t, c, h, w})};
  const uint8_t* p = bytes.data() + 20;
  for (int64_t i = 0; i < clip.data.numel(); ++i, p += 4) {
    clip.data[i] = static_cast<double>(get_f32(p));
  }
  return clip;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace evsnn
