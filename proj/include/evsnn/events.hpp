#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evsnn/tensor.hpp"

namespace evsnn {

// One event-camera record: pixel, microsecond timestamp, polarity bit.
struct Event {
  uint16_t x = 0;
  uint16_t y = 0;
  uint64_t t = 0;
  uint8_t p = 0;
};

// Events ordered by timestamp plus the sensor geometry they came from.
struct EventStream {
  std::vector<Event> events;
  uint32_t width = 0;
  uint32_t height = 0;
};

// Integrated two-polarity clip, shape [T, 2, H, W]. Entries are raw event
// counts; the total equals the number of integrated events.
struct FrameClip {
  Tensor data;
  int64_t t() const { return data.dim(0); }
  int64_t h() const { return data.dim(2); }
  int64_t w() const { return data.dim(3); }
  double total_mass() const;
};

enum class EventFormat { kBinary, kCsv };

// Half-open [begin, end) index range into an EventStream.
struct IndexRange {
  int64_t begin = 0;
  int64_t end = 0;
  int64_t size() const { return end - begin; }
};

// EVT1 / csv decode. Unordered inputs are stably sorted by t; invalid
// records are rejected with their index in the message.
EventStream parse_events(const std::vector<uint8_t>& bytes, EventFormat format);
std::vector<uint8_t> write_events(const EventStream& stream, EventFormat format);

// T contiguous slices covering all events, sizes differing by at most one;
// the first (N mod T) slices take the extra event.
std::vector<IndexRange> slice_by_count(const EventStream& stream, int64_t t_slices);

// Per-slice per-polarity event counting into [T, 2, H, W].
FrameClip integrate_frames(const EventStream& stream, const std::vector<IndexRange>& slices);

// Synthetic desk-scale dataset: a one-column vertical bar sweeping across the
// sensor. Each column transit emits a polarity-1 event when the bar arrives
// and a polarity-0 event when it leaves, so a single integrated frame carries
// no direction information; only the frame order does.
enum class BarClass { kLeft, kRight };
std::vector<std::pair<EventStream, BarClass>> synth_moving_bar(uint32_t width, uint32_t height,
                                                               int n_clips, BarClass label,
                                                               int64_t events_per_clip, uint64_t seed);

const char* bar_class_name(BarClass c);

// FRC1 clip interchange (f32 payload, [t][c][y][x] order).
std::vector<uint8_t> write_clip(const FrameClip& clip);
FrameClip parse_clip(const std::vector<uint8_t>& bytes);

// Whole-file helpers.
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace evsnn
