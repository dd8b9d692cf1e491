#pragma once

#include <vector>

#include "evsnn/network.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

// L contiguous segments of [0, T) with K frame indices drawn per segment,
// sorted ascending within each segment.
struct SegmentPlan {
  int64_t t_total = 0;
  int l = 0;
  int k = 0;
  std::vector<IndexRange> ranges;
  std::vector<std::vector<int>> indices;
};

enum class ConsensusKind { kSum, kAverage, kMax };

// Segment ranges follow the event-slicing remainder rule (earliest segments
// take the extra frame); K distinct indices per segment are sampled without
// replacement.
SegmentPlan plan_segments(int64_t t_total, int l, int k, Rng& rng);

// Deterministic evaluation plan: K evenly spaced indices per segment.
SegmentPlan plan_segments_even(int64_t t_total, int l, int k);

// Runs the weight-shared network once per segment on the gathered K-frame
// sub-clip (fresh neuron state each time) and softmaxes each output.
std::vector<Var> forward_segments(Network& net, const FrameClip& clip, const SegmentPlan& plan);

// Elementwise sum / average / max across the per-segment distributions.
Var consensus(const std::vector<Var>& distributions, ConsensusKind kind);

// y = softmax(consensus(forward_segments(...))); [1, num_classes].
Var predict_ts(Network& net, const FrameClip& clip, const SegmentPlan& plan, ConsensusKind kind);

// Pre-softmax consensus values, used as training logits.
Var ts_consensus_logits(Network& net, const FrameClip& clip, const SegmentPlan& plan, ConsensusKind kind);

// The K selected frames of one segment as a [K,2,H,W] clip, chronological.
FrameClip gather_frames(const FrameClip& clip, const std::vector<int>& indices);

const char* consensus_kind_name(ConsensusKind kind);
ConsensusKind consensus_kind_from(const std::string& name);

}  // namespace evsnn
