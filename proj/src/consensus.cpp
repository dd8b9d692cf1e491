#include "evsnn/consensus.hpp"

#include <cstring>

#include "evsnn/errors.hpp"

namespace evsnn {

SegmentPlan plan_segments(int64_t t_total, int l, int k, Rng& rng) {
  if (l < 1 || k < 1) throw ValidationError("plan_segments: L and K must be at least 1");
  if (t_total < static_cast<int64_t>(l) * k) {
    throw ValidationError("plan_segments: cannot draw " + std::to_string(l) + "x" + std::to_string(k) +
                          " distinct frames from " + std::to_string(t_total));
  }
  SegmentPlan plan;
  plan.t_total = t_total;
  plan.l = l;
  plan.k = k;
  const int64_t base = t_total / l;
  const int64_t extra = t_total % l;
  int64_t pos = 0;
  for (int seg = 0; seg < l; ++seg) {
    const int64_t size = base + (seg < extra ? 1 : 0);
    plan.ranges.push_back({pos, pos + size});
    auto rel = rng.sample_without_replacement(static_cast<int>(size), k);
    std::vector<int> abs_idx(rel.size());
    for (size_t i = 0; i < rel.size(); ++i) abs_idx[i] = static_cast<int>(pos) + rel[i];
    plan.indices.push_back(std::move(abs_idx));
    pos += size;
  }
  return plan;
}

SegmentPlan plan_segments_even(int64_t t_total, int l, int k) {
  if (l < 1 || k < 1) throw ValidationError("plan_segments: L and K must be at least 1");
  if (t_total < static_cast<int64_t>(l) * k) {
    throw ValidationError("plan_segments: cannot draw " + std::to_string(l) + "x" + std::to_string(k) +
                          " distinct frames from " + std::to_string(t_total));
  }
  SegmentPlan plan;
  plan.t_total = t_total;
  plan.l = l;
  plan.k = k;
  const int64_t base = t_total / l;
  const int64_t extra = t_total % l;
  int64_t pos = 0;
  for (int seg = 0; seg < l; ++seg) {
    const int64_t size = base + (seg < extra ? 1 : 0);
    plan.ranges.push_back({pos, pos + size});
    std::vector<int> idx(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      idx[static_cast<size_t>(i)] = static_cast<int>(pos + (static_cast<int64_t>(i) * size) / k);
    }
    plan.indices.push_back(std::move(idx));
    pos += size;
  }
  return plan;
}

FrameClip gather_frames(const FrameClip& clip, const std::vector<int>& indices) {
  const auto& s = clip.data.shape();
  const int64_t frame = s[1] * s[2] * s[3];
  FrameClip out{Tensor({static_cast<int64_t>(indices.size()), s[1], s[2], s[3]})};
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= s[0]) {
      throw ValidationError("gather_frames: frame index " + std::to_string(idx) + " outside clip of length " +
                            std::to_string(s[0]));
    }
    std::memcpy(out.data.data() + static_cast<int64_t>(i) * frame, clip.data.data() + idx * frame,
                static_cast<size_t>(frame) * sizeof(double));
  }
  return out;
}

std::vector<Var> forward_segments(Network& net, const FrameClip& clip, const SegmentPlan& plan) {
  if (plan.t_total != clip.t()) {
    throw ValidationError("forward_segments: plan covers " + std::to_string(plan.t_total) +
                          " frames but clip has " + std::to_string(clip.t()));
  }
  std::vector<Var> out;
  out.reserve(plan.indices.size());
  for (const auto& idx : plan.indices) {
    FrameClip sub = gather_frames(clip, idx);
    out.push_back(softmax(forward_clip_var(net, sub)));
  }
  return out;
}

Var consensus(const std::vector<Var>& distributions, ConsensusKind kind) {
  if (distributions.empty()) throw ValidationError("consensus: at least one distribution required");
  for (const auto& d : distributions) {
    if (!d->value.same_shape(distributions[0]->value)) {
      throw ValidationError("consensus: class-count mismatch " + shape_str(distributions[0]->value.shape()) +
                            " vs " + shape_str(d->value.shape()));
    }
  }
  Var acc = distributions[0];
  if (kind == ConsensusKind::kMax) {
    for (size_t i = 1; i < distributions.size(); ++i) acc = emax(acc, distributions[i]);
    return acc;
  }
  for (size_t i = 1; i < distributions.size(); ++i) acc = add(acc, distributions[i]);
  if (kind == ConsensusKind::kAverage) {
    acc = scale(acc, 1.0 / static_cast<double>(distributions.size()));
  }
  return acc;
}

Var ts_consensus_logits(Network& net, const FrameClip& clip, const SegmentPlan& plan, ConsensusKind kind) {
  return consensus(forward_segments(net, clip, plan), kind);
}

Var predict_ts(Network& net, const FrameClip& clip, const SegmentPlan& plan, ConsensusKind kind) {
  return softmax(ts_consensus_logits(net, clip, plan, kind));
}

const char* consensus_kind_name(ConsensusKind kind) {
  switch (kind) {
    case ConsensusKind::kSum:
      return "sum";
    case ConsensusKind::kAverage:
      return "avg";
    case ConsensusKind::kMax:
      return "max";
  }
  return "avg";
}

ConsensusKind consensus_kind_from(const std::string& name) {
  if (name == "sum") return ConsensusKind::kSum;
  if (name == "avg" || name == "average") return ConsensusKind::kAverage;
  if (name == "max") return ConsensusKind::kMax;
  throw ValidationError("unknown consensus kind '" + name + "' (expected sum|avg|max)");
}

}  // namespace evsnn
