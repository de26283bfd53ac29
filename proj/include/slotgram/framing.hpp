#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "slotgram/corpus.hpp"
#include "slotgram/tags.hpp"

namespace slotgram {

// Pooled slot precision/recall/F over an evaluation set.
struct SlotReport {
  long long correct = 0;
  long long predicted_filled = 0;
  long long reference_filled = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Zero-denominator convention: an empty side scores 1 only when the other
  // side is empty too, else 0.
  static SlotReport from_counts(long long correct, long long predicted,
                                long long reference) {
    SlotReport r;
    r.correct = correct;
    r.predicted_filled = predicted;
    r.reference_filled = reference;
    r.precision = predicted == 0 ? (reference == 0 ? 1.0 : 0.0)
                                 : static_cast<double>(correct) / predicted;
    r.recall = reference == 0 ? (predicted == 0 ? 1.0 : 0.0)
                              : static_cast<double>(correct) / reference;
    r.f1 = r.precision + r.recall == 0.0
               ? 0.0
               : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
  }
};

struct CurvePoint {
  std::size_t train_size = 0;
  double mean_f1 = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  std::vector<double> per_run_f1;
};

// Frame assembly from hard tags. Every mention scores 1 plus a small bias
// proportional to its time index (t * 1e-5) so value ties resolve toward the
// later mention while repeated mentions still dominate. The frame type is
// dealcard only when DC tags occur and no slot/value tag does.
inline SemanticFrame tags_to_frame(const FrameSchema& schema,
                                   const TaggedUtterance& tagged) {
  std::map<std::pair<std::string, std::string>, double> scores;
  bool saw_dc = false, saw_slot = false;
  for (std::size_t t = 0; t < tagged.tags.size(); ++t) {
    const auto& tag = tagged.tags[t];
    if (tag.is_dealcard()) saw_dc = true;
    if (!tag.has_slot_value()) continue;
    saw_slot = true;
    scores[{tag.slot, tag.value}] += 1.0 + static_cast<double>(t) * 1e-5;
  }
  if (saw_dc && !saw_slot) return SemanticFrame::dealcard();
  SemanticFrame frame = SemanticFrame::movecard();
  for (const auto& slot : movecard_slots()) {
    double best = 0.0;
    std::string best_value;
    for (const auto& v : schema.domain(slot)) {
      auto it = scores.find({slot, v});
      if (it != scores.end() && it->second > best) {
        best = it->second;
        best_value = v;
      }
    }
    if (best > 0.0) frame.slots[slot].insert(best_value);
  }
  return frame;
}

// Micro-averaged slot scores. A predicted slot is correct when the reference
// frame has the same type, fills the slot, and contains the predicted value
// (reference value sets may be ambiguous). With dealcard_type_slot, each
// dealcard frame contributes one synthetic frame-type slot unit so the
// metric sees frame-type errors.
inline SlotReport score_frames(const std::vector<SemanticFrame>& predicted,
                               const std::vector<SemanticFrame>& reference,
                               bool dealcard_type_slot = true) {
  if (predicted.size() != reference.size())
    throw DataError("predicted/reference frame counts differ");
  long long correct = 0, pred_filled = 0, ref_filled = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& p = predicted[i];
    const auto& r = reference[i];
    const bool type_match = p.type == r.type;
    if (p.type == "dealcard") {
      if (dealcard_type_slot) ++pred_filled;
    } else {
      pred_filled += static_cast<long long>(p.slots.size());
    }
    if (r.type == "dealcard") {
      if (dealcard_type_slot) ++ref_filled;
    } else {
      ref_filled += static_cast<long long>(r.slots.size());
    }
    if (!type_match) continue;
    if (p.type == "dealcard") {
      if (dealcard_type_slot) ++correct;
      continue;
    }
    for (const auto& [slot, values] : p.slots) {
      auto it = r.slots.find(slot);
      if (it == r.slots.end()) continue;
      bool all_in = true;
      for (const auto& v : values)
        if (!it->second.count(v)) {
          all_in = false;
          break;
        }
      if (all_in) ++correct;
    }
  }
  return SlotReport::from_counts(correct, pred_filled, ref_filled);
}

// Mean with a two-sided 95% Student interval over independent runs.
inline CurvePoint aggregate_runs(const std::vector<double>& per_run_f1,
                                 std::size_t train_size) {
  const std::size_t n = per_run_f1.size();
  if (n < 2) throw DataError("aggregate_runs needs at least 2 runs");
  double mean = 0.0;
  for (double x : per_run_f1) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : per_run_f1) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t_distribution<double> dist(
      static_cast<double>(n - 1));
  const double half =
      boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
  CurvePoint p;
  p.train_size = train_size;
  p.mean_f1 = mean;
  p.ci95_low = mean - half;
  p.ci95_high = mean + half;
  p.per_run_f1 = per_run_f1;
  return p;
}

// Evaluation references keep only the slots the speaker actually expressed:
// a slot survives when some gold tag mentions it or when its value set is
// ambiguous (the overspecified singleton column slots are dropped). Without
// gold tags the frame is taken as already minimal.
inline SemanticFrame prune_reference(const Utterance& u) {
  if (!u.gold_tags || u.frame.type != "movecard") return u.frame;
  SemanticFrame out;
  out.type = u.frame.type;
  for (const auto& [slot, values] : u.frame.slots) {
    bool mentioned = values.size() > 1;
    if (!mentioned)
      for (const auto& tag : *u.gold_tags)
        if (tag.slot == slot) {
          mentioned = true;
          break;
        }
    if (mentioned) out.slots[slot] = values;
  }
  return out;
}

}  // namespace slotgram
