#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <variant>
#include <vector>

namespace pei {

struct HardLabel {
  int label = 0;
  friend bool operator==(const HardLabel&, const HardLabel&) = default;
};

struct SoftLogits {
  std::vector<float> logits;
  friend bool operator==(const SoftLogits&, const SoftLogits&) = default;
};

struct Score {
  double value = 0.0;
  friend bool operator==(const Score&, const Score&) = default;
};

/// What a downstream service returns for one input.
using BehaviorValue = std::variant<HardLabel, SoftLogits, Score>;

/// Top-1 class of a label or logit vector. Throws std::invalid_argument for
/// scores and empty logit vectors.
int top1(const BehaviorValue& value);

/// Behavior similarity in [0,1]; larger means more similar.
class SimilarityFn {
 public:
  virtual ~SimilarityFn() = default;
  virtual double operator()(const BehaviorValue& a, const BehaviorValue& b) const = 0;
  /// Symmetric evaluators are returned as-is by symmetrize_similarity.
  virtual bool symmetric() const noexcept { return false; }
};

}  // namespace pei
