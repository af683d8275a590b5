#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pei/behavior.hpp"
#include "pei/service.hpp"
#include "pei/synthesis.hpp"

namespace pei {

/// 1 iff the top-1 classes agree; soft logits are reduced to their argmax.
double indicator_similarity(const BehaviorValue& a, const BehaviorValue& b);

class IndicatorSimilarity final : public SimilarityFn {
 public:
  double operator()(const BehaviorValue& a, const BehaviorValue& b) const override {
    return indicator_similarity(a, b);
  }
  bool symmetric() const noexcept override { return true; }
};

/// An order-sensitive judge, e.g. "is a similar to b?" asked of a model.
using OrderedSimilarity = std::function<double(const BehaviorValue&, const BehaviorValue&)>;

/// sim(a, b) = (base(a, b) + base(b, a)) / 2, clamped to [0,1].
std::shared_ptr<const SimilarityFn> symmetrize_similarity(OrderedSimilarity base);
/// Returns `base` itself when it already declares symmetry.
std::shared_ptr<const SimilarityFn> symmetrize_similarity(std::shared_ptr<const SimilarityFn> base);

/// Average similarity between g(attack sample (j, k)) and g(objective j).
/// Both response lists come from the service; `attack_responses` is in
/// (j, k) order with M2 replicas per objective.
double pei_score_from_responses(std::span<const BehaviorValue> attack_responses,
                                std::span<const BehaviorValue> objective_responses, std::size_t replicas,
                                const SimilarityFn& sim);

/// Queries the service on the M1 * M2 attack samples of one candidate and
/// scores them against precomputed objective responses. Throws
/// std::invalid_argument when a sample slot is missing.
double pei_score(TargetService& service, std::span<const BehaviorValue> objective_responses,
                 std::span<const ImageTensor> candidate_samples, std::size_t replicas, const SimilarityFn& sim,
                 OutputMode mode = OutputMode::Hard);

struct ZScores {
  std::vector<double> values;
  /// Sample standard deviation was zero; values are all zero then.
  bool degenerate = false;
};

/// z_i = (score_i - mean) / sample_sd. Throws std::invalid_argument for N < 2.
ZScores z_scores(std::span<const double> scores);

/// Identified(i) or no candidate.
struct Verdict {
  std::optional<std::size_t> candidate;

  bool identified() const noexcept { return candidate.has_value(); }
  friend bool operator==(const Verdict&, const Verdict&) = default;

  static Verdict none() { return {}; }
  static Verdict identify(std::size_t i) { return {i}; }
};

inline constexpr double kDefaultThreshold = 1.7;

/// Identified(i) iff exactly one z strictly exceeds the threshold;
/// degenerate scores yield no candidate.
Verdict decide(const ZScores& z, double threshold = kDefaultThreshold);

struct PeiReport {
  std::string service;
  std::vector<std::string> candidates;
  std::vector<double> scores;
  ZScores z;
  Verdict verdict;
  double threshold = kDefaultThreshold;
  /// Queries made against the target service by this inference run.
  std::uint64_t service_queries = 0;
  /// Encoder queries spent on synthesis per candidate (from the sample set).
  std::vector<std::uint64_t> synthesis_queries;
  std::string config_fingerprint;
  /// Set by callers that know the ground truth.
  std::optional<std::string> hidden;

  std::string verdict_name() const;
};

struct InferenceOptions {
  double threshold = kDefaultThreshold;
  OutputMode mode = OutputMode::Hard;
  /// Candidate indices (into the sample set) to include; empty means all.
  std::vector<std::size_t> include;
  std::string config_fingerprint;
};

/// Objective responses are queried once (M1 queries), then M1 * M2 per
/// candidate. Throws std::invalid_argument with fewer than two candidates or
/// an incomplete sample set.
PeiReport run_inference(TargetService& service, std::span<const ImageTensor> objectives,
                        const AttackSampleSet& samples, const SimilarityFn& sim,
                        const InferenceOptions& options = {});

/// Candidate indices of `samples` with `excluded` removed. Throws
/// std::invalid_argument when no candidate has that name.
std::vector<std::size_t> leave_one_out(const AttackSampleSet& samples, const std::string& excluded);

struct NullFprResult {
  std::size_t candidates = 0;
  std::size_t trials = 0;
  double threshold = kDefaultThreshold;
  /// P(z_i > threshold) pooled over candidates and trials.
  double per_candidate_exceedance = 0.0;
  /// Fraction of trials whose verdict is not "no candidate".
  double verdict_rate = 0.0;
};

/// Monte-Carlo of the decision rule under i.i.d. standard-normal scores.
NullFprResult null_fpr_monte_carlo(std::size_t candidates, std::size_t trials, std::uint64_t seed,
                                   double threshold = kDefaultThreshold);

/// Largest attainable studentized deviation, (N - 1) / sqrt(N).
double max_z_bound(std::size_t candidates);

}  // namespace pei
