#include "pei/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pei/random.hpp"

namespace pei {
namespace {

class SymmetrizedSimilarity final : public SimilarityFn {
 public:
  explicit SymmetrizedSimilarity(OrderedSimilarity base) : base_(std::move(base)) {}
  double operator()(const BehaviorValue& a, const BehaviorValue& b) const override {
    return std::clamp(0.5 * (base_(a, b) + base_(b, a)), 0.0, 1.0);
  }
  bool symmetric() const noexcept override { return true; }

 private:
  OrderedSimilarity base_;
};

}  // namespace

double indicator_similarity(const BehaviorValue& a, const BehaviorValue& b) {
  return top1(a) == top1(b) ? 1.0 : 0.0;
}

std::shared_ptr<const SimilarityFn> symmetrize_similarity(OrderedSimilarity base) {
  if (!base) throw std::invalid_argument("symmetrize_similarity: empty evaluator");
  return std::make_shared<SymmetrizedSimilarity>(std::move(base));
}

std::shared_ptr<const SimilarityFn> symmetrize_similarity(std::shared_ptr<const SimilarityFn> base) {
  if (!base) throw std::invalid_argument("symmetrize_similarity: null evaluator");
  if (base->symmetric()) return base;
  return std::make_shared<SymmetrizedSimilarity>(
      [base](const BehaviorValue& a, const BehaviorValue& b) { return (*base)(a, b); });
}

double pei_score_from_responses(std::span<const BehaviorValue> attack_responses,
                                std::span<const BehaviorValue> objective_responses, std::size_t replicas,
                                const SimilarityFn& sim) {
  if (replicas == 0 || attack_responses.size() != objective_responses.size() * replicas) {
    throw std::invalid_argument("pei_score: expected " + std::to_string(objective_responses.size() * replicas) +
                                " attack responses, got " + std::to_string(attack_responses.size()));
  }
  if (attack_responses.empty()) throw std::invalid_argument("pei_score: no attack samples");
  double sum = 0.0;
  for (std::size_t j = 0; j < objective_responses.size(); ++j) {
    for (std::size_t k = 0; k < replicas; ++k) sum += sim(attack_responses[j * replicas + k], objective_responses[j]);
  }
  return sum / static_cast<double>(attack_responses.size());
}

double pei_score(TargetService& service, std::span<const BehaviorValue> objective_responses,
                 std::span<const ImageTensor> candidate_samples, std::size_t replicas, const SimilarityFn& sim,
                 OutputMode mode) {
  if (candidate_samples.size() != objective_responses.size() * replicas) {
    throw std::invalid_argument("pei_score: sample count does not match M1 * M2");
  }
  for (const auto& s : candidate_samples) {
    if (s.size() == 0) throw std::invalid_argument("pei_score: missing attack sample slot");
  }
  const auto responses = service.predict(candidate_samples, mode);
  return pei_score_from_responses(responses, objective_responses, replicas, sim);
}

ZScores z_scores(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("z_scores: need at least two candidates");
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  ZScores z;
  z.values.assign(n, 0.0);
  // Relative cutoff: scores that differ only by rounding count as equal.
  const double scale = std::max(1.0, std::fabs(mean));
  if (!(sd > 1e-12 * scale)) {
    z.degenerate = true;
    return z;
  }
  for (std::size_t i = 0; i < n; ++i) z.values[i] = (scores[i] - mean) / sd;
  return z;
}

Verdict decide(const ZScores& z, double threshold) {
  if (z.degenerate) return Verdict::none();
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    if (z.values[i] > threshold) {
      if (hit) return Verdict::none();
      hit = i;
    }
  }
  return hit ? Verdict::identify(*hit) : Verdict::none();
}

std::string PeiReport::verdict_name() const {
  return verdict.candidate ? candidates.at(*verdict.candidate) : std::string("\xE2\x88\x85");
}

PeiReport run_inference(TargetService& service, std::span<const ImageTensor> objectives,
                        const AttackSampleSet& samples, const SimilarityFn& sim, const InferenceOptions& options) {
  std::vector<std::size_t> include = options.include;
  if (include.empty()) {
    include.resize(samples.candidates());
    std::iota(include.begin(), include.end(), 0);
  }
  if (include.size() < 2) throw std::invalid_argument("run_inference: need at least two candidates");
  if (!samples.complete()) throw std::invalid_argument("run_inference: attack sample set is incomplete");
  if (objectives.size() != samples.config.objectives) {
    throw std::invalid_argument("run_inference: objective count does not match the sample set");
  }
  for (auto i : include) {
    if (i >= samples.candidates()) throw std::invalid_argument("run_inference: candidate index out of range");
  }

  const std::uint64_t before = service.queries();
  const auto objective_responses = service.predict(objectives, options.mode);

  PeiReport report;
  report.service = service.name();
  report.threshold = options.threshold;
  report.config_fingerprint = options.config_fingerprint;
  for (auto i : include) {
    report.candidates.push_back(samples.candidate_names[i]);
    report.scores.push_back(pei_score(service, objective_responses, samples.candidate_samples(i),
                                      samples.config.replicas, sim, options.mode));
    report.synthesis_queries.push_back(samples.ledger.candidates() > i ? samples.ledger.candidate_queries(i) : 0);
  }
  report.z = z_scores(report.scores);
  report.verdict = decide(report.z, options.threshold);
  report.service_queries = service.queries() - before;
  return report;
}

std::vector<std::size_t> leave_one_out(const AttackSampleSet& samples, const std::string& excluded) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.candidates(); ++i) {
    if (samples.candidate_names[i] != excluded) out.push_back(i);
  }
  if (out.size() == samples.candidates()) throw std::invalid_argument("leave_one_out: no candidate named " + excluded);
  return out;
}

double max_z_bound(std::size_t candidates) {
  if (candidates < 2) throw std::invalid_argument("max_z_bound: need at least two candidates");
  const double n = static_cast<double>(candidates);
  return (n - 1.0) / std::sqrt(n);
}

NullFprResult null_fpr_monte_carlo(std::size_t candidates, std::size_t trials, std::uint64_t seed, double threshold) {
  if (candidates < 2) throw std::invalid_argument("null_fpr_monte_carlo: need N >= 2");
  if (trials < 1) throw std::invalid_argument("null_fpr_monte_carlo: need at least one trial");
  std::mt19937_64 rng(derive_seed(SeedSpec{seed, {}}, {"null-fpr"}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> scores(candidates);
  std::uint64_t exceed = 0, verdicts = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& s : scores) s = normal(rng);
    const auto z = z_scores(scores);
    for (double v : z.values) exceed += v > threshold ? 1 : 0;
    verdicts += decide(z, threshold).identified() ? 1 : 0;
  }
  NullFprResult r;
  r.candidates = candidates;
  r.trials = trials;
  r.threshold = threshold;
  r.per_candidate_exceedance = static_cast<double>(exceed) / static_cast<double>(trials * candidates);
  r.verdict_rate = static_cast<double>(verdicts) / static_cast<double>(trials);
  return r;
}

}  // namespace pei
