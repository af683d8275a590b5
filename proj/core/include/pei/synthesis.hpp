#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pei/encoder.hpp"
#include "pei/random.hpp"
#include "pei/tensor.hpp"

namespace pei {

/// Knobs of the black-box synthesis loop.
struct AttackConfig {
  std::size_t objectives = 10;  // M1
  std::size_t replicas = 5;     // M2, attack samples per (candidate, objective)
  std::size_t iterations = 100; // T
  std::size_t samples = 100;    // S, directions per gradient estimate
  double epsilon = 5.0;         // probe radius, input-space units
  double learning_rate = 0.1;   // l_inf step per iteration
  ImageShape shape{64, 64, 3};

  /// M1=10, M2=5, T=100, S=100, eps=5.0, eta=0.1 at 64x64x3.
  static AttackConfig paper_defaults();
  /// M1=4, M2=3, T=60, S=64, eps=0.5, eta=0.05 at 32x32x3.
  static AttackConfig toy();

  /// Throws std::invalid_argument unless every count is >= 1 and eps, eta > 0.
  void validate() const;

  std::uint64_t probe_queries_per_sample() const { return std::uint64_t{iterations} * 2 * samples; }
  /// T * 2S probes plus one encoding of the objective.
  std::uint64_t encoder_queries_per_sample() const { return probe_queries_per_sample() + 1; }
  std::uint64_t probe_queries_per_candidate() const {
    return std::uint64_t{objectives} * replicas * probe_queries_per_sample();
  }
  std::uint64_t encoder_queries_per_candidate() const {
    return std::uint64_t{objectives} * replicas * encoder_queries_per_sample();
  }
};

/// Append-only query counters: encoder queries per candidate (split into
/// probe and objective encodings) and queries to the targeted service.
class BudgetLedger {
 public:
  explicit BudgetLedger(std::size_t candidates = 0);
  BudgetLedger(const BudgetLedger& other);
  BudgetLedger& operator=(const BudgetLedger& other);

  void record_probes(std::size_t candidate, std::uint64_t n);
  void record_objective_encodings(std::size_t candidate, std::uint64_t n);
  void record_service_queries(std::uint64_t n);

  std::size_t candidates() const noexcept { return probes_.size(); }
  std::uint64_t probe_queries(std::size_t candidate) const;
  std::uint64_t objective_queries(std::size_t candidate) const;
  std::uint64_t candidate_queries(std::size_t candidate) const;
  std::uint64_t encoder_queries_total() const;
  std::uint64_t service_queries() const noexcept { return service_.load(); }

 private:
  std::vector<std::atomic<std::uint64_t>> probes_;
  std::vector<std::atomic<std::uint64_t>> objectives_;
  std::atomic<std::uint64_t> service_{0};
};

double estimate_cost(std::uint64_t queries, double price_per_query);
/// Cost of every encoder query recorded in the ledger.
double estimate_cost(const BudgetLedger& ledger, double price_per_query);

struct BudgetProjection {
  std::uint64_t probe_queries_per_candidate = 0;
  std::uint64_t encoder_queries_per_candidate = 0;
  double probe_cost_per_candidate = 0.0;
  double encoder_cost_per_candidate = 0.0;
};

BudgetProjection project_budget(const AttackConfig& config, double price_per_query);

/// Loss of a batch of (possibly unclamped) probe images.
using BatchLoss = std::function<std::vector<double>(std::span<const ImageTensor>)>;

/// Thrown when the loss evaluator returns NaN; carries the offending probe.
class EstimationFailure : public std::runtime_error {
 public:
  EstimationFailure(const std::string& what, std::size_t probe_index, ImageTensor probe)
      : std::runtime_error(what), probe_index_(probe_index), probe_(std::move(probe)) {}
  std::size_t probe_index() const noexcept { return probe_index_; }
  const ImageTensor& probe() const noexcept { return probe_; }

 private:
  std::size_t probe_index_;
  ImageTensor probe_;
};

struct GradientEstimate {
  std::vector<float> gradient;
  /// Mean of the 2S probe losses; an O(eps^2)-biased estimate of L(x).
  double probe_mean_loss = 0.0;
};

/// Two-point zeroth-order estimate
///   (D / S) * sum_s [L(x + eps mu_s) - L(x - eps mu_s)] / (2 eps) * mu_s
/// with mu_s uniform on the unit sphere of R^D, D = x.size(). Evaluates the
/// loss on exactly 2S probes, in one batch, ordered (+mu_1, -mu_1, +mu_2, ...).
/// Probes are not clamped.
GradientEstimate estimate_gradient(const BatchLoss& loss, const ImageTensor& x, std::size_t samples,
                                   double epsilon, std::uint64_t seed);

struct SampleResult {
  ImageTensor image;
  /// Probe-mean loss of each iteration, before its update.
  std::vector<double> loss_trace;
  std::size_t skipped_updates = 0;
  std::uint64_t encoder_queries = 0;

  std::optional<double> final_loss() const {
    return loss_trace.empty() ? std::nullopt : std::optional<double>(loss_trace.back());
  }
};

/// Black-box synthesis of one attack sample against `encoder`:
/// uniform init in [0,1], then T rounds of gradient estimation on
/// ||f(x) - f(objective)||^2, x <- clamp(x - eta * g / ||g||_inf). A zero
/// estimate skips the update. Seeds: init from derive_seed(seed, {"init"}),
/// iteration t from derive_seed(seed, {"iter", t}).
SampleResult synthesize_sample(const Encoder& encoder, const ImageTensor& objective, const AttackConfig& config,
                               const SeedSpec& seed);

struct SampleProvenance {
  std::uint64_t init_seed = 0;
  std::optional<double> final_loss;
  std::vector<double> loss_trace;
  std::size_t skipped_updates = 0;
};

/// Attack samples for N candidates x M1 objectives x M2 replicas.
struct AttackSampleSet {
  AttackConfig config;
  std::uint64_t master_seed = 0;
  std::vector<std::string> candidate_names;
  std::vector<ImageTensor> samples;          // index ((i * M1) + j) * M2 + k
  std::vector<SampleProvenance> provenance;  // same indexing
  BudgetLedger ledger;
  /// Transformations applied after synthesis, e.g. "resize 32x32x3 -> 256x256x3 (nearest)".
  std::vector<std::string> transforms;

  std::size_t candidates() const noexcept { return candidate_names.size(); }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * config.objectives + j) * config.replicas + k;
  }
  const ImageTensor& at(std::size_t i, std::size_t j, std::size_t k) const { return samples.at(index(i, j, k)); }
  /// Samples of candidate i in (j, k) order.
  std::span<const ImageTensor> candidate_samples(std::size_t i) const;
  bool complete() const;
};

struct SynthesisOptions {
  std::size_t jobs = 1;
  /// Called after each finished sample with (done, total); may be called
  /// from worker threads.
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Thrown when any sample fails; everything finished before the failure is
/// reported through `completed` and the ledger snapshot.
class SynthesisFailure : public std::runtime_error {
 public:
  SynthesisFailure(const std::string& what, std::size_t completed, BudgetLedger ledger)
      : std::runtime_error(what), completed_(completed), ledger_(std::move(ledger)) {}
  std::size_t completed() const noexcept { return completed_; }
  const BudgetLedger& ledger() const noexcept { return ledger_; }

 private:
  std::size_t completed_;
  BudgetLedger ledger_;
};

/// Runs synthesize_sample for every (i, j, k) with seed
/// root.child({"cand", i, "obj", j, "rep", k}). Results are identical for any
/// job count. Per-candidate ledger totals equal M1 * M2 * (T * 2S + 1).
AttackSampleSet synthesize_all(std::span<const Encoder* const> candidates, std::span<const ImageTensor> objectives,
                               const AttackConfig& config, const SeedSpec& root,
                               const SynthesisOptions& options = {});

/// Directory layout: manifest.json, objectives/o{j}.peit,
/// samples/c{i}_o{j}_r{k}.peit and, when `png` is set, png/c{i}_o{j}_r{k}.png.
void save_sample_set(const std::filesystem::path& dir, const AttackSampleSet& set,
                     std::span<const ImageTensor> objectives, bool png = false);
AttackSampleSet load_sample_set(const std::filesystem::path& dir);
std::vector<ImageTensor> load_objectives(const std::filesystem::path& dir);

}  // namespace pei
