#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pei/dataset.hpp"
#include "pei/encoder.hpp"
#include "pei/head.hpp"
#include "pei/random.hpp"
#include "pei/service.hpp"

namespace pei {

enum class StolenKind { CorrectEncoderHead, WrongEncoderHead, ScratchLinear };

std::string_view to_string(StolenKind kind);
StolenKind parse_stolen_kind(std::string_view tag);

struct StealConfig {
  OutputMode mode = OutputMode::Soft;
  /// Queried against the target; must use a different generator than the
  /// downstream data.
  DatasetSpec surrogate{DatasetGenerator::Textures, 10, 2000, 0, {32, 32, 3}, 7};
  StolenKind kind = StolenKind::CorrectEncoderHead;
  /// Encoder under the stolen head; ignored for ScratchLinear.
  std::shared_ptr<const Encoder> encoder;
  std::vector<std::size_t> hidden{64, 64};
  TrainConfig recipe{};
  /// Surrogate images per service call.
  std::size_t query_batch = 250;
};

/// Held-out split and the target's top-1 answers on it, computed by the
/// service owner without metering.
struct StealEvaluation {
  LabeledDataset test;
  std::vector<int> target_predictions;
};

StealEvaluation make_evaluation(const ServiceInstance& target, LabeledDataset test);

struct StealReport {
  StolenKind kind = StolenKind::CorrectEncoderHead;
  OutputMode mode = OutputMode::Soft;
  std::string encoder;  // empty for ScratchLinear
  double accuracy = 0.0;
  double fidelity = 0.0;
  std::uint64_t queries = 0;
  TrainStats training;
};

/// Labels every surrogate image through the target (soft: softmax of the
/// returned logits as training targets, hard: one-hot top-1), trains the
/// stolen model and scores it on `evaluation`. Throws std::invalid_argument
/// when the target does not offer the requested mode, when the surrogate
/// generator matches `downstream`, or when the encoder is missing.
StealReport run_model_stealing(TargetService& target, const StealConfig& config, const StealEvaluation& evaluation,
                               DatasetGenerator downstream, std::uint64_t seed);

/// Fraction of indices with equal top-1. Throws std::invalid_argument on a
/// length mismatch or empty input.
double compute_fidelity(std::span<const int> stolen, std::span<const int> target);

/// Table layout: one row per stolen-model kind, accuracy and fidelity under
/// soft and hard labels.
std::string render_steal_table(std::span<const StealReport> reports);

struct AdvConfig {
  std::size_t iterations = 2000;
  double step = 0.01;
  std::size_t candidates = 16;
  /// Directions per estimate when the encoder has no analytic gradient.
  std::size_t zo_samples = 256;
  double zo_epsilon = 1e-2;
  /// Start every candidate here instead of at uniform noise.
  std::optional<ImageTensor> initial;
  std::size_t jobs = 1;

  void validate() const;
};

struct AdvResult {
  ImageTensor image;
  double loss = 0.0;
  std::size_t best_candidate = 0;
  std::vector<double> candidate_losses;
  /// "analytic" or "zeroth-order".
  std::string gradient;
};

/// Sign-gradient descent x <- clamp(x - step * sign(grad)) on the squared
/// embedding loss against encoder(target), from `candidates` independent
/// starts; returns the candidate with the lowest final loss. LinearProject
/// encoders use the exact gradient, others a two-point estimate.
AdvResult whitebox_adversarial_synthesis(const Encoder& encoder, const ImageTensor& target, const AdvConfig& config,
                                         const SeedSpec& seed);

}  // namespace pei
