#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pei/case_studies.hpp"
#include "pei/dataset.hpp"
#include "pei/defense.hpp"
#include "pei/encoder.hpp"
#include "pei/head.hpp"
#include "pei/inference.hpp"
#include "pei/json.hpp"
#include "pei/service.hpp"
#include "pei/synthesis.hpp"

namespace pei {

struct ZooConfig {
  std::vector<ToyEncoderSpec> encoders;
  DatasetSpec dataset;
  /// Hidden widths of every downstream head; input and output widths follow
  /// from the encoder and the dataset.
  std::vector<std::size_t> head_hidden{64, 64};
  TrainConfig train;
  OutputMode service_mode = OutputMode::Soft;
};

struct InferenceSettings {
  std::string similarity = "indicator";
  double threshold = 1.7;
  OutputMode mode = OutputMode::Hard;
};

struct DefenseSettings {
  int quality = 30;
  ResizeSpec bypass{256, 256, Interpolation::Nearest};
};

struct CaseStudySettings {
  DatasetSpec surrogate{DatasetGenerator::Textures, 10, 2000, 0, {32, 32, 3}, 7};
  TrainConfig recipe;
  /// Stolen model built on this encoder for the WrongEncoderHead kind;
  /// empty picks the next encoder after the hidden one.
  std::string wrong_encoder;
  std::size_t adv_iterations = 2000;
  double adv_step = 0.01;
  std::size_t adv_candidates = 16;
};

struct EndpointSettings {
  /// Empty: PEI_BIND_ADDR or 127.0.0.1.
  std::string host;
  /// First port; endpoints take consecutive ports. 0 picks free ports.
  int base_port = 0;
  double price_per_query = 0.0001;
  /// Append-only meter log; empty keeps meters in memory.
  std::string meter_log;
};

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  ZooConfig zoo;
  AttackConfig attack;
  /// Public images the attacker picks objectives from: the first M1 samples
  /// of this generator's test split.
  DatasetSpec objectives;
  InferenceSettings inference;
  DefenseSettings defense;
  CaseStudySettings casestudy;
  EndpointSettings endpoints;

  /// Six encoders over the four architectures, Shapes-10 downstream data,
  /// attack at M1=4, M2=3, T=60, S=64, eps=0.5, eta=0.05.
  static ExperimentConfig toy();
  /// toy() with the attack section at M1=10, M2=5, T=100, S=100, 64x64x3.
  static ExperimentConfig paper_defaults();
};

Json to_json(const ExperimentConfig& c);
/// Missing keys keep their toy() defaults. Throws pei::ConfigError naming
/// the offending key for unknown keys, wrong types or invalid values.
ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Fingerprint of the canonical serialization.
std::string config_fingerprint(const ExperimentConfig& c);

/// Services, one per zoo encoder; services[i] hides encoders[i].
struct Ecosystem {
  ExperimentConfig config;
  std::vector<std::shared_ptr<const ToyEncoder>> encoders;
  std::vector<std::shared_ptr<ServiceInstance>> services;
  std::vector<TrainStats> training;

  std::vector<const Encoder*> candidates() const;
  std::size_t encoder_index(const std::string& name) const;
  std::size_t service_index(const std::string& name) const;
};

std::string service_name(const ToyEncoderSpec& hidden);

/// Trains every head; throws pei::TrainingFailure on divergence.
Ecosystem build_ecosystem(const ExperimentConfig& config);

/// ecosystem.json plus heads/<service>/; encoders are rebuilt from their specs.
void save_ecosystem(const std::filesystem::path& dir, const Ecosystem& eco);
/// Throws pei::PrerequisiteMissing when the directory is not an ecosystem.
Ecosystem load_ecosystem(const std::filesystem::path& dir);

std::vector<ImageTensor> objective_images(const ExperimentConfig& config);

/// Root of every per-sample stream: SeedSpec{config.seed, {}}.
SeedSpec synthesis_root(const ExperimentConfig& config);

/// Synthesis against `candidates` (defaults to the ecosystem encoders) with
/// the config's attack section.
AttackSampleSet synthesize_zoo(const Ecosystem& eco, std::span<const ImageTensor> objectives,
                               const SynthesisOptions& options = {},
                               std::span<const Encoder* const> candidates = {});

/// Inference against `service` with the config's inference section; when
/// `hidden` is set the report records it and, with `leave_one_out`, that
/// candidate is dropped from the pool.
PeiReport infer_service(TargetService& service, std::span<const ImageTensor> objectives,
                        const AttackSampleSet& samples, const ExperimentConfig& config,
                        std::optional<std::string> hidden = std::nullopt, bool leave_one_out = false);

}  // namespace pei
