#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pei/dataset.hpp"
#include "pei/encoder.hpp"
#include "pei/mlp.hpp"

namespace pei {

struct HeadShape {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t classes = 10;
};

/// Downstream classifier h: per-feature standardization followed by a ReLU
/// MLP. Weights are binary32.
struct DownstreamHead {
  std::vector<float> input_shift;  // subtracted first
  std::vector<float> input_scale;  // then multiplied
  mlp::Params<float> params;

  std::size_t input_dim() const noexcept { return input_shift.size(); }
  std::size_t classes() const noexcept {
    return params.biases.empty() ? 0 : static_cast<std::size_t>(params.biases.back().size());
  }
  std::vector<std::size_t> widths() const;

  /// Standardized copy of a feature batch (one sample per row).
  mlp::Matrix<float> standardize(const mlp::Matrix<float>& features) const;
  std::vector<float> logits(std::span<const float> features) const;
  mlp::Matrix<float> logits_batch(const mlp::Matrix<float>& features) const;

  friend bool operator==(const DownstreamHead& a, const DownstreamHead& b);
};

/// He-uniform hidden layers, Glorot-uniform output layer, zero biases,
/// identity standardization.
DownstreamHead init_head(const HeadShape& shape, std::uint64_t seed);

struct TrainConfig {
  std::size_t iterations = 2500;
  std::size_t batch = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Multiply the learning rate by 0.1 after this fraction of iterations.
  double decay_at = 0.7;
  std::uint64_t seed = 0;
};

struct TrainStats {
  std::size_t iterations = 0;
  double final_loss = 0.0;      // mean over the full training set
  double train_accuracy = 0.0;  // against argmax of the targets
};

struct TrainedHead {
  DownstreamHead head;
  TrainStats stats;
};

/// Minibatch momentum SGD on soft-target cross-entropy. `targets` rows are
/// probability vectors. Standardization statistics come from `features`.
/// With zero iterations the network weights equal init_head(shape, seed).
/// Throws pei::TrainingFailure if the loss becomes non-finite.
TrainedHead train_classifier(const mlp::Matrix<float>& features, const mlp::Matrix<float>& targets,
                             const HeadShape& shape, const TrainConfig& config);

/// Encodes the dataset once (owner-side, unmetered) and trains on one-hot
/// labels. Throws std::invalid_argument for an empty dataset or a width
/// mismatch.
TrainedHead train_head(const Encoder& encoder, const LabeledDataset& data, const HeadShape& shape,
                       const TrainConfig& config);

/// head.json (layer widths) plus shift.peit, scale.peit, w{l}.peit and
/// b{l}.peit in `dir`.
void save_head(const std::filesystem::path& dir, const DownstreamHead& head);
/// Throws pei::PrerequisiteMissing when files are absent and
/// std::invalid_argument when they disagree with each other.
DownstreamHead load_head(const std::filesystem::path& dir);

mlp::Matrix<float> embedding_matrix(const Encoder& encoder, std::span<const ImageTensor> images);
mlp::Matrix<float> pixel_matrix(std::span<const ImageTensor> images);
mlp::Matrix<float> one_hot(std::span<const int> labels, std::size_t classes);
std::vector<int> argmax_rows(const mlp::Matrix<float>& m);

}  // namespace pei
