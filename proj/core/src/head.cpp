#include "pei/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "pei/errors.hpp"
#include "pei/json.hpp"
#include "pei/tensor_io.hpp"
#include "pei/random.hpp"

namespace pei {
namespace {

mlp::Matrix<float> uniform_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double limit) {
  std::uniform_real_distribution<double> u(-limit, limit);
  mlp::Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(u(rng));
  return m;
}

double full_loss(const DownstreamHead& head, const mlp::Matrix<float>& standardized,
                 const mlp::Matrix<float>& targets, double* accuracy) {
  const auto logits = mlp::forward(head.params, standardized);
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double lse = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) lse += std::exp(logits(r, c) - m);
    lse = m + std::log(lse);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (targets(r, c) != 0.0f) loss -= targets(r, c) * (logits(r, c) - lse);
    }
    Eigen::Index pred = 0, want = 0;
    logits.row(r).maxCoeff(&pred);
    targets.row(r).maxCoeff(&want);
    correct += pred == want ? 1 : 0;
  }
  if (accuracy != nullptr) *accuracy = static_cast<double>(correct) / static_cast<double>(logits.rows());
  return loss / static_cast<double>(logits.rows());
}

}  // namespace

std::vector<std::size_t> DownstreamHead::widths() const {
  std::vector<std::size_t> w{input_dim()};
  for (const auto& b : params.biases) w.push_back(static_cast<std::size_t>(b.size()));
  return w;
}

mlp::Matrix<float> DownstreamHead::standardize(const mlp::Matrix<float>& features) const {
  if (static_cast<std::size_t>(features.cols()) != input_dim()) {
    throw std::invalid_argument("head: expected " + std::to_string(input_dim()) + " features, got " +
                                std::to_string(features.cols()));
  }
  mlp::Matrix<float> out = features;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    out.col(c) = (out.col(c).array() - input_shift[i]) * input_scale[i];
  }
  return out;
}

mlp::Matrix<float> DownstreamHead::logits_batch(const mlp::Matrix<float>& features) const {
  // Row by row so a sample's logits never depend on what it is batched with.
  const mlp::Matrix<float> x = standardize(features);
  mlp::Matrix<float> out(x.rows(), static_cast<Eigen::Index>(classes()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = mlp::forward(params, mlp::Matrix<float>(x.row(r)));
  return out;
}

std::vector<float> DownstreamHead::logits(std::span<const float> features) const {
  mlp::Matrix<float> row(1, static_cast<Eigen::Index>(features.size()));
  std::copy(features.begin(), features.end(), row.data());
  const auto out = logits_batch(row);
  return {out.data(), out.data() + out.size()};
}

bool operator==(const DownstreamHead& a, const DownstreamHead& b) {
  if (a.input_shift != b.input_shift || a.input_scale != b.input_scale) return false;
  if (a.params.depth() != b.params.depth()) return false;
  for (std::size_t l = 0; l < a.params.depth(); ++l) {
    if (a.params.weights[l] != b.params.weights[l] || a.params.biases[l] != b.params.biases[l]) return false;
  }
  return true;
}

DownstreamHead init_head(const HeadShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.classes < 2) throw std::invalid_argument("init_head: invalid head shape");
  std::mt19937_64 rng(derive_seed(SeedSpec{seed, {}}, {"head-init"}));
  DownstreamHead head;
  head.input_shift.assign(shape.input_dim, 0.0f);
  head.input_scale.assign(shape.input_dim, 1.0f);
  std::vector<std::size_t> widths{shape.input_dim};
  widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
  widths.push_back(shape.classes);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double fan_in = static_cast<double>(widths[l]);
    const double fan_out = static_cast<double>(widths[l + 1]);
    const bool output = l + 2 == widths.size();
    const double limit = output ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
    head.params.weights.push_back(uniform_matrix(rng, widths[l + 1], widths[l], limit));
    head.params.biases.push_back(mlp::Vector<float>::Zero(static_cast<Eigen::Index>(widths[l + 1])));
  }
  return head;
}

TrainedHead train_classifier(const mlp::Matrix<float>& features, const mlp::Matrix<float>& targets,
                             const HeadShape& shape, const TrainConfig& config) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw std::invalid_argument("train_classifier: empty training set");
  if (static_cast<std::size_t>(features.cols()) != shape.input_dim) {
    throw std::invalid_argument("train_classifier: feature width " + std::to_string(features.cols()) +
                                " does not match head input " + std::to_string(shape.input_dim));
  }
  if (targets.rows() != features.rows() || static_cast<std::size_t>(targets.cols()) != shape.classes) {
    throw std::invalid_argument("train_classifier: target matrix shape mismatch");
  }

  TrainedHead out{init_head(shape, config.seed), {}};
  DownstreamHead& head = out.head;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double mean = features.col(c).cast<double>().mean();
    const double var = (features.col(c).cast<double>().array() - mean).square().mean();
    head.input_shift[static_cast<std::size_t>(c)] = static_cast<float>(mean);
    head.input_scale[static_cast<std::size_t>(c)] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-6));
  }
  const mlp::Matrix<float> standardized = head.standardize(features);

  std::mt19937_64 rng(derive_seed(SeedSpec{config.seed, {}}, {"head-batches"}));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;

  const std::size_t batch = std::min(std::max<std::size_t>(config.batch, 1), n);
  mlp::Params<float> velocity = head.params.zeros_like();
  mlp::Params<float> grad = head.params.zeros_like();
  mlp::Matrix<float> xb(static_cast<Eigen::Index>(batch), standardized.cols());
  mlp::Matrix<float> yb(static_cast<Eigen::Index>(batch), targets.cols());
  double last_finite = 0.0;
  const auto decay_step = static_cast<std::size_t>(config.decay_at * static_cast<double>(config.iterations));

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto row = static_cast<Eigen::Index>(order[cursor++]);
      xb.row(static_cast<Eigen::Index>(b)) = standardized.row(row);
      yb.row(static_cast<Eigen::Index>(b)) = targets.row(row);
    }
    const float loss = mlp::cross_entropy_backward(head.params, xb, yb, grad);
    if (!std::isfinite(loss)) {
      throw TrainingFailure("training diverged at iteration " + std::to_string(it) +
                                " (last finite minibatch loss " + std::to_string(last_finite) + ")",
                            it, last_finite);
    }
    last_finite = loss;
    const float lr = static_cast<float>(it >= decay_step ? 0.1 * config.learning_rate : config.learning_rate);
    const auto mom = static_cast<float>(config.momentum);
    const auto wd = static_cast<float>(config.weight_decay);
    for (std::size_t l = 0; l < head.params.depth(); ++l) {
      velocity.weights[l] = mom * velocity.weights[l] - lr * (grad.weights[l] + wd * head.params.weights[l]);
      velocity.biases[l] = mom * velocity.biases[l] - lr * grad.biases[l];
      head.params.weights[l] += velocity.weights[l];
      head.params.biases[l] += velocity.biases[l];
    }
  }

  out.stats.iterations = config.iterations;
  out.stats.final_loss = full_loss(head, standardized, targets, &out.stats.train_accuracy);
  if (!std::isfinite(out.stats.final_loss)) {
    throw TrainingFailure("training produced a non-finite loss", config.iterations, last_finite);
  }
  return out;
}

mlp::Matrix<float> embedding_matrix(const Encoder& encoder, std::span<const ImageTensor> images) {
  const auto embeddings = encoder.encode_batch(images);
  mlp::Matrix<float> m(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(encoder.embedding_dim()));
  for (std::size_t r = 0; r < embeddings.size(); ++r) {
    std::copy(embeddings[r].values.begin(), embeddings[r].values.end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

mlp::Matrix<float> pixel_matrix(std::span<const ImageTensor> images) {
  if (images.empty()) return {};
  const auto width = static_cast<Eigen::Index>(images.front().size());
  mlp::Matrix<float> m(static_cast<Eigen::Index>(images.size()), width);
  for (std::size_t r = 0; r < images.size(); ++r) {
    if (static_cast<Eigen::Index>(images[r].size()) != width) throw std::invalid_argument("pixel_matrix: mixed shapes");
    std::copy(images[r].data().begin(), images[r].data().end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

mlp::Matrix<float> one_hot(std::span<const int> labels, std::size_t classes) {
  mlp::Matrix<float> m = mlp::Matrix<float>::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) throw std::invalid_argument("one_hot: label out of range");
    m(static_cast<Eigen::Index>(r), labels[r]) = 1.0f;
  }
  return m;
}

std::vector<int> argmax_rows(const mlp::Matrix<float>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index idx = 0;
    m.row(r).maxCoeff(&idx);
    out[static_cast<std::size_t>(r)] = static_cast<int>(idx);
  }
  return out;
}

TrainedHead train_head(const Encoder& encoder, const LabeledDataset& data, const HeadShape& shape,
                       const TrainConfig& config) {
  if (data.size() == 0) throw std::invalid_argument("train_head: empty dataset");
  if (shape.input_dim != encoder.embedding_dim()) {
    throw std::invalid_argument("train_head: head input " + std::to_string(shape.input_dim) +
                                " does not match embedding dim " + std::to_string(encoder.embedding_dim()));
  }
  return train_classifier(embedding_matrix(encoder, data.images), one_hot(data.labels, shape.classes), shape, config);
}

void save_head(const std::filesystem::path& dir, const DownstreamHead& head) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "head.json", Json{{"widths", head.widths()}});
  const std::uint32_t n = static_cast<std::uint32_t>(head.input_dim());
  io::write_tensor(dir / "shift.peit", std::span<const std::uint32_t>(&n, 1), head.input_shift);
  io::write_tensor(dir / "scale.peit", std::span<const std::uint32_t>(&n, 1), head.input_scale);
  for (std::size_t l = 0; l < head.params.weights.size(); ++l) {
    const auto& w = head.params.weights[l];
    const auto& b = head.params.biases[l];
    const std::uint32_t wd[2] = {static_cast<std::uint32_t>(w.rows()), static_cast<std::uint32_t>(w.cols())};
    const std::uint32_t bd[1] = {static_cast<std::uint32_t>(b.size())};
    io::write_tensor(dir / ("w" + std::to_string(l) + ".peit"), wd,
                     std::span<const float>(w.data(), static_cast<std::size_t>(w.size())));
    io::write_tensor(dir / ("b" + std::to_string(l) + ".peit"), bd,
                     std::span<const float>(b.data(), static_cast<std::size_t>(b.size())));
  }
}

DownstreamHead load_head(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "head.json")) throw PrerequisiteMissing("no trained head in " + dir.string());
  const auto widths = read_json_file(dir / "head.json").at("widths").get<std::vector<std::size_t>>();
  if (widths.size() < 2) throw std::invalid_argument("load_head: need at least two layer widths");
  DownstreamHead head;
  head.input_shift = io::read_tensor(dir / "shift.peit").data;
  head.input_scale = io::read_tensor(dir / "scale.peit").data;
  if (head.input_shift.size() != widths[0] || head.input_scale.size() != widths[0]) {
    throw std::invalid_argument("load_head: standardization size does not match the input width");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    auto w = io::read_tensor(dir / ("w" + std::to_string(l) + ".peit"));
    auto b = io::read_tensor(dir / ("b" + std::to_string(l) + ".peit"));
    if (w.dims.size() != 2 || w.dims[0] != widths[l + 1] || w.dims[1] != widths[l] || b.data.size() != widths[l + 1]) {
      throw std::invalid_argument("load_head: layer " + std::to_string(l) + " has unexpected dimensions");
    }
    mlp::Matrix<float> wm(static_cast<Eigen::Index>(w.dims[0]), static_cast<Eigen::Index>(w.dims[1]));
    std::copy(w.data.begin(), w.data.end(), wm.data());
    mlp::Vector<float> bv(static_cast<Eigen::Index>(b.data.size()));
    std::copy(b.data.begin(), b.data.end(), bv.data());
    head.params.weights.push_back(std::move(wm));
    head.params.biases.push_back(std::move(bv));
  }
  return head;
}

}  // namespace pei
