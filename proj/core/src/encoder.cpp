#include "pei/encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "pei/errors.hpp"
#include "pei/random.hpp"

namespace pei {
namespace {

std::mt19937_64 weight_engine(const ToyEncoderSpec& spec) {
  return std::mt19937_64(derive_seed(SeedSpec{spec.seed, {}}, {"encoder-weights"}));
}

RowMatrixF gaussian_matrix(std::mt19937_64& engine, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  RowMatrixF m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(normal(engine));
  return m;
}

Eigen::Map<const Eigen::VectorXf> as_vector(const ImageTensor& image) {
  return {image.data().data(), static_cast<Eigen::Index>(image.size())};
}

std::size_t quadrant(std::uint32_t y, std::uint32_t x, std::uint32_t h, std::uint32_t w) {
  return (y >= h / 2 ? 2u : 0u) + (x >= w / 2 ? 1u : 0u);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("build_encoder: " + what);
}

}  // namespace

Embedding Encoder::encode(const ImageTensor& image) const {
  return std::move(encode_batch(std::span<const ImageTensor>(&image, 1)).front());
}

std::string_view to_string(EncoderArch arch) {
  switch (arch) {
    case EncoderArch::LinearProject: return "LinearProject";
    case EncoderArch::PatchProject: return "PatchProject";
    case EncoderArch::RandomConv: return "RandomConv";
    case EncoderArch::FourierFeature: return "FourierFeature";
  }
  return "?";
}

EncoderArch parse_encoder_arch(std::string_view tag) {
  for (auto a : {EncoderArch::LinearProject, EncoderArch::PatchProject, EncoderArch::RandomConv,
                 EncoderArch::FourierFeature}) {
    if (tag == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown encoder architecture '" + std::string(tag) + "'");
}

std::vector<Embedding> ToyEncoder::encode_batch(std::span<const ImageTensor> images) const {
  for (const auto& img : images) {
    if (img.shape() != spec_.input) {
      throw std::invalid_argument("encoder " + spec_.name + ": expected " + spec_.input.to_string() +
                                  ", got " + img.shape().to_string());
    }
  }
  std::vector<Embedding> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(encode_one(img));
  return out;
}

// LinearProject

LinearProjectEncoder::LinearProjectEncoder(ToyEncoderSpec spec) : ToyEncoder(spec) {
  auto engine = weight_engine(spec);
  const auto cols = static_cast<Eigen::Index>(spec.input.size());
  weights_ = gaussian_matrix(engine, static_cast<Eigen::Index>(spec.dim), cols,
                             1.0 / std::sqrt(static_cast<double>(cols)));
}

LinearProjectEncoder::LinearProjectEncoder(std::string name, ImageShape input, RowMatrixF weights)
    : ToyEncoder(ToyEncoderSpec{std::move(name), EncoderArch::LinearProject, 0, input,
                                static_cast<std::size_t>(weights.rows())}),
      weights_(std::move(weights)) {
  if (static_cast<std::size_t>(weights_.cols()) != input.size()) {
    throw std::invalid_argument("LinearProjectEncoder: weight columns do not match the input size");
  }
}

Embedding LinearProjectEncoder::encode_one(const ImageTensor& image) const {
  Eigen::VectorXf e = weights_ * as_vector(image);
  return Embedding(std::vector<float>(e.data(), e.data() + e.size()));
}

// PatchProject

PatchProjectEncoder::PatchProjectEncoder(ToyEncoderSpec spec) : ToyEncoder(spec) {
  auto engine = weight_engine(spec);
  const auto features = static_cast<Eigen::Index>(spec.dim / 4);
  const auto patch_len = static_cast<Eigen::Index>(kPatch * kPatch * spec.input.channels);
  projection_ = gaussian_matrix(engine, features, patch_len, 2.0 / std::sqrt(static_cast<double>(patch_len)));
  std::normal_distribution<double> normal(0.0, 0.5);
  bias_.resize(features);
  for (Eigen::Index i = 0; i < features; ++i) bias_[i] = static_cast<float>(normal(engine));
}

Embedding PatchProjectEncoder::encode_one(const ImageTensor& image) const {
  const auto& s = image.shape();
  const auto features = bias_.size();
  const std::uint32_t grid_h = s.height / kPatch;
  const std::uint32_t grid_w = s.width / kPatch;
  std::vector<double> pooled(4 * static_cast<std::size_t>(features), 0.0);
  Eigen::VectorXf patch(projection_.cols());
  for (std::uint32_t py = 0; py < grid_h; ++py) {
    for (std::uint32_t px = 0; px < grid_w; ++px) {
      Eigen::Index n = 0;
      for (std::uint32_t dy = 0; dy < kPatch; ++dy) {
        for (std::uint32_t dx = 0; dx < kPatch; ++dx) {
          for (std::uint32_t c = 0; c < s.channels; ++c) {
            patch[n++] = image.at(py * kPatch + dy, px * kPatch + dx, c) - 0.5f;
          }
        }
      }
      Eigen::VectorXf z = projection_ * patch + bias_;
      const std::size_t q = quadrant(py, px, grid_h, grid_w);
      for (Eigen::Index k = 0; k < features; ++k) pooled[q * features + k] += std::tanh(z[k]);
    }
  }
  const double per_quadrant = static_cast<double>(grid_h / 2) * (grid_w / 2);
  std::vector<float> out(pooled.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(pooled[i] / per_quadrant);
  return Embedding(std::move(out));
}

// RandomConv

RandomConvEncoder::RandomConvEncoder(ToyEncoderSpec spec) : ToyEncoder(spec) {
  auto engine = weight_engine(spec);
  const std::size_t k = spec.dim / 4;
  const std::size_t fan_in = std::size_t{kKernel} * kKernel * spec.input.channels;
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  kernels_.resize(fan_in * k);
  for (float& w : kernels_) w = static_cast<float>(normal(engine));
  std::normal_distribution<double> bias(0.0, 0.05);
  bias_.resize(k);
  for (float& b : bias_) b = static_cast<float>(bias(engine));
}

Embedding RandomConvEncoder::encode_one(const ImageTensor& image) const {
  const auto& s = image.shape();
  const std::size_t kcount = bias_.size();
  const auto h = static_cast<int>(s.height);
  const auto w = static_cast<int>(s.width);
  const auto channels = static_cast<int>(s.channels);
  const int out_h = (h + 2 * kPad - kKernel) / kStride + 1;
  const int out_w = (w + 2 * kPad - kKernel) / kStride + 1;
  std::vector<double> pooled(4 * kcount, 0.0);
  std::vector<float> acc(kcount);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      std::copy(bias_.begin(), bias_.end(), acc.begin());
      for (int ky = 0; ky < kKernel; ++ky) {
        const int yy = oy * kStride - kPad + ky;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < kKernel; ++kx) {
          const int xx = ox * kStride - kPad + kx;
          if (xx < 0 || xx >= w) continue;
          for (int c = 0; c < channels; ++c) {
            const float v = image.at(static_cast<std::uint32_t>(yy), static_cast<std::uint32_t>(xx),
                                     static_cast<std::uint32_t>(c)) - 0.5f;
            const float* kern = &kernels_[((static_cast<std::size_t>(ky) * kKernel + kx) * channels + c) * kcount];
            for (std::size_t k = 0; k < kcount; ++k) acc[k] += v * kern[k];
          }
        }
      }
      const std::size_t q = quadrant(static_cast<std::uint32_t>(oy), static_cast<std::uint32_t>(ox),
                                     static_cast<std::uint32_t>(out_h), static_cast<std::uint32_t>(out_w));
      for (std::size_t k = 0; k < kcount; ++k) pooled[q * kcount + k] += std::max(acc[k], 0.0f);
    }
  }
  const double per_quadrant = static_cast<double>(out_h / 2) * (out_w / 2);
  std::vector<float> out(pooled.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(pooled[i] / per_quadrant);
  return Embedding(std::move(out));
}

// FourierFeature

FourierFeatureEncoder::FourierFeatureEncoder(ToyEncoderSpec spec) : ToyEncoder(spec) {
  auto engine = weight_engine(spec);
  const auto m = static_cast<Eigen::Index>(spec.dim / 2);
  const auto cols = static_cast<Eigen::Index>(spec.input.size());
  frequencies_ = gaussian_matrix(engine, m, cols, kBandwidth / std::sqrt(static_cast<double>(cols)));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  phases_.resize(static_cast<std::size_t>(m));
  for (float& p : phases_) p = static_cast<float>(phase(engine));
}

Embedding FourierFeatureEncoder::encode_one(const ImageTensor& image) const {
  Eigen::VectorXf z = frequencies_ * as_vector(image);
  const auto m = static_cast<std::size_t>(z.size());
  std::vector<float> out(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    const double angle = static_cast<double>(z[static_cast<Eigen::Index>(i)]) + phases_[i];
    out[i] = static_cast<float>(std::cos(angle));
    out[m + i] = static_cast<float>(std::sin(angle));
  }
  return Embedding(std::move(out));
}

std::shared_ptr<const ToyEncoder> build_encoder(const ToyEncoderSpec& spec) {
  require(spec.input.valid(), "invalid input shape " + spec.input.to_string());
  require(spec.dim >= 2, "embedding dim must be >= 2");
  switch (spec.arch) {
    case EncoderArch::LinearProject:
      return std::make_shared<LinearProjectEncoder>(spec);
    case EncoderArch::PatchProject:
      require(spec.dim % 4 == 0, "PatchProject needs dim divisible by 4");
      require(spec.input.height % (2 * PatchProjectEncoder::kPatch) == 0 &&
                  spec.input.width % (2 * PatchProjectEncoder::kPatch) == 0,
              "PatchProject needs height and width divisible by 16");
      return std::make_shared<PatchProjectEncoder>(spec);
    case EncoderArch::RandomConv:
      require(spec.dim % 4 == 0, "RandomConv needs dim divisible by 4");
      require(spec.input.height % 8 == 0 && spec.input.width % 8 == 0,
              "RandomConv needs height and width divisible by 8");
      return std::make_shared<RandomConvEncoder>(spec);
    case EncoderArch::FourierFeature:
      require(spec.dim % 2 == 0, "FourierFeature needs an even dim");
      return std::make_shared<FourierFeatureEncoder>(spec);
  }
  throw std::invalid_argument("build_encoder: unknown architecture tag");
}

std::vector<float> analytic_gradient(const Encoder& encoder, const ImageTensor& x, const Embedding& target) {
  const auto* linear = dynamic_cast<const LinearProjectEncoder*>(&encoder);
  if (linear == nullptr) {
    throw Unsupported("analytic_gradient: encoder '" + encoder.name() + "' is not LinearProject");
  }
  if (x.shape() != linear->input_shape()) throw std::invalid_argument("analytic_gradient: shape mismatch");
  if (target.dim() != linear->embedding_dim()) throw std::invalid_argument("analytic_gradient: target dim mismatch");
  const auto w = linear->weights().cast<double>();
  Eigen::VectorXd residual = w * as_vector(x).cast<double>();
  for (std::size_t i = 0; i < target.dim(); ++i) residual[static_cast<Eigen::Index>(i)] -= target.values[i];
  Eigen::VectorXd g = 2.0 * (w.transpose() * residual);
  std::vector<float> out(static_cast<std::size_t>(g.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(g[static_cast<Eigen::Index>(i)]);
  return out;
}

}  // namespace pei
