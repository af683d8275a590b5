#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pei/tensor.hpp"

namespace pei {

/// Black-box query interface shared by in-process and remote encoders.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const std::string& name() const = 0;
  virtual ImageShape input_shape() const = 0;
  virtual std::size_t embedding_dim() const = 0;

  /// Pure function of each image; batch composition never changes results.
  /// Inputs need not lie in [0,1]. Throws std::invalid_argument on a shape
  /// mismatch.
  virtual std::vector<Embedding> encode_batch(std::span<const ImageTensor> images) const = 0;

  Embedding encode(const ImageTensor& image) const;
};

enum class EncoderArch { LinearProject, PatchProject, RandomConv, FourierFeature };

std::string_view to_string(EncoderArch arch);
/// Throws std::invalid_argument for unknown tags.
EncoderArch parse_encoder_arch(std::string_view tag);

struct ToyEncoderSpec {
  std::string name;
  EncoderArch arch = EncoderArch::LinearProject;
  std::uint64_t seed = 0;
  ImageShape input{32, 32, 3};
  std::size_t dim = 64;
};

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Common base of the zoo encoders: validates shapes and maps encode_one
/// over the batch.
class ToyEncoder : public Encoder {
 public:
  explicit ToyEncoder(ToyEncoderSpec spec) : spec_(std::move(spec)) {}

  const ToyEncoderSpec& spec() const noexcept { return spec_; }
  const std::string& name() const override { return spec_.name; }
  ImageShape input_shape() const override { return spec_.input; }
  std::size_t embedding_dim() const override { return spec_.dim; }
  std::vector<Embedding> encode_batch(std::span<const ImageTensor> images) const override;

 protected:
  virtual Embedding encode_one(const ImageTensor& image) const = 0;

 private:
  ToyEncoderSpec spec_;
};

/// f(x) = W x with W in R^{d x D}, entries N(0, 1/D).
class LinearProjectEncoder final : public ToyEncoder {
 public:
  explicit LinearProjectEncoder(ToyEncoderSpec spec);
  /// Explicit weights; rows = embedding dim, cols = image size.
  LinearProjectEncoder(std::string name, ImageShape input, RowMatrixF weights);

  const RowMatrixF& weights() const noexcept { return weights_; }

 protected:
  Embedding encode_one(const ImageTensor& image) const override;

 private:
  RowMatrixF weights_;
};

/// Non-overlapping 8x8 patches, shared projection P (d/4 x 192 for RGB),
/// tanh(P p + b), averaged over the four image quadrants.
class PatchProjectEncoder final : public ToyEncoder {
 public:
  static constexpr std::uint32_t kPatch = 8;
  explicit PatchProjectEncoder(ToyEncoderSpec spec);

 protected:
  Embedding encode_one(const ImageTensor& image) const override;

 private:
  RowMatrixF projection_;
  Eigen::VectorXf bias_;
};

/// d/4 seeded 8x8 kernels at stride 4 with 2 pixels of zero padding, ReLU,
/// averaged over the four quadrants of the output grid.
class RandomConvEncoder final : public ToyEncoder {
 public:
  static constexpr int kKernel = 8;
  static constexpr int kStride = 4;
  static constexpr int kPad = 2;

  explicit RandomConvEncoder(ToyEncoderSpec spec);

 protected:
  Embedding encode_one(const ImageTensor& image) const override;

 private:
  // kernels_[((ky * kKernel + kx) * C + c) * K + k]
  std::vector<float> kernels_;
  std::vector<float> bias_;
};

/// f(x) = [cos(B x + phi), sin(B x + phi)] with B in R^{d/2 x D}, entries
/// N(0, sigma^2 / D), phi ~ U[0, 2 pi). f(0) = [cos(phi), sin(phi)].
class FourierFeatureEncoder final : public ToyEncoder {
 public:
  static constexpr double kBandwidth = 6.0;
  explicit FourierFeatureEncoder(ToyEncoderSpec spec);

  const std::vector<float>& phases() const noexcept { return phases_; }

 protected:
  Embedding encode_one(const ImageTensor& image) const override;

 private:
  RowMatrixF frequencies_;
  std::vector<float> phases_;
};

/// Throws std::invalid_argument when dim < 2, the shape is invalid, or the
/// architecture's divisibility requirements are not met.
std::shared_ptr<const ToyEncoder> build_encoder(const ToyEncoderSpec& spec);

/// Exact gradient of ||W x - target||^2 for a LinearProject encoder:
/// 2 W^T (W x - target). Throws pei::Unsupported for any other encoder.
std::vector<float> analytic_gradient(const Encoder& encoder, const ImageTensor& x,
                                     const Embedding& target);

}  // namespace pei
