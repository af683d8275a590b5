#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pei/encoder.hpp"
#include "pei/inference.hpp"
#include "pei/service.hpp"
#include "pei/synthesis.hpp"
#include "pei/tensor.hpp"

namespace pei {

/// DCT quantization round-trip; there is no entropy coding stage, so this is
/// the lossy part of baseline JPEG only.
struct CodecConfig {
  int quality = 30;
  static constexpr int kBlock = 8;

  /// Throws std::invalid_argument unless 1 <= quality <= 100.
  void validate() const;
};

using QuantTable = std::array<int, 64>;

/// Standard luminance table scaled by 5000/q (q < 50) or 200 - 2q, each entry
/// floor((base * scale + 50) / 100) clamped to [1, 255].
QuantTable quant_table(int quality);

/// Orthonormal 8x8 DCT-II and its inverse on row-major blocks.
void dct8x8(const double* in, double* out);
void idct8x8(const double* in, double* out);

/// Quantize and dequantize DCT coefficients in place.
void quantize_block(double* coefficients, const QuantTable& table);

/// Per channel: replicate-pad to multiples of 8, level shift to [-128, 127],
/// block DCT, quantize, dequantize, inverse DCT, round to 8 bits, crop, clamp
/// to [0,1].
ImageTensor lossy_roundtrip(const ImageTensor& image, const CodecConfig& config);

enum class Interpolation { Nearest, Bilinear };

std::string_view to_string(Interpolation interp);
Interpolation parse_interpolation(std::string_view tag);

struct ResizeSpec {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  Interpolation interpolation = Interpolation::Nearest;
};

/// Nearest: source index floor(d * in / out). Bilinear: align-corners
/// sampling at d * (in - 1) / (out - 1). Throws std::invalid_argument for a
/// zero target.
ImageTensor resize(const ImageTensor& image, const ResizeSpec& spec);

/// Codec at the submitted resolution, then resize to the encoder's native
/// shape when they differ.
InputTransform defense_transform(const CodecConfig& config, ImageShape native,
                                 Interpolation to_native = Interpolation::Nearest);

/// Same encoder, head and output mode as `service`, preceded by the defense.
/// The returned service has its own query counter.
ServiceInstance wrap_service_with_defense(const ServiceInstance& service, const CodecConfig& config,
                                          Interpolation to_native = Interpolation::Nearest);

/// Every sample resized; the transformation is appended to `transforms`.
AttackSampleSet bypass_resize(const AttackSampleSet& samples, const ResizeSpec& spec);

double psnr(const ImageTensor& a, const ImageTensor& b);

struct DefenseLossRow {
  std::string candidate;
  double clean_loss = 0.0;
  double defended_loss = 0.0;
};

/// Mean squared embedding loss of each candidate's attack samples against
/// their objectives, before and after the codec. Uses the candidate encoders
/// directly (attacker side, unmetered).
std::vector<DefenseLossRow> defense_loss_report(std::span<const Encoder* const> candidates,
                                                std::span<const ImageTensor> objectives,
                                                const AttackSampleSet& samples, const CodecConfig& config);

struct DefenseReport {
  int quality = 0;
  ResizeSpec bypass;
  PeiReport origin;
  PeiReport defended;
  PeiReport defended_resized;
  std::vector<DefenseLossRow> losses;
};

/// Origin: undefended service, original samples. Defended: codec-wrapped
/// service, original samples. Defended-vs-Resized: codec-wrapped service,
/// samples resized by `bypass`.
DefenseReport run_defense_experiment(const ServiceInstance& service, std::span<const ImageTensor> objectives,
                                     const AttackSampleSet& samples, const SimilarityFn& sim,
                                     const CodecConfig& config, const ResizeSpec& bypass,
                                     const InferenceOptions& options = {});

}  // namespace pei
