#include "pei/defense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "pei/numerics.hpp"

namespace pei {
namespace {

constexpr QuantTable kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

struct CosineTable {
  double c[8][8];
  CosineTable() {
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
};

const CosineTable& cosines() {
  static const CosineTable table;
  return table;
}

}  // namespace

void CodecConfig::validate() const {
  if (quality < 1 || quality > 100) {
    throw std::invalid_argument("codec quality must be in [1, 100], got " + std::to_string(quality));
  }
}

QuantTable quant_table(int quality) {
  CodecConfig{quality}.validate();
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::clamp((kLuminance[i] * scale + 50) / 100, 1, 255);
  return t;
}

void dct8x8(const double* in, double* out) {
  const auto& c = cosines().c;
  double tmp[64];
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += c[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += c[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
}

void idct8x8(const double* in, double* out) {
  const auto& c = cosines().c;
  double tmp[64];
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += c[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  }
}

void quantize_block(double* coefficients, const QuantTable& table) {
  for (std::size_t i = 0; i < 64; ++i) {
    coefficients[i] = std::round(coefficients[i] / table[i]) * table[i];
  }
}

ImageTensor lossy_roundtrip(const ImageTensor& image, const CodecConfig& config) {
  config.validate();
  const auto table = quant_table(config.quality);
  const auto& s = image.shape();
  const std::uint32_t ph = (s.height + 7) / 8 * 8;
  const std::uint32_t pw = (s.width + 7) / 8 * 8;
  ImageTensor out(s);
  double block[64], coeff[64];
  for (std::uint32_t c = 0; c < s.channels; ++c) {
    for (std::uint32_t by = 0; by < ph; by += 8) {
      for (std::uint32_t bx = 0; bx < pw; bx += 8) {
        for (std::uint32_t y = 0; y < 8; ++y) {
          const std::uint32_t sy = std::min(by + y, s.height - 1);
          for (std::uint32_t x = 0; x < 8; ++x) {
            const std::uint32_t sx = std::min(bx + x, s.width - 1);
            block[y * 8 + x] = static_cast<double>(image.at(sy, sx, c)) * 255.0 - 128.0;
          }
        }
        dct8x8(block, coeff);
        quantize_block(coeff, table);
        idct8x8(coeff, block);
        for (std::uint32_t y = 0; y < 8 && by + y < s.height; ++y) {
          for (std::uint32_t x = 0; x < 8 && bx + x < s.width; ++x) {
            const double v = std::clamp(std::round(block[y * 8 + x] + 128.0), 0.0, 255.0);
            out.at(by + y, bx + x, c) = static_cast<float>(v / 255.0);
          }
        }
      }
    }
  }
  return out;
}

std::string_view to_string(Interpolation interp) {
  return interp == Interpolation::Nearest ? "nearest" : "bilinear";
}

Interpolation parse_interpolation(std::string_view tag) {
  if (tag == "nearest") return Interpolation::Nearest;
  if (tag == "bilinear") return Interpolation::Bilinear;
  throw std::invalid_argument("unknown interpolation '" + std::string(tag) + "'");
}

ImageTensor resize(const ImageTensor& image, const ResizeSpec& spec) {
  if (spec.height == 0 || spec.width == 0) throw std::invalid_argument("resize: target must be at least 1x1");
  const auto& s = image.shape();
  ImageTensor out({spec.height, spec.width, s.channels});
  if (spec.interpolation == Interpolation::Nearest) {
    for (std::uint32_t y = 0; y < spec.height; ++y) {
      const auto sy = static_cast<std::uint32_t>(std::uint64_t{y} * s.height / spec.height);
      for (std::uint32_t x = 0; x < spec.width; ++x) {
        const auto sx = static_cast<std::uint32_t>(std::uint64_t{x} * s.width / spec.width);
        for (std::uint32_t c = 0; c < s.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
      }
    }
    return out;
  }
  auto coord = [](std::uint32_t d, std::uint32_t in, std::uint32_t n) {
    return n == 1 ? 0.0 : static_cast<double>(d) * (in - 1) / (n - 1);
  };
  for (std::uint32_t y = 0; y < spec.height; ++y) {
    const double fy = coord(y, s.height, spec.height);
    const auto y0 = static_cast<std::uint32_t>(std::floor(fy));
    const std::uint32_t y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - y0;
    for (std::uint32_t x = 0; x < spec.width; ++x) {
      const double fx = coord(x, s.width, spec.width);
      const auto x0 = static_cast<std::uint32_t>(std::floor(fx));
      const std::uint32_t x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - x0;
      for (std::uint32_t c = 0; c < s.channels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

InputTransform defense_transform(const CodecConfig& config, ImageShape native, Interpolation to_native) {
  config.validate();
  std::string description = "lossy-dct q=" + std::to_string(config.quality) + ", then " +
                            std::string(to_string(to_native)) + " resize to " + native.to_string();
  return {std::move(description), [config, native, to_native](const ImageTensor& x) {
            ImageTensor y = lossy_roundtrip(x, config);
            if (y.shape().height == native.height && y.shape().width == native.width) return y;
            return resize(y, {native.height, native.width, to_native});
          }};
}

ServiceInstance wrap_service_with_defense(const ServiceInstance& service, const CodecConfig& config,
                                          Interpolation to_native) {
  return ServiceInstance(service.name() + "+defense", service.encoder(), service.head(), service.widest_mode(),
                         defense_transform(config, service.native_shape(), to_native));
}

AttackSampleSet bypass_resize(const AttackSampleSet& samples, const ResizeSpec& spec) {
  AttackSampleSet out = samples;
  for (auto& s : out.samples) s = resize(s, spec);
  const ImageShape to{spec.height, spec.width, samples.config.shape.channels};
  out.transforms.push_back("resize " + samples.config.shape.to_string() + " -> " + to.to_string() + " (" +
                           std::string(to_string(spec.interpolation)) + ")");
  return out;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

std::vector<DefenseLossRow> defense_loss_report(std::span<const Encoder* const> candidates,
                                                std::span<const ImageTensor> objectives,
                                                const AttackSampleSet& samples, const CodecConfig& config) {
  const auto& cfg = samples.config;
  if (candidates.size() != samples.candidates()) {
    throw std::invalid_argument("defense_loss_report: candidate count does not match the sample set");
  }
  std::vector<DefenseLossRow> rows;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    DefenseLossRow row{samples.candidate_names[i]};
    const auto targets = candidates[i]->encode_batch(objectives);
    for (std::size_t j = 0; j < cfg.objectives; ++j) {
      for (std::size_t k = 0; k < cfg.replicas; ++k) {
        const auto& x = samples.at(i, j, k);
        row.clean_loss += squared_embedding_loss(candidates[i]->encode(x), targets[j]);
        row.defended_loss += squared_embedding_loss(candidates[i]->encode(lossy_roundtrip(x, config)), targets[j]);
      }
    }
    const double n = static_cast<double>(cfg.objectives * cfg.replicas);
    row.clean_loss /= n;
    row.defended_loss /= n;
    rows.push_back(std::move(row));
  }
  return rows;
}

DefenseReport run_defense_experiment(const ServiceInstance& service, std::span<const ImageTensor> objectives,
                                     const AttackSampleSet& samples, const SimilarityFn& sim,
                                     const CodecConfig& config, const ResizeSpec& bypass,
                                     const InferenceOptions& options) {
  DefenseReport report;
  report.quality = config.quality;
  report.bypass = bypass;
  ServiceInstance origin(service.name(), service.encoder(), service.head(), service.widest_mode(),
                         service.transform());
  report.origin = run_inference(origin, objectives, samples, sim, options);

  ServiceInstance defended = wrap_service_with_defense(service, config);
  report.defended = run_inference(defended, objectives, samples, sim, options);

  const auto resized = bypass_resize(samples, bypass);
  ServiceInstance defended_again = wrap_service_with_defense(service, config);
  report.defended_resized = run_inference(defended_again, objectives, resized, sim, options);
  return report;
}

}  // namespace pei
