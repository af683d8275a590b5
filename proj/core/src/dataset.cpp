#include "pei/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "pei/random.hpp"

namespace pei {
namespace {

constexpr int kShapeKinds = 10;

// (u, v) are offsets from the shape center in pixels, v pointing down; r is
// the nominal radius.
bool inside_shape(int kind, double u, double v, double r) {
  const double au = std::fabs(u);
  const double av = std::fabs(v);
  switch (kind) {
    case 0: return u * u + v * v <= r * r;                                   // disk
    case 1: return au <= 0.85 * r && av <= 0.85 * r;                         // square
    case 2: return v >= -r && v <= r && au <= 0.5 * (v + r);                 // triangle
    case 3: return au <= 1.1 * r && av <= 0.3 * r;                           // horizontal bar
    case 4: return au <= 0.3 * r && av <= 1.1 * r;                           // vertical bar
    case 5: return (au <= r && av <= 0.28 * r) || (av <= r && au <= 0.28 * r);  // plus
    case 6: {                                                                // ring
      const double d = std::sqrt(u * u + v * v);
      return d >= 0.55 * r && d <= r;
    }
    case 7: return au + av <= r;                                             // diamond
    case 8: {                                                                // diagonal bar
      const double across = std::fabs(u - v) / std::numbers::sqrt2;
      const double along = std::fabs(u + v) / std::numbers::sqrt2;
      return across <= 0.25 * r && along <= 1.1 * r;
    }
    default: {                                                               // X
      const double a1 = std::fabs(u - v) / std::numbers::sqrt2;
      const double a2 = std::fabs(u + v) / std::numbers::sqrt2;
      return (a1 <= 0.22 * r && a2 <= 1.1 * r) || (a2 <= 0.22 * r && a1 <= 1.1 * r);
    }
  }
}

ImageTensor render_shape(const ImageShape& shape, int label, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double h = shape.height;
  const double w = shape.width;
  const double extent = std::min(h, w);
  const int kind = label % kShapeKinds;
  // Classes beyond the ten base shapes reuse them at a smaller scale.
  const double scale_class = 1.0 - 0.25 * static_cast<double>(label / kShapeKinds % 3);
  const double r = extent * 0.28 * scale_class * (0.85 + 0.3 * unit(rng));
  const double cy = h / 2.0 + (unit(rng) - 0.5) * 0.2 * h;
  const double cx = w / 2.0 + (unit(rng) - 0.5) * 0.2 * w;

  std::vector<double> fg(shape.channels), bg(shape.channels);
  // Mid-grey background, shape lighter or darker by a random contrast.
  const double polarity = unit(rng) < 0.5 ? -1.0 : 1.0;
  for (std::size_t c = 0; c < bg.size(); ++c) {
    bg[c] = 0.35 + 0.3 * unit(rng);
    fg[c] = bg[c] + polarity * (0.25 + 0.1 * unit(rng));
  }

  ImageTensor img(shape);
  std::uniform_real_distribution<double> noise(-0.03, 0.03);
  for (std::uint32_t y = 0; y < shape.height; ++y) {
    for (std::uint32_t x = 0; x < shape.width; ++x) {
      // 2x2 supersampling for soft edges.
      int hits = 0;
      for (double sy : {0.25, 0.75}) {
        for (double sx : {0.25, 0.75}) {
          hits += inside_shape(kind, x + sx - cx, y + sy - cy, r) ? 1 : 0;
        }
      }
      const double cover = hits / 4.0;
      for (std::uint32_t c = 0; c < shape.channels; ++c) {
        const double v = cover * fg[c] + (1.0 - cover) * bg[c] + noise(rng);
        img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

ImageTensor render_texture(const ImageShape& shape, int label, int classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kGratings = 3;
  const double base_angle = std::numbers::pi * label / classes;
  double angle[kGratings], freq[kGratings], phase[kGratings], amp[kGratings];
  for (int g = 0; g < kGratings; ++g) {
    angle[g] = base_angle + (unit(rng) - 0.5) * 0.4;
    freq[g] = 2.0 + 4.0 * unit(rng);  // cycles per image
    phase[g] = 2.0 * std::numbers::pi * unit(rng);
    amp[g] = 0.5 + 0.5 * unit(rng);
  }
  std::vector<double> c0(shape.channels), c1(shape.channels);
  for (auto& c : c0) c = unit(rng);
  for (auto& c : c1) c = unit(rng);

  ImageTensor img(shape);
  const double amp_sum = amp[0] + amp[1] + amp[2];
  for (std::uint32_t y = 0; y < shape.height; ++y) {
    for (std::uint32_t x = 0; x < shape.width; ++x) {
      const double fy = static_cast<double>(y) / shape.height;
      const double fx = static_cast<double>(x) / shape.width;
      double s = 0.0;
      for (int g = 0; g < kGratings; ++g) {
        const double t = fx * std::cos(angle[g]) + fy * std::sin(angle[g]);
        s += amp[g] * std::sin(2.0 * std::numbers::pi * freq[g] * t + phase[g]);
      }
      const double mix = 0.5 + 0.5 * s / amp_sum;  // in [0,1]
      for (std::uint32_t c = 0; c < shape.channels; ++c) {
        img.at(y, x, c) = static_cast<float>(std::clamp(mix * c1[c] + (1.0 - mix) * c0[c], 0.0, 1.0));
      }
    }
  }
  return img;
}

void validate(const DatasetSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("dataset: class count must be >= 2");
  if (!spec.shape.valid()) throw std::invalid_argument("dataset: invalid image shape");
}

}  // namespace

std::string_view to_string(DatasetGenerator g) {
  return g == DatasetGenerator::Shapes ? "Shapes" : "Textures";
}

DatasetGenerator parse_dataset_generator(std::string_view tag) {
  if (tag == "Shapes") return DatasetGenerator::Shapes;
  if (tag == "Textures") return DatasetGenerator::Textures;
  throw std::invalid_argument("unknown dataset generator '" + std::string(tag) + "'");
}

ImageTensor render_sample(const DatasetSpec& spec, Split split, std::size_t index) {
  validate(spec);
  const SeedSpec root{spec.seed, {to_string(spec.generator)}};
  std::mt19937_64 rng(derive_seed(root, {split == Split::Train ? "train" : "test", index}));
  const int label = static_cast<int>(index % static_cast<std::size_t>(spec.classes));
  return spec.generator == DatasetGenerator::Shapes ? render_shape(spec.shape, label, rng)
                                                    : render_texture(spec.shape, label, spec.classes, rng);
}

LabeledDataset generate_split(const DatasetSpec& spec, Split split, std::size_t count) {
  validate(spec);
  LabeledDataset out;
  out.images.reserve(count);
  out.labels.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    out.images.push_back(render_sample(spec, split, n));
    out.labels.push_back(static_cast<int>(n % static_cast<std::size_t>(spec.classes)));
  }
  return out;
}

LabeledDataset generate_split(const DatasetSpec& spec, Split split) {
  return generate_split(spec, split, split == Split::Train ? spec.train_samples : spec.test_samples);
}

DatasetSplits generate_dataset(const DatasetSpec& spec) {
  return {generate_split(spec, Split::Train), generate_split(spec, Split::Test)};
}

}  // namespace pei
