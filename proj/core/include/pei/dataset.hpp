#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pei/tensor.hpp"

namespace pei {

enum class DatasetGenerator {
  Shapes,    // one class-determined geometric shape, jittered color/position/size
  Textures,  // band-limited oriented gratings, class-determined orientation
};

std::string_view to_string(DatasetGenerator g);
DatasetGenerator parse_dataset_generator(std::string_view tag);

struct DatasetSpec {
  DatasetGenerator generator = DatasetGenerator::Shapes;
  int classes = 10;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 500;
  ImageShape shape{32, 32, 3};
  std::uint64_t seed = 0;
};

enum class Split { Train, Test };

struct LabeledDataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.size(); }
};

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset test;
};

/// Sample n of a split has label n mod K, so every split is balanced within
/// one sample. Each sample is a pure function of (spec.seed, split, n).
/// Throws std::invalid_argument when K < 2 or the shape is invalid.
LabeledDataset generate_split(const DatasetSpec& spec, Split split);
LabeledDataset generate_split(const DatasetSpec& spec, Split split, std::size_t count);
DatasetSplits generate_dataset(const DatasetSpec& spec);

ImageTensor render_sample(const DatasetSpec& spec, Split split, std::size_t index);

}  // namespace pei
