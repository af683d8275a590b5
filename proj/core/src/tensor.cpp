#include "pei/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pei {

std::string ImageShape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

ImageTensor::ImageTensor(ImageShape shape, float fill) : shape_(shape), data_(shape.size(), fill) {
  if (!std::isfinite(fill)) throw std::invalid_argument("ImageTensor: non-finite fill value");
}

ImageTensor::ImageTensor(ImageShape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw std::invalid_argument("ImageTensor: " + std::to_string(data_.size()) +
                                " values do not fill shape " + shape_.to_string());
  }
  if (!all_finite()) throw std::invalid_argument("ImageTensor: non-finite element");
}

bool ImageTensor::in_unit_range() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

bool ImageTensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void ImageTensor::clamp_unit() noexcept {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace pei
