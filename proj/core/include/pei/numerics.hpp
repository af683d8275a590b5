#pragma once

#include <span>
#include <vector>

#include "pei/tensor.hpp"

namespace pei {

/// ||a - b||_2^2, accumulated in double. Throws std::invalid_argument on a
/// dimension mismatch.
double squared_embedding_loss(const Embedding& a, const Embedding& b);
double squared_embedding_loss(std::span<const float> a, std::span<const float> b);

/// v / ||v||_inf. The zero vector maps to the zero vector. Throws
/// std::invalid_argument on NaN input.
std::vector<float> linf_normalize(std::span<const float> v);

double l2_norm(std::span<const float> v);
double linf_norm(std::span<const float> v);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace pei
