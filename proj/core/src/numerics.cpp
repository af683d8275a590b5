#include "pei/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pei {

double squared_embedding_loss(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("squared_embedding_loss: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

double squared_embedding_loss(const Embedding& a, const Embedding& b) {
  return squared_embedding_loss(std::span<const float>(a.values), std::span<const float>(b.values));
}

double linf_norm(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::vector<float> linf_normalize(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) {
    if (std::isnan(x)) throw std::invalid_argument("linf_normalize: NaN input");
    m = std::max(m, static_cast<double>(std::fabs(x)));
  }
  std::vector<float> out(v.size(), 0.0f);
  if (m == 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / m);
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace pei
