#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace pei::mlp {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Fully connected ReLU network; layer l maps width l to width l+1 and the
/// last layer is linear (logits).
template <typename T>
struct Params {
  std::vector<Matrix<T>> weights;  // out x in
  std::vector<Vector<T>> biases;   // out

  std::size_t depth() const noexcept { return weights.size(); }

  Params zeros_like() const {
    Params z;
    for (const auto& w : weights) z.weights.push_back(Matrix<T>::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) z.biases.push_back(Vector<T>::Zero(b.size()));
    return z;
  }

  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    for (const auto& w : weights) out.weights.push_back(w.template cast<U>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<U>());
    return out;
  }
};

/// Logits for a batch (one sample per row).
template <typename T>
Matrix<T> forward(const Params<T>& p, const Matrix<T>& inputs) {
  Matrix<T> a = inputs;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    Matrix<T> z = a * p.weights[l].transpose();
    z.rowwise() += p.biases[l].transpose();
    if (l + 1 < p.depth()) z = z.cwiseMax(T(0));
    a = std::move(z);
  }
  return a;
}

/// Row-wise softmax with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    T sum = T(0);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - m);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

/// Mean soft-target cross-entropy over the batch, -sum_k p_k log q_k, and its
/// gradient with respect to every parameter (written into `grad`, which must
/// be shaped like `p`).
template <typename T>
T cross_entropy_backward(const Params<T>& p, const Matrix<T>& inputs, const Matrix<T>& targets,
                         Params<T>& grad) {
  const std::size_t depth = p.depth();
  const auto n = static_cast<T>(inputs.rows());
  std::vector<Matrix<T>> acts;
  acts.reserve(depth + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix<T> z = acts.back() * p.weights[l].transpose();
    z.rowwise() += p.biases[l].transpose();
    if (l + 1 < depth) z = z.cwiseMax(T(0));
    acts.push_back(std::move(z));
  }

  const Matrix<T>& logits = acts.back();
  Matrix<T> probs = softmax_rows<T>(logits);
  T loss = T(0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    T lse = T(0);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) lse += std::exp(logits(r, c) - m);
    lse = m + std::log(lse);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (targets(r, c) != T(0)) loss -= targets(r, c) * (logits(r, c) - lse);
    }
  }
  loss /= n;

  // dL/dz for the output layer; targets rows sum to one.
  Matrix<T> delta = (probs - targets) / n;
  for (std::size_t li = depth; li-- > 0;) {
    grad.weights[li] = delta.transpose() * acts[li];
    grad.biases[li] = delta.colwise().sum().transpose();
    if (li > 0) {
      Matrix<T> back = delta * p.weights[li];
      const Matrix<T>& a = acts[li];
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        if (a.data()[i] <= T(0)) back.data()[i] = T(0);
      }
      delta = std::move(back);
    }
  }
  return loss;
}

}  // namespace pei::mlp
