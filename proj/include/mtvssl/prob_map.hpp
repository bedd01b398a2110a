#pragma once

#include <cstddef>

#include "mtvssl/tensor.hpp"

namespace mtvssl {

// Per-location class distribution, stored (H, W, C) row-major.
class SegmentationProbMap {
 public:
  SegmentationProbMap() = default;
  explicit SegmentationProbMap(Tensor probs);

  static SegmentationProbMap uniform(std::size_t h, std::size_t w, std::size_t classes);

  std::size_t height() const { return probs_.dim(0); }
  std::size_t width() const { return probs_.dim(1); }
  std::size_t classes() const { return probs_.dim(2); }
  std::size_t locations() const { return height() * width(); }

  const Tensor& probs() const { return probs_; }
  Tensor& probs() { return probs_; }
  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return probs_[(i * width() + j) * classes() + c];
  }
  std::size_t argmax(std::size_t i, std::size_t j) const;

  // Largest |sum_c p - 1| over locations; also checks p >= 0 and finiteness.
  double max_normalization_error() const;
  // Throws std::invalid_argument if entries are negative or sums deviate by more than tol.
  void validate(double tol = 1e-5) const;

 private:
  Tensor probs_;
};

// Softmax over the trailing class axis of an (H, W, C) logit tensor.
SegmentationProbMap softmax_classes(const Tensor& logits);

}  // namespace mtvssl
