#include "mtvssl/prob_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtvssl {

SegmentationProbMap::SegmentationProbMap(Tensor probs) : probs_(std::move(probs)) {
  if (probs_.rank() != 3 || probs_.dim(2) < 1) {
    throw std::invalid_argument("SegmentationProbMap: expected (H, W, C), got " +
                                shape_to_string(probs_.shape()));
  }
}

SegmentationProbMap SegmentationProbMap::uniform(std::size_t h, std::size_t w, std::size_t classes) {
  return SegmentationProbMap(Tensor({h, w, classes}, 1.0 / double(classes)));
}

std::size_t SegmentationProbMap::argmax(std::size_t i, std::size_t j) const {
  const double* p = probs_.data() + (i * width() + j) * classes();
  return std::size_t(std::max_element(p, p + classes()) - p);
}

double SegmentationProbMap::max_normalization_error() const {
  double worst = 0.0;
  const std::size_t C = classes();
  for (std::size_t loc = 0; loc < locations(); ++loc) {
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double v = probs_[loc * C + c];
      if (!std::isfinite(v) || v < 0.0) return INFINITY;
      sum += v;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

void SegmentationProbMap::validate(double tol) const {
  const double err = max_normalization_error();
  if (!(err <= tol)) {
    throw std::invalid_argument("SegmentationProbMap: not normalized (max deviation " +
                                std::to_string(err) + ")");
  }
}

SegmentationProbMap softmax_classes(const Tensor& logits) {
  if (logits.rank() != 3) throw std::invalid_argument("softmax_classes: expected (H, W, C)");
  Tensor probs(logits.shape());
  const std::size_t C = logits.dim(2);
  const std::size_t L = logits.dim(0) * logits.dim(1);
  for (std::size_t loc = 0; loc < L; ++loc) {
    const double* z = logits.data() + loc * C;
    double* p = probs.data() + loc * C;
    const double m = *std::max_element(z, z + C);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += (p[c] = std::exp(z[c] - m));
    for (std::size_t c = 0; c < C; ++c) p[c] /= sum;
  }
  return SegmentationProbMap(std::move(probs));
}

}  // namespace mtvssl
