#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "mtvssl/prob_map.hpp"

namespace mtvssl {

inline constexpr double kNormEpsilon = 1e-12;

struct LossConfig {
  double margin = 0.15;       // gamma of the motion ranking loss
  double temperature = 0.07;  // tau of the appearance InfoNCE loss
  double lambda_kd = 1.0;
  double lambda_motion = 1.0;
  double lambda_appearance = 1.0;
  std::size_t queue_capacity = 256;

  void validate() const;
};

// Cosine similarity, norms guarded by kNormEpsilon.
double similarity(std::span<const double> u, std::span<const double> v);

struct SimilarityGrad {
  double value = 0.0;
  std::vector<double> d_u;
  std::vector<double> d_v;
};
SimilarityGrad similarity_with_grad(std::span<const double> u, std::span<const double> v);

// -(1/N) sum_{i,j} sum_c teacher log student, N = H*W, log guarded by kNormEpsilon.
double kd_loss(const SegmentationProbMap& teacher, const SegmentationProbMap& student);

struct KdLossResult {
  double loss = 0.0;
  Tensor d_student;  // d loss / d student probabilities, (H, W, C)
};
KdLossResult kd_loss_with_grad(const SegmentationProbMap& teacher,
                               const SegmentationProbMap& student);

struct MotionLossResult {
  double loss = 0.0;
  double d_positive = 0.0;  // similarity(anchor, positive)
  double d_negative = 0.0;
  std::vector<double> d_anchor, d_pos, d_neg;
};
// max(0, margin - (d+ - d-)).
MotionLossResult motion_loss(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, double margin);

class NegativeQueue;

struct AppearanceLossResult {
  double loss = 0.0;
  std::vector<double> d_anchor, d_pos;
  std::vector<std::vector<double>> d_negatives;
};
// -log(e^{d+/tau} / (e^{d+/tau} + sum_n e^{d_n/tau})), stabilised by max subtraction.
AppearanceLossResult appearance_loss(std::span<const double> anchor,
                                     std::span<const double> positive,
                                     const std::vector<std::vector<double>>& negatives,
                                     double temperature);
AppearanceLossResult appearance_loss(std::span<const double> anchor,
                                     std::span<const double> positive, const NegativeQueue& queue,
                                     double temperature);
// Same quantity from precomputed similarities; exposed for the stability tests.
double appearance_loss_from_similarities(double positive, std::span<const double> negatives,
                                         double temperature);

double total_loss(double l_kd, double l_motion, double l_appearance, const LossConfig& weights);

// FIFO of the most recent `capacity` key embeddings.
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, std::size_t dim);

  // Oldest entry is evicted once full. Throws on dimension mismatch.
  void push(std::span<const double> embedding);
  // Oldest first, i.e. eviction order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& entries);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<std::vector<double>> entries_;
};

}  // namespace mtvssl
