#include "mtvssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtvssl {

void LossConfig::validate() const {
  if (!(margin > 0.0 && margin <= 2.0)) throw std::invalid_argument("loss: margin must lie in (0, 2]");
  if (!(temperature > 0.0)) throw std::invalid_argument("loss: temperature must be > 0");
  if (lambda_kd < 0.0 || lambda_motion < 0.0 || lambda_appearance < 0.0) {
    throw std::invalid_argument("loss: weights must be >= 0");
  }
  if (lambda_kd + lambda_motion + lambda_appearance <= 0.0) {
    throw std::invalid_argument("loss: at least one weight must be positive");
  }
  if (queue_capacity == 0) throw std::invalid_argument("loss: queue_capacity must be positive");
}

namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

double similarity(std::span<const double> u, std::span<const double> v) {
  require_same_dim(u, v, "similarity");
  const double nu = std::max(l2_norm(u), kNormEpsilon);
  const double nv = std::max(l2_norm(v), kNormEpsilon);
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

SimilarityGrad similarity_with_grad(std::span<const double> u, std::span<const double> v) {
  require_same_dim(u, v, "similarity");
  const double raw_nu = l2_norm(u), raw_nv = l2_norm(v);
  const double nu = std::max(raw_nu, kNormEpsilon), nv = std::max(raw_nv, kNormEpsilon);
  const double uv = dot(u, v);
  SimilarityGrad g;
  g.value = uv / (nu * nv);
  g.d_u.resize(u.size());
  g.d_v.resize(v.size());
  // d/du (u.v / |u||v|) = v/(|u||v|) - (u.v) u / (|u|^3 |v|); the norm term is
  // absent where the epsilon guard is active.
  const double cu = raw_nu > kNormEpsilon ? uv / (nu * nu * nu * nv) : 0.0;
  const double cv = raw_nv > kNormEpsilon ? uv / (nu * nv * nv * nv) : 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    g.d_u[i] = v[i] / (nu * nv) - cu * u[i];
    g.d_v[i] = u[i] / (nu * nv) - cv * v[i];
  }
  return g;
}

namespace {

void check_kd_inputs(const SegmentationProbMap& teacher, const SegmentationProbMap& student) {
  if (teacher.probs().shape() != student.probs().shape()) {
    throw std::invalid_argument("kd_loss: shape mismatch " + shape_to_string(teacher.probs().shape()) +
                                " vs " + shape_to_string(student.probs().shape()));
  }
  if (!(teacher.max_normalization_error() <= 1e-4)) {
    throw std::invalid_argument("kd_loss: teacher map is not normalized");
  }
  if (!(student.max_normalization_error() <= 1e-4)) {
    throw std::invalid_argument("kd_loss: student map is not normalized");
  }
}

}  // namespace

double kd_loss(const SegmentationProbMap& teacher, const SegmentationProbMap& student) {
  return kd_loss_with_grad(teacher, student).loss;
}

KdLossResult kd_loss_with_grad(const SegmentationProbMap& teacher,
                               const SegmentationProbMap& student) {
  check_kd_inputs(teacher, student);
  const double n = double(teacher.locations());
  const auto& t = teacher.probs().values();
  const auto& s = student.probs().values();
  KdLossResult r;
  r.d_student = Tensor(student.probs().shape());
  double acc = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double guarded = std::max(s[k], kNormEpsilon);
    acc += t[k] * std::log(guarded);
    r.d_student[k] = s[k] > kNormEpsilon ? -t[k] / (n * s[k]) : 0.0;
  }
  r.loss = -acc / n;
  return r;
}

MotionLossResult motion_loss(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, double margin) {
  require_same_dim(anchor, positive, "motion_loss");
  require_same_dim(anchor, negative, "motion_loss");
  const SimilarityGrad pos = similarity_with_grad(anchor, positive);
  const SimilarityGrad neg = similarity_with_grad(anchor, negative);
  MotionLossResult r;
  r.d_positive = pos.value;
  r.d_negative = neg.value;
  const double slack = margin - (pos.value - neg.value);
  // std::max would turn a NaN slack into 0 and hide a diverged network.
  r.loss = std::isnan(slack) ? slack : std::max(0.0, slack);
  r.d_anchor.assign(anchor.size(), 0.0);
  r.d_pos.assign(anchor.size(), 0.0);
  r.d_neg.assign(anchor.size(), 0.0);
  if (slack > 0.0) {
    for (std::size_t i = 0; i < anchor.size(); ++i) {
      r.d_anchor[i] = neg.d_u[i] - pos.d_u[i];
      r.d_pos[i] = -pos.d_v[i];
      r.d_neg[i] = neg.d_v[i];
    }
  }
  return r;
}

double appearance_loss_from_similarities(double positive, std::span<const double> negatives,
                                         double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("appearance_loss: temperature must be > 0");
  if (negatives.empty()) throw std::invalid_argument("appearance_loss: no negatives");
  double m = positive;
  for (double d : negatives) m = std::max(m, d);
  double denom = std::exp((positive - m) / temperature);
  for (double d : negatives) denom += std::exp((d - m) / temperature);
  return -((positive - m) / temperature - std::log(denom));
}

AppearanceLossResult appearance_loss(std::span<const double> anchor,
                                     std::span<const double> positive,
                                     const std::vector<std::vector<double>>& negatives,
                                     double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("appearance_loss: temperature must be > 0");
  if (negatives.empty()) throw std::invalid_argument("appearance_loss: negative queue is empty");
  require_same_dim(anchor, positive, "appearance_loss");
  const std::size_t K = negatives.size();
  std::vector<SimilarityGrad> sims;
  sims.reserve(K + 1);
  sims.push_back(similarity_with_grad(anchor, positive));
  for (const auto& n : negatives) {
    require_same_dim(anchor, n, "appearance_loss");
    sims.push_back(similarity_with_grad(anchor, n));
  }
  double m = sims[0].value;
  for (const auto& s : sims) m = std::max(m, s.value);
  std::vector<double> w(K + 1);
  double denom = 0.0;
  for (std::size_t k = 0; k <= K; ++k) denom += (w[k] = std::exp((sims[k].value - m) / temperature));
  AppearanceLossResult r;
  r.loss = -((sims[0].value - m) / temperature - std::log(denom));
  // dL/dsim_k = (softmax_k - [k == 0]) / tau
  r.d_anchor.assign(anchor.size(), 0.0);
  r.d_pos.assign(anchor.size(), 0.0);
  r.d_negatives.assign(K, std::vector<double>(anchor.size(), 0.0));
  for (std::size_t k = 0; k <= K; ++k) {
    const double coef = (w[k] / denom - (k == 0 ? 1.0 : 0.0)) / temperature;
    std::vector<double>& other = k == 0 ? r.d_pos : r.d_negatives[k - 1];
    for (std::size_t i = 0; i < anchor.size(); ++i) {
      r.d_anchor[i] += coef * sims[k].d_u[i];
      other[i] = coef * sims[k].d_v[i];
    }
  }
  return r;
}

AppearanceLossResult appearance_loss(std::span<const double> anchor,
                                     std::span<const double> positive, const NegativeQueue& queue,
                                     double temperature) {
  if (queue.empty()) throw std::invalid_argument("appearance_loss: negative queue is empty");
  return appearance_loss(anchor, positive, queue.snapshot(), temperature);
}

double total_loss(double l_kd, double l_motion, double l_appearance, const LossConfig& weights) {
  return weights.lambda_kd * l_kd + weights.lambda_motion * l_motion +
         weights.lambda_appearance * l_appearance;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0 || dim == 0) throw std::invalid_argument("NegativeQueue: zero capacity or dim");
}

void NegativeQueue::push(std::span<const double> embedding) {
  if (embedding.size() != dim_) {
    throw std::invalid_argument("NegativeQueue::push: dimension " + std::to_string(embedding.size()) +
                                " != " + std::to_string(dim_));
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.emplace_back(embedding.begin(), embedding.end());
}

std::vector<std::vector<double>> NegativeQueue::snapshot() const {
  return {entries_.begin(), entries_.end()};
}

void NegativeQueue::restore(const std::vector<std::vector<double>>& entries) {
  if (entries.size() > capacity_) throw std::invalid_argument("NegativeQueue::restore: too many entries");
  entries_.clear();
  for (const auto& e : entries) push(e);
}

}  // namespace mtvssl
