// Acceptance suite: one PASS/FAIL line per criterion. Criterion 7 is soft and
// never affects the exit code. Training-heavy criteria (6-8) share their runs.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtvssl/cam.hpp"
#include "mtvssl/dataset.hpp"
#include "mtvssl/losses.hpp"
#include "mtvssl/probe.hpp"
#include "mtvssl/report.hpp"
#include "mtvssl/rng.hpp"
#include "mtvssl/synthetic.hpp"
#include "mtvssl/trainer.hpp"

using namespace mtvssl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed check; the first few reasons are kept for the report line.
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail << "failed: ";
    else detail << "; ";
    detail << what;
    pass = false;
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::vector<double> random_vec(Rng& r, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = r.normal();
  return v;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ||a - n|| / max(||a||, ||n||), zero when both vanish.
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  std::vector<double> d(analytic.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = analytic[i] - numeric[i];
  const double scale = std::max(norm(analytic), norm(numeric));
  return scale < 1e-12 ? norm(d) : norm(d) / scale;
}

double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2 * h);
}

// ---------------------------------------------------------------- criterion 1

Outcome loss_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  auto near = [&](double got, double want, double tol, const std::string& what) {
    o.require(std::abs(got - want) <= tol, what + " = " + fmt(got, 10) + ", want " + fmt(want, 10));
  };
  auto map1 = [](std::vector<double> p) {
    const std::size_t c = p.size();
    return SegmentationProbMap(Tensor({1, 1, c}, std::move(p)));
  };
  int checked = 0;

  const std::vector<double> e1{1, 0}, e2{0, 1}, diag{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}, u{0.3, -1.2};
  near(similarity(u, u), 1.0, 1e-6, "similarity(u, u)");
  near(similarity(e1, e2), 0.0, 1e-6, "similarity(orthogonal)");
  near(similarity(e1, diag), 1.0 / std::sqrt(2.0), 1e-6, "similarity((1,0),(1,1)/sqrt2)");
  checked += 3;

  near(kd_loss(map1({0.5, 0.5}), map1({0.5, 0.5})), std::log(2.0), 1e-6, "kd(uniform, uniform)");
  near(kd_loss(map1({1.0, 0.0}), map1({0.5, 0.5})), -std::log(0.5), 1e-6, "kd((1,0),(.5,.5))");
  near(kd_loss(map1({0.7, 0.3}), map1({0.6, 0.4})), -(0.7 * std::log(0.6) + 0.3 * std::log(0.4)), 1e-6,
       "kd((.7,.3),(.6,.4))");
  near(kd_loss(map1({0.7, 0.3}), map1({0.6, 0.4})), 0.632465, 1e-6, "kd((.7,.3),(.6,.4)) vs 0.632465");
  checked += 4;

  // Unit vectors with prescribed cosines to the anchor (1, 0, 0).
  auto at_cos = [](double c, int axis) {
    std::vector<double> v{c, 0, 0};
    v[std::size_t(axis)] = std::sqrt(1 - c * c);
    return v;
  };
  const std::vector<double> anchor{1, 0, 0};
  near(motion_loss(anchor, at_cos(0.9, 1), at_cos(0.2, 2), 0.5).loss, 0.0, 1e-6, "motion(0.9, 0.2)");
  near(motion_loss(anchor, at_cos(0.3, 1), at_cos(0.3, 2), 0.5).loss, 0.5, 1e-6, "motion(d+ = d-)");
  near(motion_loss(anchor, at_cos(0.4, 1), at_cos(0.3, 2), 0.5).loss, 0.4, 1e-6, "motion(0.4, 0.3)");
  checked += 3;

  NegativeQueue three(3, 3);
  for (int i = 0; i < 3; ++i) three.push(anchor);
  near(appearance_loss(anchor, anchor, three, 0.07).loss, std::log(4.0), 1e-9, "appearance(uniform, K=3)");
  const std::vector<std::vector<double>> one_neg{at_cos(0.0, 1)};
  near(appearance_loss(anchor, anchor, one_neg, 1.0).loss, std::log1p(std::exp(-1.0)), 1e-6,
       "appearance(d+=1, d-=0, tau=1)");
  Rng r(11);
  bool positive = true;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<double>> negs;
    for (int k = 0; k < 1 + i % 7; ++k) negs.push_back(random_vec(r, 8));
    positive = positive && appearance_loss(random_vec(r, 8), random_vec(r, 8), negs, 0.5).loss > 0.0;
  }
  o.require(positive, "appearance loss not strictly positive");
  checked += 3;

  LossConfig w;
  near(total_loss(0.1, 0.2, 0.3, w), 0.6, 1e-6, "total(1,1,1)");
  w.lambda_kd = 2;
  w.lambda_motion = w.lambda_appearance = 0;
  near(total_loss(0.5, 7.0, 9.0, w), 1.0, 1e-6, "total(2,0,0)");
  checked += 2;

  NegativeQueue two(2, 1);
  for (double v : {1.0, 2.0, 3.0}) two.push(std::vector<double>{v});
  o.require(two.snapshot() == std::vector<std::vector<double>>{{2.0}, {3.0}}, "queue K=2 push a,b,c");
  Param shadow({1}), student({1});
  shadow.value[0] = 1.0;
  momentum_update({{"p", &student}}, {{"p", &shadow}}, 0.999);
  near(shadow.value[0], 0.999, 1e-12, "momentum(1, 0, 0.999)");
  checked += 2;

  const double secs = seconds_since(t0);
  o.require(secs < 1.0, "runtime " + fmt(secs) + " s");
  if (o.pass) o.detail << checked << " tagged examples within tolerance (" << fmt(secs, 2) << " s)";
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  Rng r(2024);
  double worst_kd = 0, worst_m = 0, worst_a = 0, worst_model = 0;

  for (int inst = 0; inst < kInstances; ++inst) {
    // KD through the student softmax.
    Tensor tl({2, 3, 4}), sl({2, 3, 4});
    for (double& x : tl.values()) x = 2 * r.normal();
    for (double& x : sl.values()) x = 2 * r.normal();
    const auto teacher = softmax_classes(tl);
    const auto student = softmax_classes(sl);
    const Tensor d_logits =
        softmax_classes_backward(student.probs(), kd_loss_with_grad(teacher, student).d_student);
    std::vector<double> num(sl.size());
    for (std::size_t i = 0; i < sl.size(); ++i) {
      num[i] = central_difference([&] { return kd_loss(teacher, softmax_classes(sl)); }, sl.values()[i]);
    }
    worst_kd = std::max(worst_kd, relative_error(d_logits.values(), num));

    // Motion: a wide margin keeps the hinge active.
    auto a = random_vec(r, 16), p = random_vec(r, 16), n = random_vec(r, 16);
    const double margin = 1.5 + r.uniform();
    const auto m = motion_loss(a, p, n, margin);
    std::vector<double> ana, fd;
    auto motion = [&] { return motion_loss(a, p, n, margin).loss; };
    for (std::size_t i = 0; i < 16; ++i) {
      ana.insert(ana.end(), {m.d_anchor[i], m.d_pos[i], m.d_neg[i]});
      fd.push_back(central_difference(motion, a[i]));
      fd.push_back(central_difference(motion, p[i]));
      fd.push_back(central_difference(motion, n[i]));
    }
    worst_m = std::max(worst_m, relative_error(ana, fd));

    // Appearance with 8 negatives.
    std::vector<std::vector<double>> negs;
    for (int k = 0; k < 8; ++k) negs.push_back(random_vec(r, 16));
    const double tau = 0.1 + 0.5 * r.uniform();
    const auto ap = appearance_loss(a, p, negs, tau);
    ana.clear();
    fd.clear();
    auto appearance = [&] { return appearance_loss(a, p, negs, tau).loss; };
    for (std::size_t i = 0; i < 16; ++i) {
      ana.push_back(ap.d_anchor[i]);
      fd.push_back(central_difference(appearance, a[i]));
      ana.push_back(ap.d_pos[i]);
      fd.push_back(central_difference(appearance, p[i]));
      for (std::size_t k = 0; k < negs.size(); ++k) {
        ana.push_back(ap.d_negatives[k][i]);
        fd.push_back(central_difference(appearance, negs[k][i]));
      }
    }
    worst_a = std::max(worst_a, relative_error(ana, fd));
  }

  // Full forward pass: T=4, 16x16 frames, D=16, C=4, all three losses.
  Config cfg = resolve_config(json::object(), {"data.height=16", "data.width=16", "augment.crop_height=16",
                                               "augment.crop_width=16", "model.clip_length=4",
                                               "model.embedding_dim=16", "model.projection_dim=16",
                                               "data.frame_count=16"});
  const auto videos = generate_synthetic_corpus(cfg.data.scene, 1, 5, "grad");
  const auto teacher = make_teacher(cfg.teacher);
  for (int inst = 0; inst < kInstances; ++inst) {
    Model model(cfg.model, Variant::full, 100 + std::uint64_t(inst));
    const MomentumEncoder key(model);
    const auto batch =
        prepare_batch(videos, {std::size_t(inst) % videos.size()}, cfg.sampling(), teacher.get(), 77, inst);
    std::vector<std::vector<double>> negs;
    for (int k = 0; k < 8; ++k) negs.push_back(random_vec(r, 16));
    LossConfig lc;
    lc.margin = 1.5;  // keeps the hinge active so every branch carries gradient
    auto total = [&] {
      Model copy = model;
      const auto l = accumulate_sample_gradients(copy, key, negs, batch[0], lc, true, 1.0);
      return l.l_kd + l.l_m + l.l_a;
    };
    model.zero_grad();
    accumulate_sample_gradients(model, key, negs, batch[0], lc, true, 1.0);
    std::vector<double> ana, fd;
    for (auto& param : model.parameters()) {
      auto& values = param.param->value.values();
      for (int k = 0; k < 2; ++k) {
        const std::size_t i = std::size_t(r.uniform_int(0, std::int64_t(values.size()) - 1));
        ana.push_back(param.param->grad[i]);
        fd.push_back(central_difference(total, values[i]));
      }
    }
    worst_model = std::max(worst_model, relative_error(ana, fd));
  }

  const double worst = std::max({worst_kd, worst_m, worst_a, worst_model});
  o.require(worst < 1e-3, "max relative error " + fmt(worst));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  o.detail << (o.pass ? "" : " | ") << kInstances << " instances each; max relative error kd " << fmt(worst_kd, 2)
           << ", motion " << fmt(worst_m, 2) << ", appearance " << fmt(worst_a, 2) << ", full model "
           << fmt(worst_model, 2) << " (" << fmt(secs, 3) << " s)";
  return o;
}

// ---------------------------------------------------------------- criterion 3

double group_grad_norm(Model& m, const std::string& group) {
  double s = 0;
  for (auto& p : m.parameters_in(group)) {
    for (double g : p.param->grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

Outcome isolation() {
  Outcome o;
  const auto t0 = Clock::now();
  const Config cfg = resolve_config(json::object());
  const auto videos = generate_synthetic_corpus(cfg.data.scene, 1, 3, "iso");
  const auto teacher = make_teacher(cfg.teacher);
  LossConfig kd_only, contrastive_only;
  kd_only.lambda_motion = kd_only.lambda_appearance = 0;
  contrastive_only.lambda_kd = 0;
  contrastive_only.margin = 1.5;  // active hinge

  Rng r(5);
  double min_low_kd = INFINITY, min_low_con = INFINITY, min_ti_kd = INFINITY, min_ti_con = INFINITY;
  double leak = 0;
  for (std::size_t b = 0; b < 10; ++b) {
    const auto batch = prepare_batch(videos, batch_indices(b, videos.size(), 4, 0), cfg.sampling(),
                                     teacher.get(), 99, b);
    std::vector<std::vector<double>> negs;
    for (int k = 0; k < 16; ++k) negs.push_back(random_vec(r, cfg.model.projection_dim));

    Model full(cfg.model, Variant::full, b);
    const MomentumEncoder key(full);
    full.zero_grad();
    for (const auto& s : batch) accumulate_sample_gradients(full, key, negs, s, kd_only, true, 0.25);
    for (const char* g : {"contrastive_encoder", "motion_head", "appearance_head"}) {
      leak = std::max(leak, group_grad_norm(full, g));
    }
    min_low_kd = std::min(min_low_kd, group_grad_norm(full, "low"));

    full.zero_grad();
    for (const auto& s : batch) accumulate_sample_gradients(full, key, negs, s, contrastive_only, true, 0.25);
    for (const char* g : {"prior_encoder", "decoder"}) leak = std::max(leak, group_grad_norm(full, g));
    min_low_con = std::min(min_low_con, group_grad_norm(full, "low"));

    Model ti(cfg.model, Variant::task_independent, b);
    const MomentumEncoder ti_key(ti);
    ti.zero_grad();
    for (const auto& s : batch) accumulate_sample_gradients(ti, ti_key, negs, s, kd_only, true, 0.25);
    min_ti_kd = std::min(min_ti_kd, group_grad_norm(ti, "shared_encoder"));
    ti.zero_grad();
    for (const auto& s : batch) accumulate_sample_gradients(ti, ti_key, negs, s, contrastive_only, true, 0.25);
    min_ti_con = std::min(min_ti_con, group_grad_norm(ti, "shared_encoder"));
  }
  o.require(leak == 0.0, "cross-branch gradient norm " + fmt(leak));
  o.require(min_low_kd > 0 && min_low_con > 0, "f_l starved by a loss group");
  o.require(min_ti_kd > 0 && min_ti_con > 0, "TI shared encoder starved by a loss group");
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  o.detail << (o.pass ? "" : " | ") << "10 batches: cross-branch grad exactly " << leak << "; min |grad f_l| KD "
           << fmt(min_low_kd) << ", contrastive " << fmt(min_low_con) << "; TI shared KD " << fmt(min_ti_kd)
           << ", contrastive " << fmt(min_ti_con) << " (" << fmt(secs, 2) << " s)";
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome gibbs() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng r(4);
  // Pairs whose maps differ by more than 1e-9 somewhere must score strictly
  // higher than the self term; pairs within 1e-9 must tie to that tolerance.
  double min_gap = INFINITY, worst_tie = 0, worst_entropy = 0;
  std::size_t distinct = 0, coincident = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t h = 1 + std::size_t(r.uniform_int(0, 3)), w = 1 + std::size_t(r.uniform_int(0, 3));
    const std::size_t c = 2 + std::size_t(r.uniform_int(0, 4));
    const double spread = 0.1 + 5 * r.uniform();
    Tensor a({h, w, c}), b({h, w, c});
    for (double& x : a.values()) x = spread * r.normal();
    for (double& x : b.values()) x = spread * r.normal();
    if (i % 4 == 0) {
      // Near-coincident pairs probe the equality boundary from both sides.
      const double eps = i % 8 == 0 ? 1e-3 : 1e-12;
      b = a;
      for (double& x : b.values()) x += eps * r.normal();
    }
    const auto t = softmax_classes(a), s = softmax_classes(b);
    const double self = kd_loss(t, t);
    const double gap = kd_loss(t, s) - self;
    double diff = 0;
    for (std::size_t k = 0; k < t.probs().size(); ++k) {
      diff = std::max(diff, std::abs(t.probs()[k] - s.probs()[k]));
    }
    if (diff > 1e-9) {
      ++distinct;
      min_gap = std::min(min_gap, gap);
    } else {
      ++coincident;
      worst_tie = std::max(worst_tie, std::abs(gap));
    }
    double entropy = 0;
    for (double p : t.probs().values()) entropy -= p > 0 ? p * std::log(p) : 0.0;
    worst_entropy = std::max(worst_entropy, std::abs(self - entropy / double(h * w)));
  }
  o.require(min_gap > 0.0, "distinct maps with gap " + fmt(min_gap));
  o.require(coincident > 0 && worst_tie <= 1e-9, "coincident maps differ by " + fmt(worst_tie));
  o.require(worst_entropy <= 1e-9, "kd(F, F) differs from mean entropy by " + fmt(worst_entropy));
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "runtime " + fmt(secs) + " s");
  o.detail << (o.pass ? "" : " | ") << "1000 pairs: " << distinct << " distinct, min kd(t,s) - kd(t,t) = "
           << fmt(min_gap, 3) << "; " << coincident << " coincident within 1e-9, max |gap| " << fmt(worst_tie, 2) << "; |kd(F,F) - entropy| " << fmt(worst_entropy, 2) << " ("
           << fmt(secs, 2) << " s)";
  return o;
}

// ---------------------------------------------------------------- criterion 5

Outcome queue_momentum() {
  Outcome o;
  const auto t0 = Clock::now();
  constexpr std::size_t K = 16;
  NegativeQueue q(K, 4);
  Rng r(5);
  std::vector<std::vector<double>> pushed;
  bool fifo = true;
  for (std::size_t i = 0; i < 10 * K; ++i) {
    auto v = random_vec(r, 4);
    const double n = norm(v);
    for (double& x : v) x /= n;
    q.push(v);
    pushed.push_back(v);
    const std::size_t keep = std::min(K, pushed.size());
    const std::vector<std::vector<double>> expect(pushed.end() - std::ptrdiff_t(keep), pushed.end());
    fifo = fifo && q.size() <= K && q.snapshot() == expect;
  }
  o.require(fifo, "queue is not FIFO at capacity");

  Param shadow({50}), student({50});
  for (double& x : shadow.value.values()) x = r.normal();
  for (double& x : student.value.values()) x = r.normal();
  const Tensor s0 = shadow.value;
  const double m = 0.97;
  double worst = 0;
  for (int t = 1; t <= 100; ++t) {
    momentum_update({{"p", &student}}, {{"p", &shadow}}, m);
    const double mt = std::pow(m, t);
    for (std::size_t i = 0; i < 50; ++i) {
      worst = std::max(worst, std::abs(shadow.value[i] - (mt * s0[i] + (1 - mt) * student.value[i])));
    }
  }
  o.require(worst <= 1e-10, "closed-form deviation " + fmt(worst));

  const Tensor before = shadow.value;
  momentum_update({{"p", &student}}, {{"p", &shadow}}, 1.0);
  o.require(shadow.value.values() == before.values(), "m=1 moved the shadow");
  momentum_update({{"p", &student}}, {{"p", &shadow}}, 0.0);
  o.require(shadow.value.values() == student.value.values(), "m=0 did not copy the student");
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, "runtime " + fmt(secs) + " s");
  o.detail << (o.pass ? "" : " | ") << "FIFO over " << 10 * K << " pushes at K=" << K
           << "; 100-step recurrence max deviation " << fmt(worst, 2) << "; m=1 freezes, m=0 copies ("
           << fmt(secs, 2) << " s)";
  return o;
}

// ------------------------------------------------------------ criteria 6 - 8

struct SeedRun {
  std::uint64_t seed = 0;
  double train_seconds = 0;
  double full_acc1 = 0, random_acc1 = 0, nokd_acc1 = 0;
  double full_acc5 = 0, nokd_acc5 = 0;
  double loss_start = 0, loss_end = 0;  // epoch means, see loss_window
  std::size_t cam_clips = 0, cam_focused = 0;
  double cam_min = INFINITY, cam_max = -INFINITY;
};

// Mean total loss over the first epoch in which every term is active, and over
// the last epoch. The appearance term only switches on once the queue holds
// enough keys, so the raw first steps are not comparable.
std::pair<double, double> loss_window(const std::vector<StepMetrics>& metrics, std::size_t per_epoch) {
  std::size_t first = 0;
  while (first < metrics.size() && metrics[first].l_a == 0.0) ++first;
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += metrics[i].total;
    return s / double(to - from);
  };
  const std::size_t n = metrics.size();
  return {mean(first, std::min(n, first + per_epoch)), mean(n - std::min(n, per_epoch), n)};
}

SeedRun run_seed(std::uint64_t seed, const fs::path& work, bool with_nokd) {
  SeedRun out;
  out.seed = seed;
  const Config cfg = resolve_config(json::object(), {"seed=" + std::to_string(seed)});
  const DatasetSplits data = load_datasets(cfg);
  const std::size_t classes = count_classes(data.train);
  const auto teacher = make_teacher(cfg.teacher);

  const auto t0 = Clock::now();
  const auto trained = pretrain(cfg, data.train, teacher.get(), work / ("seed_" + std::to_string(seed)) / "full");
  out.train_seconds = seconds_since(t0);
  const auto [start, end] =
      loss_window(trained.metrics, steps_per_epoch(data.train.size(), cfg.trainer.batch_size));
  out.loss_start = start;
  out.loss_end = end;

  const Model full = model_from_checkpoint(read_checkpoint(trained.final_checkpoint));
  const Model random = initial_model(cfg, data.train);
  const auto pf = evaluate_model(full, data.train, data.test, classes, cfg.eval, seed);
  const auto pr = evaluate_model(random, data.train, data.test, classes, cfg.eval, seed);
  out.full_acc1 = pf.acc_at_1;
  out.full_acc5 = pf.acc_at_5;
  out.random_acc1 = pr.acc_at_1;

  const auto cam_probe = train_cam_probe(full, data.train, cfg.eval, classes);
  const auto focus = measure_cam_focus(full, cam_probe, data.test, cfg.eval);
  out.cam_clips = focus.clips;
  out.cam_focused = focus.focused;
  for (const auto& v : data.test) {
    const auto clip = evaluation_clips(v, cfg.eval.eval_speed, cfg.model.clip_length, 1, cfg.model.input_height,
                                       cfg.model.input_width)
                          .front();
    const auto cam = cam_heatmap(full, cam_probe, clip, std::size_t(v.action_label));
    for (double h : cam.heat.values()) {
      out.cam_min = std::min(out.cam_min, h);
      out.cam_max = std::max(out.cam_max, h);
    }
  }

  if (with_nokd) {
    const Config nokd = resolve_config(json::object(), {"seed=" + std::to_string(seed), "trainer.variant=no_kd"});
    const auto r = pretrain(nokd, data.train, nullptr, work / ("seed_" + std::to_string(seed)) / "no_kd");
    const Model m = model_from_checkpoint(read_checkpoint(r.final_checkpoint));
    const auto p = evaluate_model(m, data.train, data.test, classes, nokd.eval, seed);
    out.nokd_acc1 = p.acc_at_1;
    out.nokd_acc5 = p.acc_at_5;
  }
  std::cerr << "[acceptance] seed " << seed << ": train " << fmt(out.train_seconds) << " s, acc@1 full "
            << out.full_acc1 << " random " << out.random_acc1 << (with_nokd ? " no_kd " + fmt(out.nokd_acc1) : "")
            << ", loss " << fmt(start) << " -> " << fmt(end) << ", CAM " << focus.focused << "/" << focus.clips
            << "\n";
  return out;
}

Outcome toy_end_to_end(const std::vector<SeedRun>& runs) {
  Outcome o;
  double gap = 0, longest = 0;
  std::size_t decreased = 0;
  for (const auto& r : runs) {
    gap += r.full_acc1 - r.random_acc1;
    longest = std::max(longest, r.train_seconds);
    decreased += r.loss_end < r.loss_start;
  }
  gap /= double(runs.size());
  o.require(100 * gap >= 15.0, "mean Acc@1 gain " + fmt(100 * gap, 3) + " pp < 15 pp");
  o.require(longest <= 900.0, "pre-training took " + fmt(longest) + " s > 15 min");
  o.require(2 * decreased > runs.size(), "total loss decreased on only " + std::to_string(decreased) + " seeds");
  o.detail << (o.pass ? "" : " | ") << "Acc@1 pre-trained vs random init:";
  for (const auto& r : runs) {
    o.detail << " seed " << r.seed << " " << fmt(100 * r.full_acc1, 3) << "% vs " << fmt(100 * r.random_acc1, 3)
             << "%;";
  }
  o.detail << " mean gain " << fmt(100 * gap, 3) << " pp; slowest pre-training " << fmt(longest) << " s on "
           << std::max(1u, std::thread::hardware_concurrency()) << " core(s); loss fell on " << decreased << "/"
           << runs.size() << " seeds";
  return o;
}

Outcome ablation_direction(const std::vector<SeedRun>& runs, std::string& table) {
  Outcome o;
  std::vector<ReportRow> rows;
  double full = 0, nokd = 0;
  for (const auto& r : runs) {
    rows.push_back({"full", r.seed, r.full_acc1, r.full_acc5});
    full += r.full_acc1;
  }
  for (const auto& r : runs) {
    rows.push_back({"no_kd", r.seed, r.nokd_acc1, r.nokd_acc5});
    nokd += r.nokd_acc1;
  }
  full /= double(runs.size());
  nokd /= double(runs.size());
  o.require(full >= nokd, "full below w/o KD");
  const auto ref_full = *reference_accuracy("full"), ref_nokd = *reference_accuracy("no_kd");
  o.detail << (o.pass ? "" : " | ") << "mean Acc@1 full " << fmt(100 * full, 3) << "% vs w/o KD "
           << fmt(100 * nokd, 3) << "% (reference " << fmt(100 * ref_full.acc1, 3) << "% vs "
           << fmt(100 * ref_nokd.acc1, 3) << "%)";
  table = format_report_table(rows);
  return o;
}

Outcome cam_focus(const std::vector<SeedRun>& runs) {
  Outcome o;
  std::size_t clips = 0, focused = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : runs) {
    clips += r.cam_clips;
    focused += r.cam_focused;
    lo = std::min(lo, r.cam_min);
    hi = std::max(hi, r.cam_max);
  }
  const double fraction = clips ? double(focused) / double(clips) : 0.0;
  o.require(fraction >= 0.6, "actor focus on " + fmt(100 * fraction, 3) + "% of clips");
  o.require(lo >= 0.0 && hi <= 1.0, "CAM values outside [0, 1]");

  // Scale invariance: power-of-two factors are exact in floating point, so the
  // maps must agree bit for bit; other factors to rounding.
  Rng r(8);
  Tensor f({16, 4, 8, 8});
  for (double& x : f.values()) x = std::max(0.0, r.normal());
  bool exact = true;
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const auto w = random_vec(r, 16);
    const Tensor base = cam_from_features(f, w, 32, 32);
    for (double k : {2.0, 0.5, 1024.0}) {
      std::vector<double> wk = w;
      for (double& x : wk) x *= k;
      exact = exact && cam_from_features(f, wk, 32, 32).values() == base.values();
    }
    std::vector<double> w3 = w;
    const double k = 0.1 + 10 * r.uniform();
    for (double& x : w3) x *= k;
    const Tensor scaled = cam_from_features(f, w3, 32, 32);
    for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, std::abs(scaled[i] - base[i]));
  }
  o.require(exact, "power-of-two rescaling changed the CAM");
  o.require(worst <= 1e-12, "rescaling changed the CAM by " + fmt(worst));
  o.detail << (o.pass ? "" : " | ") << "actor heat > background heat on " << focused << "/" << clips
           << " test clips (" << fmt(100 * fraction, 3) << "%); values in [" << fmt(lo) << ", " << fmt(hi)
           << "]; scale invariance exact for powers of two, max deviation " << fmt(worst, 2) << " otherwise";
  return o;
}

// ---------------------------------------------------------------- criterion 9

Outcome determinism_resume(const fs::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  const Config cfg = resolve_config(json::object(), {"data.train_videos_per_action=2", "trainer.epochs=3",
                                                     "trainer.lr_milestones=[2]", "trainer.snapshot_interval=2"});
  const auto data = load_datasets(cfg);
  const auto teacher = make_teacher(cfg.teacher);
  const auto a = pretrain(cfg, data.train, teacher.get(), work / "det_a");
  const auto b = pretrain(cfg, data.train, teacher.get(), work / "det_b");
  auto same = [](const std::vector<StepMetrics>& x, const std::vector<StepMetrics>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].step != y[i].step || x[i].l_kd != y[i].l_kd || x[i].l_m != y[i].l_m || x[i].l_a != y[i].l_a ||
          x[i].total != y[i].total || x[i].lr != y[i].lr) {
        return false;
      }
    }
    return true;
  };
  o.require(same(read_metrics_log(a.metrics_log), read_metrics_log(b.metrics_log)),
            "identical seeds gave different metrics logs");

  const fs::path dir = work / "resume";
  const auto first = pretrain(cfg, data.train, teacher.get(), dir, 3);
  Config again = cfg;
  again.trainer.resume_from = first.final_checkpoint;
  const auto second = pretrain(again, data.train, teacher.get(), dir);
  const auto log = read_metrics_log(second.metrics_log);
  bool gapless = log.size() == a.metrics.size();
  for (std::size_t i = 0; gapless && i < log.size(); ++i) gapless = log[i].step == i + 1;
  o.require(gapless, "resumed log has step gaps");
  double worst = 0;
  for (std::size_t i = 0; i < second.metrics.size(); ++i) {
    worst = std::max(worst, std::abs(second.metrics[i].total - a.metrics[3 + i].total));
  }
  o.require(!second.metrics.empty() && worst <= 1e-9, "resumed loss deviates by " + fmt(worst));
  o.detail << (o.pass ? "" : " | ") << a.metrics.size() << "-step runs identical; resumed at step "
           << load_state(first.final_checkpoint).step << ", next-step loss " << fmt(second.metrics.front().total, 12)
           << " vs " << fmt(a.metrics[3].total, 12) << ", max deviation " << worst << " (" << fmt(seconds_since(t0), 3)
           << " s)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "mtvssl_acceptance";
  std::vector<int> only;
  std::size_t seeds = 3;
  app.add_option("--work", work, "Scratch directory for training runs");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--seeds", seeds, "Seeds for the toy end-to-end criteria")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  fs::remove_all(work);
  fs::create_directories(work);

  const std::set<int> soft{7};
  bool all_hard_pass = true;
  json results = json::object();
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    const bool is_soft = soft.count(id) > 0;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << (is_soft ? " (soft)" : "") << ": "
              << o.detail.str() << std::endl;
    if (!is_soft) all_hard_pass = all_hard_pass && o.pass;
    results[std::to_string(id)] = {{"name", name}, {"pass", o.pass}, {"soft", is_soft}, {"detail", o.detail.str()}};
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    try {
      report(id, name, f());
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      report(id, name, o);
    }
  };

  guarded(1, "loss oracles", loss_oracles);
  guarded(2, "gradient checks", gradient_checks);
  guarded(3, "task-dependence isolation", isolation);
  guarded(4, "Gibbs property", gibbs);
  guarded(5, "queue and momentum mechanics", queue_momentum);

  if (wanted(6) || wanted(7) || wanted(8)) {
    std::vector<SeedRun> runs;
    std::string training_error;
    try {
      for (std::uint64_t s = 0; s < seeds; ++s) runs.push_back(run_seed(s, work, wanted(7)));
    } catch (const std::exception& e) {
      training_error = e.what();
    }
    auto from_runs = [&](const std::function<Outcome()>& f) {
      return [&, f] {
        if (!training_error.empty()) throw std::runtime_error("toy training failed: " + training_error);
        return f();
      };
    };
    std::string table;
    guarded(6, "toy end-to-end", from_runs([&] { return toy_end_to_end(runs); }));
    guarded(7, "ablation direction", from_runs([&] { return ablation_direction(runs, table); }));
    if (!table.empty()) std::cout << table;
    guarded(8, "CAM focus", from_runs([&] { return cam_focus(runs); }));
  }

  guarded(9, "determinism and resume", [&] { return determinism_resume(work); });

  std::ofstream(work / "acceptance.json") << results.dump(2) << "\n";
  return all_hard_pass ? 0 : 1;
}
