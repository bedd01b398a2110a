#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mtvssl/model.hpp"
#include "mtvssl/rng.hpp"

using namespace mtvssl;

namespace {

Tensor random_clip(Rng& r, const ModelConfig& c) {
  Tensor t({c.clip_length, c.input_height, c.input_width, 3});
  for (double& x : t.values()) x = r.uniform();
  return t;
}

ModelConfig tiny() {
  ModelConfig c;
  c.clip_length = 4;
  c.input_height = c.input_width = 8;
  c.conv_channels = {2, 3};
  c.split_depth = 1;
  c.hidden_dim = 5;
  c.embedding_dim = 4;
  c.projection_dim = 3;
  c.decoder_channels = 2;
  c.decoder_grid = 2;
  c.parsing_classes = 3;
  return c;
}

// Sum of |grad| per parameter group.
std::map<std::string, double> grad_mass(Model& m) {
  std::map<std::string, double> out;
  for (auto& p : m.parameters()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    for (double g : p.param->grad.values()) out[group] += std::abs(g);
  }
  return out;
}

}  // namespace

TEST(Model, ParameterCountsPerVariant) {
  // Default config, counted by hand:
  //   low: 3->8 and 8->16 3x3x3 convs                  656 + 3472 = 4128
  //   high: 16->64->32 perceptron                      1088 + 2080 = 3168
  //   decoder: 32->8*4*4 linear, 8->4 2x2 transposed   4224 + 132  = 4356
  //   projection head: 32->32->16                      1056 + 528  = 1584
  const ModelConfig c;
  EXPECT_EQ(Model(c, Variant::full, 0).parameter_count(), 4128u + 2 * 3168u + 4356u + 2 * 1584u);
  EXPECT_EQ(Model(c, Variant::no_kd, 0).parameter_count(), 4128u + 3168u + 2 * 1584u);
  EXPECT_EQ(Model(c, Variant::task_independent, 0).parameter_count(), 4128u + 3168u + 4356u + 2 * 1584u);
}

TEST(Model, GroupsPerVariant) {
  const ModelConfig c = tiny();
  EXPECT_EQ(Model(c, Variant::full, 0).groups(),
            (std::vector<std::string>{"low", "prior_encoder", "contrastive_encoder", "decoder", "motion_head",
                                      "appearance_head"}));
  EXPECT_EQ(Model(c, Variant::no_kd, 0).groups(),
            (std::vector<std::string>{"low", "contrastive_encoder", "motion_head", "appearance_head"}));
  EXPECT_EQ(Model(c, Variant::task_independent, 0).groups(),
            (std::vector<std::string>{"low", "shared_encoder", "decoder", "motion_head", "appearance_head"}));
  EXPECT_EQ(Model(c, Variant::no_kd, 0).representation_dim(), 4u);
  EXPECT_EQ(Model(c, Variant::full, 0).representation_dim(), 8u);
}

TEST(Model, SeededInitIsDeterministic) {
  const ModelConfig c = tiny();
  const Model a(c, Variant::full, 3), b(c, Variant::full, 3), d(c, Variant::full, 4);
  const auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].param->value.values(), pb[i].param->value.values()) << pa[i].name;
    any_diff |= pa[i].param->value.values() != pd[i].param->value.values();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, OutputsHaveExpectedForm) {
  const ModelConfig c = tiny();
  Rng r(1);
  const Model m(c, Variant::full, 1);
  const auto f = m.forward(random_clip(r, c));
  EXPECT_EQ(f.z_h.size(), 4u);
  EXPECT_EQ(f.z_c.size(), 4u);
  EXPECT_EQ(f.parsing.height(), 4u);
  EXPECT_EQ(f.parsing.classes(), 3u);
  EXPECT_LE(f.parsing.max_normalization_error(), 1e-12);
  double n2 = 0;
  for (double v : f.motion.values()) n2 += v * v;
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_THROW(m.forward(Tensor({3, 8, 8, 3})), std::invalid_argument);

  const Model ti(c, Variant::task_independent, 1);
  const auto g = ti.forward(random_clip(r, c));
  EXPECT_EQ(g.z_h.values(), g.z_c.values());
  EXPECT_THROW(Model(c, Variant::no_kd, 1).decode_parsing(f.z_h), std::logic_error);
}

TEST(Model, BranchGradientsStayInTheirBranch) {
  const ModelConfig c = tiny();
  Rng r(2);
  Model m(c, Variant::full, 2);
  const auto f = m.forward(random_clip(r, c));
  auto fill = [&](Shape s) {
    Tensor t(s);
    for (double& x : t.values()) x = r.normal();
    return t;
  };

  m.zero_grad();
  m.backward(f, {.parsing = fill(f.parsing.probs().shape())});
  auto mass = grad_mass(m);
  EXPECT_GT(mass["low"], 0);
  EXPECT_GT(mass["prior_encoder"], 0);
  EXPECT_GT(mass["decoder"], 0);
  EXPECT_EQ(mass["contrastive_encoder"], 0);
  EXPECT_EQ(mass["motion_head"], 0);
  EXPECT_EQ(mass["appearance_head"], 0);

  m.zero_grad();
  m.backward(f, {.motion = fill(f.motion.shape())});
  mass = grad_mass(m);
  EXPECT_GT(mass["contrastive_encoder"], 0);
  EXPECT_GT(mass["motion_head"], 0);
  EXPECT_EQ(mass["prior_encoder"], 0);
  EXPECT_EQ(mass["decoder"], 0);
  EXPECT_EQ(mass["appearance_head"], 0);
}

TEST(Model, InputGradientMatchesFiniteDifference) {
  const ModelConfig c = tiny();
  Rng r(3);
  Model m(c, Variant::full, 5);
  Tensor clip = random_clip(r, c);
  const auto f = m.forward(clip);
  Tensor gp(f.parsing.probs().shape()), gm(f.motion.shape()), ga(f.appearance.shape());
  for (Tensor* t : {&gp, &gm, &ga}) {
    for (double& x : t->values()) x = r.normal();
  }
  auto loss = [&] {
    const auto g = m.forward(clip);
    double s = 0;
    for (std::size_t i = 0; i < gp.size(); ++i) s += gp[i] * g.parsing.probs()[i];
    for (std::size_t i = 0; i < gm.size(); ++i) s += gm[i] * g.motion[i] + ga[i] * g.appearance[i];
    return s;
  };
  m.zero_grad();
  const Tensor d_clip = m.backward(f, {.parsing = gp, .motion = gm, .appearance = ga});
  for (std::size_t i = 0; i < clip.size(); i += 37) {
    const double keep = clip[i], h = 1e-6;
    clip.values()[i] = keep + h;
    const double up = loss();
    clip.values()[i] = keep - h;
    const double down = loss();
    clip.values()[i] = keep;
    EXPECT_NEAR(d_clip[i], (up - down) / (2 * h), 1e-6) << i;
  }
}

TEST(Model, CalibrationStandardisesEmbeddingsAndSkipsDecoder) {
  const ModelConfig c = tiny();
  Rng r(4);
  Model m(c, Variant::full, 6);
  std::vector<Tensor> clips;
  for (int i = 0; i < 12; ++i) clips.push_back(random_clip(r, c));
  std::vector<std::vector<double>> decoder_before;
  for (auto& p : m.parameters_in("decoder")) decoder_before.push_back(p.param->value.values());
  m.calibrate(clips);

  for (const char* which : {"z_h", "z_c"}) {
    std::vector<double> s(4, 0), s2(4, 0);
    for (const auto& clip : clips) {
      const auto f = m.forward(clip, {false, false, false});
      const Tensor& z = std::string(which) == "z_h" ? f.z_h : f.z_c;
      for (std::size_t u = 0; u < 4; ++u) {
        s[u] += z[u];
        s2[u] += z[u] * z[u];
      }
    }
    for (std::size_t u = 0; u < 4; ++u) {
      const double mean = s[u] / 12;
      EXPECT_NEAR(mean, 0.0, 1e-9) << which;
      EXPECT_NEAR(s2[u] / 12 - mean * mean, 1.0, 1e-9) << which;
    }
  }
  const auto after = m.parameters_in("decoder");
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].param->value.values(), decoder_before[i]);
  EXPECT_THROW(m.calibrate({clips[0]}), std::invalid_argument);
}

TEST(MomentumEncoder, MirrorsStudentAndFollowsMomentum) {
  const ModelConfig c = tiny();
  Rng r(5);
  Model student(c, Variant::full, 7);
  MomentumEncoder key(student);
  const Tensor clip = random_clip(r, c);
  EXPECT_EQ(key.key(clip).values(), student.forward(clip).appearance.values());

  const auto before = key.parameters();
  std::vector<std::vector<double>> shadow0;
  for (const auto& p : before) shadow0.push_back(p.param->value.values());
  for (auto& p : student.parameters()) {
    for (double& v : p.param->value.values()) v += 1.0;
  }
  key.update(student, 1.0);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].param->value.values(), shadow0[i]);
  key.update(student, 0.75);
  // shadow = 0.75 * old + 0.25 * (old + 1) = old + 0.25
  const auto now = key.parameters();
  for (std::size_t i = 0; i < now.size(); ++i) {
    for (std::size_t k = 0; k < shadow0[i].size(); ++k) {
      EXPECT_NEAR(now[i].param->value[k], shadow0[i][k] + 0.25, 1e-12);
    }
  }
  key.update(student, 0.0);
  EXPECT_EQ(key.key(clip).values(), student.forward(clip).appearance.values());
}

TEST(MomentumEncoder, MismatchedNamesThrow) {
  Param a({2}), b({2}), d({3});
  EXPECT_THROW(momentum_update({{"x", &a}}, {{"y", &b}}, 0.5), std::invalid_argument);
  EXPECT_THROW(momentum_update({{"x", &a}}, {{"x", &d}}, 0.5), std::invalid_argument);
}

TEST(Variant, Names) {
  for (Variant v : {Variant::full, Variant::no_kd, Variant::task_independent}) {
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(variant_from_string("kd_only"), std::invalid_argument);
}
