#include <gtest/gtest.h>

#include <fstream>

#include "mtvssl/config.hpp"
#include "mtvssl/json_schema.hpp"

using namespace mtvssl;
using nlohmann::json;

TEST(Config, DefaultsResolveAndValidate) {
  const Config c = resolve_config(json::object());
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.trainer.variant, Variant::full);
  EXPECT_EQ(c.trainer.optimizer, Optimizer::adam);
  EXPECT_EQ(c.model.clip_length, 8u);
  EXPECT_EQ(c.teacher.out_height, 8u);
  EXPECT_EQ(c.model.parsing_classes, 4u);
  EXPECT_TRUE(validate_json(c.resolved, config_schema()).empty());
  // The struct defaults and the schema defaults describe the same recipe.
  const TrainConfig plain;
  EXPECT_EQ(c.trainer.epochs, plain.epochs);
  EXPECT_EQ(c.trainer.base_lr, plain.base_lr);
  EXPECT_EQ(c.trainer.lr_milestones, plain.lr_milestones);
  EXPECT_EQ(c.trainer.key_momentum, plain.key_momentum);
  EXPECT_EQ(c.trainer.calibration_clips, plain.calibration_clips);
  EXPECT_EQ(c.loss.margin, LossConfig{}.margin);
}

TEST(Config, PrecedenceFileThenEnvThenOverride) {
  const json user = {{"seed", 3}, {"trainer", {{"epochs", 2}}}};
  EXPECT_EQ(resolve_config(user).seed, 3u);
  EXPECT_EQ(resolve_config(user, {}, "11").seed, 11u);
  const Config c = resolve_config(user, {"seed=5", "trainer.variant=no_kd"}, "11");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.trainer.variant, Variant::no_kd);
  EXPECT_EQ(c.trainer.epochs, 2u);
  // Untouched siblings keep their defaults after a nested merge.
  EXPECT_EQ(c.trainer.batch_size, 8u);
}

TEST(Config, OverrideValueParsing) {
  const Config c = resolve_config(json::object(), {"trainer.lr_milestones=[3,5]", "trainer.base_lr=0.02",
                                                   "output_dir=1234", "trainer.optimizer=sgd"});
  EXPECT_EQ(c.trainer.lr_milestones, (std::vector<std::size_t>{3, 5}));
  EXPECT_DOUBLE_EQ(c.trainer.base_lr, 0.02);
  EXPECT_EQ(c.output_dir, "1234");
  EXPECT_EQ(c.trainer.optimizer, Optimizer::sgd);
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_THROW(resolve_config(json::object(), {"trainer.epoch=3"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"novalue"}), ConfigError);
  EXPECT_THROW(resolve_config({{"trainer", {{"bogus", 1}}}}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"trainer.batch_size=1"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"trainer.optimizer=rmsprop"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"trainer.momentum=1.0"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {}, "-4"), ConfigError);
  EXPECT_THROW(resolve_config(json::array()), ConfigError);
}

TEST(Config, CrossFieldChecks) {
  // Speed 8 with clip length 8 needs 57 frames.
  try {
    resolve_config(json::object(), {"trainer.speeds=[1,8]"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("needs 57"), std::string::npos);
  }
  EXPECT_THROW(resolve_config(json::object(), {"trainer.speeds=[2,2]"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"trainer.lr_milestones=[5,3]"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"teacher.classes=5"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"teacher.kind=file"}), ConfigError);
  EXPECT_THROW(resolve_config(json::object(), {"data.source=directory"}), ConfigError);
}

TEST(Config, LearningRateSchedule) {
  TrainConfig t;
  t.base_lr = 1.0;
  t.lr_milestones = {2, 4};
  t.lr_decay = 0.5;
  EXPECT_EQ(t.learning_rate(0), 1.0);
  EXPECT_EQ(t.learning_rate(2), 0.5);
  EXPECT_EQ(t.learning_rate(3), 0.5);
  EXPECT_EQ(t.learning_rate(9), 0.25);
}

TEST(Config, HashAndSnapshot) {
  const Config a = resolve_config(json::object());
  const Config b = resolve_config(json::object(), {"seed=1"});
  EXPECT_EQ(config_hash(a.resolved), config_hash(resolve_config(json::object()).resolved));
  EXPECT_NE(config_hash(a.resolved), config_hash(b.resolved));
  EXPECT_EQ(config_hash(a.resolved).size(), 16u);

  const auto dir = std::filesystem::temp_directory_path() / "mtvssl_config_snapshot";
  std::filesystem::remove_all(dir);
  write_run_snapshot(b, dir);
  std::ifstream cfg(dir / "resolved_config.json");
  EXPECT_EQ(json::parse(cfg), b.resolved);
  std::ifstream seed(dir / "seed.txt");
  std::string s;
  seed >> s;
  EXPECT_EQ(s, "1");
  // A resolved document reloads to the same configuration.
  EXPECT_EQ(config_from_json(b.resolved).resolved, b.resolved);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "mtvssl_config_test.json";
  std::ofstream(path) << R"({"trainer": {"epochs": 3}})";
  EXPECT_EQ(load_config(path, {}, std::nullopt).trainer.epochs, 3u);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_config(path, {}, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(path.string() + ".absent", {}, std::nullopt), ConfigError);
}
