#include <gtest/gtest.h>

#include <fstream>

#include "mtvssl/config.hpp"
#include "mtvssl/json_schema.hpp"
#include "mtvssl/report.hpp"

using namespace mtvssl;
namespace fs = std::filesystem;

namespace {

std::vector<ReportRow> sample_rows() {
  return {{"full", 0, 0.50, 0.90},
          {"full", 1, 0.60, 1.00},
          {"task_independent", 0, 0.40, 0.80},
          {"no_kd", 0, 0.30, 0.70}};
}

}  // namespace

TEST(Report, ReferenceOrdering) {
  const auto full = reference_accuracy("full"), ti = reference_accuracy("task_independent"),
             nokd = reference_accuracy("no_kd");
  ASSERT_TRUE(full && ti && nokd);
  EXPECT_DOUBLE_EQ(full->acc1, 0.804);
  EXPECT_GT(full->acc1, ti->acc1);
  EXPECT_GT(ti->acc1, nokd->acc1);
  EXPECT_FALSE(reference_accuracy("other"));
}

TEST(Report, SummaryMeansPerVariant) {
  const auto s = summarize_rows(sample_rows());
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].variant, "full");
  EXPECT_EQ(s[0].seeds, 2u);
  EXPECT_NEAR(s[0].mean_acc1, 0.55, 1e-15);
  EXPECT_NEAR(s[0].mean_acc5, 0.95, 1e-15);
  EXPECT_EQ(s[2].variant, "no_kd");
}

TEST(Report, JsonValidatesAndRoundTrips) {
  const auto j = report_to_json(sample_rows());
  EXPECT_TRUE(validate_json(j, report_schema()).empty());
  const auto back = report_from_json(j);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[1].seed, 1u);
  EXPECT_EQ(back[3].acc1, 0.30);

  auto bad = j;
  bad["rows"][0]["acc1"] = 1.5;
  EXPECT_THROW(report_from_json(bad), std::invalid_argument);
  bad = j;
  bad["rows"][0]["variant"] = "kd_only";
  EXPECT_THROW(report_from_json(bad), std::invalid_argument);
}

TEST(Report, EmitWritesCsvAndJson) {
  const fs::path dir = fs::temp_directory_path() / "mtvssl_report_test";
  fs::remove_all(dir);
  emit_report(sample_rows(), dir);
  const auto rows = read_report_csv(dir / "report.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2].variant, "task_independent");
  EXPECT_NEAR(rows[0].acc5, 0.9, 1e-12);
  std::ifstream js(dir / "report.json");
  EXPECT_EQ(report_from_json(nlohmann::json::parse(js)).size(), 4u);

  std::ofstream(dir / "bad.csv") << "variant;seed\n";
  EXPECT_THROW(read_report_csv(dir / "bad.csv"), std::invalid_argument);
}

TEST(Report, TableShowsToyAndReference) {
  const std::string t = format_report_table(sample_rows());
  EXPECT_NE(t.find("55.0%"), std::string::npos);
  EXPECT_NE(t.find("80.4%"), std::string::npos);
  EXPECT_NE(t.find("77.6%"), std::string::npos);
  EXPECT_NE(t.find("not comparable"), std::string::npos);
}
