#include "mtvssl/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtvssl/config.hpp"
#include "mtvssl/json_schema.hpp"

namespace mtvssl {

using nlohmann::json;

namespace {

constexpr const char* kReferenceNote =
    "reference_acc1/acc5: full-scale C3D results (Kinetics-400 pre-training, UCF101 "
    "fine-tuning) showing the expected ordering full > task_independent > no_kd; toy-scale "
    "accuracies are not comparable in absolute terms";

}  // namespace

std::optional<ReferenceAccuracy> reference_accuracy(const std::string& variant) {
  if (variant == "full") return ReferenceAccuracy{0.804, 0.957};
  if (variant == "task_independent") return ReferenceAccuracy{0.793, 0.921};
  if (variant == "no_kd") return ReferenceAccuracy{0.776, 0.937};
  return std::nullopt;
}

std::vector<VariantSummary> summarize_rows(const std::vector<ReportRow>& rows) {
  std::vector<VariantSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const VariantSummary& s) { return s.variant == r.variant; });
    if (it == out.end()) {
      out.push_back({r.variant, 0, 0.0, 0.0});
      it = out.end() - 1;
    }
    ++it->seeds;
    it->mean_acc1 += r.acc1;
    it->mean_acc5 += r.acc5;
  }
  for (auto& s : out) {
    s.mean_acc1 /= double(s.seeds);
    s.mean_acc5 /= double(s.seeds);
  }
  return out;
}

json report_to_json(const std::vector<ReportRow>& rows) {
  json j;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"variant", r.variant}, {"seed", r.seed}, {"acc1", r.acc1}, {"acc5", r.acc5}});
  }
  j["summary"] = json::array();
  for (const auto& s : summarize_rows(rows)) {
    json e = {{"variant", s.variant},
              {"seeds", s.seeds},
              {"mean_acc1", s.mean_acc1},
              {"mean_acc5", s.mean_acc5}};
    if (const auto ref = reference_accuracy(s.variant)) {
      e["reference_acc1"] = ref->acc1;
      e["reference_acc5"] = ref->acc5;
    }
    j["summary"].push_back(e);
  }
  j["reference_note"] = kReferenceNote;
  return j;
}

std::vector<ReportRow> report_from_json(const json& report) {
  const auto errors = validate_json(report, report_schema());
  if (!errors.empty()) throw std::invalid_argument("report does not match schema: " + errors.front());
  std::vector<ReportRow> rows;
  for (const auto& r : report["rows"]) {
    rows.push_back({r["variant"], r["seed"].get<std::uint64_t>(), r["acc1"], r["acc5"]});
  }
  return rows;
}

void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dir) {
  const json j = report_to_json(rows);
  const auto errors = validate_json(j, report_schema());
  if (!errors.empty()) throw std::logic_error("generated report violates schema: " + errors.front());
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "report.csv");
  csv << "variant,seed,acc1,acc5\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.acc1, r.acc5);
    csv << r.variant << "," << r.seed << "," << buf << "\n";
  }
  std::ofstream js(dir / "report.json");
  js << j.dump(2) << "\n";
  if (!csv || !js) throw std::runtime_error("cannot write report into " + dir.string());
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "variant,seed,acc1,acc5") {
    throw std::invalid_argument(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ReportRow r;
    std::string field;
    std::getline(ss, r.variant, ',');
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.acc1 = std::stod(field);
    std::getline(ss, field, ',');
    r.acc5 = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

std::string format_report_table(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %5s %10s %10s %10s %10s\n", "variant", "seeds", "toy@1",
                "toy@5", "ref@1", "ref@5");
  os << buf;
  for (const auto& s : summarize_rows(rows)) {
    const auto ref = reference_accuracy(s.variant);
    std::snprintf(buf, sizeof buf, "%-18s %5zu %9.1f%% %9.1f%% %9.1f%% %9.1f%%\n",
                  s.variant.c_str(), s.seeds, 100.0 * s.mean_acc1, 100.0 * s.mean_acc5,
                  ref ? 100.0 * ref->acc1 : 0.0, ref ? 100.0 * ref->acc5 : 0.0);
    os << buf;
  }
  os << "(" << kReferenceNote << ")\n";
  return os.str();
}

}  // namespace mtvssl
