#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mtvssl/prob_map.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

enum class TeacherKind { oracle, file, stub };

TeacherKind teacher_kind_from_string(const std::string& name);
std::string to_string(TeacherKind kind);

struct TeacherSpec {
  TeacherKind kind = TeacherKind::oracle;
  std::size_t classes = 4;
  std::size_t out_height = 8;
  std::size_t out_width = 8;
  // Probability mass moved off the true class by the oracle (spread evenly).
  double oracle_delta = 0.1;
  std::uint64_t stub_seed = 1234;
  std::filesystem::path manifest;  // file teacher only

  void validate() const;
};

// Off-class mass of a one-hot target softened by softmax(onehot / temperature).
double delta_from_temperature(double temperature, std::size_t classes);
double temperature_from_delta(double delta, std::size_t classes);

// What a teacher may need beyond the pixels: ground truth for the oracle.
struct TeacherContext {
  const SourceVideo* video = nullptr;
};

// The pre-trained parser that supervises the distillation branch. Output maps
// are expressed in the coordinates of the frame's crop geometry at
// (out_height, out_width). Implementations are immutable after construction.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual SegmentationProbMap parse(const Frame& frame, const TeacherContext& context) const = 0;
  virtual std::size_t classes() const = 0;
  virtual std::size_t out_height() const = 0;
  virtual std::size_t out_width() const = 0;
  virtual TeacherKind kind() const = 0;
};

class OracleTeacher final : public Teacher {
 public:
  OracleTeacher(std::size_t classes, std::size_t out_h, std::size_t out_w, double delta);
  SegmentationProbMap parse(const Frame& frame, const TeacherContext& context) const override;
  std::size_t classes() const override { return classes_; }
  std::size_t out_height() const override { return out_h_; }
  std::size_t out_width() const override { return out_w_; }
  TeacherKind kind() const override { return TeacherKind::oracle; }
  double delta() const { return delta_; }

 private:
  std::size_t classes_, out_h_, out_w_;
  double delta_;
};

// Pseudo-teacher: a fixed random per-pixel network on the resampled frame.
class StubTeacher final : public Teacher {
 public:
  StubTeacher(std::size_t classes, std::size_t out_h, std::size_t out_w, std::uint64_t seed);
  SegmentationProbMap parse(const Frame& frame, const TeacherContext& context) const override;
  std::size_t classes() const override { return classes_; }
  std::size_t out_height() const override { return out_h_; }
  std::size_t out_width() const override { return out_w_; }
  TeacherKind kind() const override { return TeacherKind::stub; }

 private:
  static constexpr std::size_t kHidden = 8;
  std::size_t classes_, out_h_, out_w_;
  std::vector<double> w1_, b1_, w2_, b2_;
};

// Precomputed maps from an external parser, indexed by (video_id, frame).
// Map files are PMAP probability maps or 8-bit class-index PNGs.
class FileTeacher final : public Teacher {
 public:
  FileTeacher(const std::filesystem::path& manifest, std::size_t out_h, std::size_t out_w,
              double class_map_delta);
  SegmentationProbMap parse(const Frame& frame, const TeacherContext& context) const override;
  std::size_t classes() const override { return classes_; }
  std::size_t out_height() const override { return out_h_; }
  std::size_t out_width() const override { return out_w_; }
  TeacherKind kind() const override { return TeacherKind::file; }
  std::size_t entry_count() const { return entries_.size(); }

 private:
  std::size_t classes_ = 0, out_h_, out_w_;
  double class_map_delta_;
  std::map<std::pair<std::string, std::size_t>, std::filesystem::path> entries_;
};

std::unique_ptr<Teacher> make_teacher(const TeacherSpec& spec);

// One-hot with `delta` spread over the other classes.
void softened_one_hot(std::size_t true_class, std::size_t classes, double delta,
                      std::span<double> out);

// Resamples a full-frame map into the crop geometry: nearest for class
// rasters, bilinear followed by renormalisation for probability maps.
SegmentationProbMap warp_prob_map(const SegmentationProbMap& full, const CropGeometry& geometry,
                                  std::size_t out_h, std::size_t out_w);

// Parsing-map file ("PMAP", version byte, H, W, C as u32 LE, then H*W*C f32 LE).
inline constexpr std::uint8_t kPmapVersion = 1;
void write_pmap(const std::filesystem::path& path, const SegmentationProbMap& map);
SegmentationProbMap read_pmap(const std::filesystem::path& path);
// Class-index PNG converted to softened one-hot probabilities.
SegmentationProbMap read_class_map_png(const std::filesystem::path& path, std::size_t classes,
                                       double delta);

// Runs the teacher on every frame of every video (full-frame geometry) and
// writes one PMAP per frame plus `teacher_manifest.tsv`. Per-item failures are
// collected and reported together in the thrown exception.
std::filesystem::path export_maps(const std::vector<SourceVideo>& videos, const Teacher& teacher,
                                  const std::filesystem::path& out_dir);

}  // namespace mtvssl
