#include "mtvssl/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mtvssl/binary_io.hpp"
#include "mtvssl/image_io.hpp"
#include "mtvssl/rng.hpp"

namespace mtvssl {

namespace fs = std::filesystem;

TeacherKind teacher_kind_from_string(const std::string& name) {
  if (name == "oracle") return TeacherKind::oracle;
  if (name == "file") return TeacherKind::file;
  if (name == "stub") return TeacherKind::stub;
  throw std::invalid_argument("unknown teacher kind '" + name + "'");
}

std::string to_string(TeacherKind kind) {
  switch (kind) {
    case TeacherKind::oracle: return "oracle";
    case TeacherKind::file: return "file";
    case TeacherKind::stub: return "stub";
  }
  return "?";
}

void TeacherSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("teacher: classes must be >= 2");
  if (out_height == 0 || out_width == 0) throw std::invalid_argument("teacher: empty output size");
  if (oracle_delta < 0.0 || oracle_delta >= 1.0) {
    throw std::invalid_argument("teacher: oracle_delta must lie in [0, 1)");
  }
  if (kind == TeacherKind::file && manifest.empty()) {
    throw std::invalid_argument("teacher: file teacher needs a manifest");
  }
}

double delta_from_temperature(double temperature, std::size_t classes) {
  if (temperature <= 0.0) return 0.0;
  const double others = double(classes - 1);
  return others / (std::exp(1.0 / temperature) + others);
}

double temperature_from_delta(double delta, std::size_t classes) {
  if (delta <= 0.0) return 0.0;
  const double others = double(classes - 1);
  return 1.0 / std::log(others * (1.0 - delta) / delta);
}

void softened_one_hot(std::size_t true_class, std::size_t classes, double delta,
                      std::span<double> out) {
  if (true_class >= classes) {
    throw std::out_of_range("class index " + std::to_string(true_class) + " >= " +
                            std::to_string(classes));
  }
  const double off = classes > 1 ? delta / double(classes - 1) : 0.0;
  for (std::size_t c = 0; c < classes; ++c) out[c] = c == true_class ? 1.0 - delta : off;
}

SegmentationProbMap warp_prob_map(const SegmentationProbMap& full, const CropGeometry& geometry,
                                  std::size_t out_h, std::size_t out_w) {
  const std::size_t C = full.classes();
  Tensor out({out_h, out_w, C});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto [y, x] = geometry.to_source(i, j, out_h, out_w, full.height(), full.width());
      std::span<double> cell(out.data() + (i * out_w + j) * C, C);
      bilinear_sample(full.probs(), y, x, cell);
      double sum = 0.0;
      for (double v : cell) sum += v;
      for (double& v : cell) v /= sum;
    }
  }
  return SegmentationProbMap(std::move(out));
}

namespace {

std::size_t nearest(double coord, std::size_t n) {
  const double r = std::round(coord);
  return static_cast<std::size_t>(std::clamp(r, 0.0, double(n - 1)));
}

SegmentationProbMap warp_class_raster(const std::uint8_t* classes_raster, std::size_t h,
                                      std::size_t w, const CropGeometry& geometry, std::size_t out_h,
                                      std::size_t out_w, std::size_t classes, double delta) {
  Tensor out({out_h, out_w, classes});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto [y, x] = geometry.to_source(i, j, out_h, out_w, h, w);
      const std::uint8_t cls = classes_raster[nearest(y, h) * w + nearest(x, w)];
      softened_one_hot(cls, classes, delta,
                       std::span<double>(out.data() + (i * out_w + j) * classes, classes));
    }
  }
  return SegmentationProbMap(std::move(out));
}

CropGeometry checked_geometry(const Frame& frame) {
  CropGeometry g = frame.geometry;
  if (g.source_height == 0 || g.source_width == 0) {
    g = CropGeometry::identity(frame.pixels.dim(0), frame.pixels.dim(1));
  }
  return g;
}

void check_output(const SegmentationProbMap& map, std::size_t h, std::size_t w, std::size_t c) {
  if (map.height() != h || map.width() != w || map.classes() != c) {
    throw std::runtime_error("teacher output resolution mismatch after resampling");
  }
}

}  // namespace

OracleTeacher::OracleTeacher(std::size_t classes, std::size_t out_h, std::size_t out_w, double delta)
    : classes_(classes), out_h_(out_h), out_w_(out_w), delta_(delta) {
  if (classes < 2 || delta < 0.0 || delta >= 1.0) {
    throw std::invalid_argument("OracleTeacher: need classes >= 2 and delta in [0, 1)");
  }
}

SegmentationProbMap OracleTeacher::parse(const Frame& frame, const TeacherContext& context) const {
  const SourceVideo* video = context.video;
  if (video == nullptr || !video->parsing_gt) {
    throw std::runtime_error("oracle teacher: no ground-truth parsing for frame " +
                             std::to_string(frame.frame_index) + " of " + frame.clip_source);
  }
  if (frame.frame_index >= video->frame_count()) {
    throw std::out_of_range("oracle teacher: frame index out of range for " + video->video_id);
  }
  const std::size_t H = video->height(), W = video->width();
  const std::uint8_t* raster = video->parsing_gt->data() + frame.frame_index * H * W;
  auto map = warp_class_raster(raster, H, W, checked_geometry(frame), out_h_, out_w_, classes_,
                               delta_);
  check_output(map, out_h_, out_w_, classes_);
  return map;
}

StubTeacher::StubTeacher(std::size_t classes, std::size_t out_h, std::size_t out_w,
                         std::uint64_t seed)
    : classes_(classes), out_h_(out_h), out_w_(out_w) {
  Rng rng(seed);
  auto fill = [&rng](std::vector<double>& v, std::size_t n, double scale) {
    v.resize(n);
    for (double& x : v) x = scale * rng.normal();
  };
  fill(w1_, kHidden * 3, 2.0);
  fill(b1_, kHidden, 0.5);
  fill(w2_, classes * kHidden, 1.0);
  fill(b2_, classes, 0.5);
}

SegmentationProbMap StubTeacher::parse(const Frame& frame, const TeacherContext&) const {
  if (frame.pixels.rank() != 3 || frame.pixels.dim(2) != 3) {
    throw std::invalid_argument("stub teacher: frame must be (H, W, 3)");
  }
  const CropGeometry g = checked_geometry(frame);
  Tensor logits({out_h_, out_w_, classes_});
  double rgb[3];
  double hidden[kHidden];
  for (std::size_t i = 0; i < out_h_; ++i) {
    for (std::size_t j = 0; j < out_w_; ++j) {
      const auto [y, x] = g.to_source(i, j, out_h_, out_w_, frame.pixels.dim(0), frame.pixels.dim(1));
      bilinear_sample(frame.pixels, y, x, rgb);
      for (std::size_t k = 0; k < kHidden; ++k) {
        hidden[k] = std::tanh(b1_[k] + w1_[3 * k] * rgb[0] + w1_[3 * k + 1] * rgb[1] +
                              w1_[3 * k + 2] * rgb[2]);
      }
      double* z = logits.data() + (i * out_w_ + j) * classes_;
      for (std::size_t c = 0; c < classes_; ++c) {
        z[c] = b2_[c];
        for (std::size_t k = 0; k < kHidden; ++k) z[c] += w2_[c * kHidden + k] * hidden[k];
      }
    }
  }
  return softmax_classes(logits);
}

FileTeacher::FileTeacher(const fs::path& manifest, std::size_t out_h, std::size_t out_w,
                         double class_map_delta)
    : out_h_(out_h), out_w_(out_w), class_map_delta_(class_map_delta) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("file teacher: cannot open manifest " + manifest.string());
  const fs::path root = manifest.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("classes=");
      if (pos != std::string::npos) classes_ = std::stoul(line.substr(pos + 8));
      continue;
    }
    std::istringstream is(line);
    std::string id, index, path;
    if (!std::getline(is, id, '\t') || !std::getline(is, index, '\t') || !std::getline(is, path)) {
      throw std::runtime_error("file teacher: malformed manifest line " + std::to_string(line_no));
    }
    entries_[{id, std::stoul(index)}] = root / path;
  }
  if (classes_ < 2) {
    throw std::runtime_error("file teacher: manifest must declare '#... classes=<C>' with C >= 2");
  }
}

SegmentationProbMap FileTeacher::parse(const Frame& frame, const TeacherContext&) const {
  const auto it = entries_.find({frame.clip_source, frame.frame_index});
  if (it == entries_.end()) {
    throw std::runtime_error("file teacher: no map for " + frame.clip_source + " frame " +
                             std::to_string(frame.frame_index));
  }
  const fs::path& path = it->second;
  const CropGeometry g = checked_geometry(frame);
  SegmentationProbMap out;
  if (path.extension() == ".png") {
    const Image8 img = read_png(path, 1);
    out = warp_class_raster(img.pixels.data(), img.height, img.width, g, out_h_, out_w_, classes_,
                            class_map_delta_);
  } else {
    const SegmentationProbMap full = read_pmap(path);
    if (full.classes() != classes_) {
      throw std::runtime_error("file teacher: " + path.string() + " has " +
                               std::to_string(full.classes()) + " classes, manifest declares " +
                               std::to_string(classes_));
    }
    out = warp_prob_map(full, g, out_h_, out_w_);
  }
  check_output(out, out_h_, out_w_, classes_);
  return out;
}

std::unique_ptr<Teacher> make_teacher(const TeacherSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case TeacherKind::oracle:
      return std::make_unique<OracleTeacher>(spec.classes, spec.out_height, spec.out_width,
                                             spec.oracle_delta);
    case TeacherKind::stub:
      return std::make_unique<StubTeacher>(spec.classes, spec.out_height, spec.out_width,
                                           spec.stub_seed);
    case TeacherKind::file:
      return std::make_unique<FileTeacher>(spec.manifest, spec.out_height, spec.out_width,
                                           spec.oracle_delta);
  }
  throw std::invalid_argument("make_teacher: unknown kind");
}

void write_pmap(const fs::path& path, const SegmentationProbMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pmap: cannot open " + path.string());
  os.write("PMAP", 4);
  binary::write_le<std::uint8_t>(os, kPmapVersion);
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.height()));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.width()));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.classes()));
  for (double v : map.probs().values()) binary::write_le<float>(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write_pmap: write failed for " + path.string());
}

SegmentationProbMap read_pmap(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pmap: cannot open " + path.string());
  char magic[4];
  binary::read_bytes(is, magic, 4, "PMAP magic");
  if (std::string(magic, 4) != "PMAP") throw std::runtime_error(path.string() + ": bad PMAP magic");
  const auto version = binary::read_le<std::uint8_t>(is, "PMAP version");
  if (version != kPmapVersion) {
    throw std::runtime_error(path.string() + ": unsupported PMAP version " + std::to_string(version));
  }
  const std::size_t h = binary::read_le<std::uint32_t>(is, "PMAP height");
  const std::size_t w = binary::read_le<std::uint32_t>(is, "PMAP width");
  const std::size_t c = binary::read_le<std::uint32_t>(is, "PMAP classes");
  if (h == 0 || w == 0 || c < 2) throw std::runtime_error(path.string() + ": bad PMAP dimensions");
  Tensor probs({h, w, c});
  for (double& v : probs.values()) v = binary::read_le<float>(is, "PMAP data");
  SegmentationProbMap map(std::move(probs));
  // Stored as f32, so normalisation is only good to single precision.
  map.validate(1e-4);
  return map;
}

SegmentationProbMap read_class_map_png(const fs::path& path, std::size_t classes, double delta) {
  const Image8 img = read_png(path, 1);
  const CropGeometry g = CropGeometry::identity(img.height, img.width);
  return warp_class_raster(img.pixels.data(), img.height, img.width, g, img.height, img.width,
                           classes, delta);
}

fs::path export_maps(const std::vector<SourceVideo>& videos, const Teacher& teacher,
                     const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const fs::path manifest = out_dir / "teacher_manifest.tsv";
  std::ofstream out(manifest);
  if (!out) throw std::runtime_error("export_maps: cannot write " + manifest.string());
  out << "#pmap-manifest\tclasses=" << teacher.classes() << '\n';
  std::vector<std::string> failures;
  for (const auto& video : videos) {
    const fs::path dir = out_dir / video.video_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    for (std::size_t f = 0; f < video.frame_count(); ++f) {
      const std::string name = "map_" + std::to_string(f) + ".pmap";
      try {
        Frame frame;
        const std::size_t n = video.height() * video.width() * 3;
        frame.pixels = Tensor({video.height(), video.width(), 3},
                              std::vector<double>(video.frames.data() + f * n,
                                                  video.frames.data() + (f + 1) * n));
        frame.clip_source = video.video_id;
        frame.frame_index = f;
        frame.geometry = CropGeometry::identity(video.height(), video.width());
        write_pmap(dir / name, teacher.parse(frame, TeacherContext{&video}));
        out << video.video_id << '\t' << f << '\t' << video.video_id << '/' << name << '\n';
      } catch (const std::exception& e) {
        failures.push_back(video.video_id + " frame " + std::to_string(f) + ": " + e.what());
      }
    }
  }
  if (!failures.empty()) {
    std::string msg = "export_maps: " + std::to_string(failures.size()) + " item(s) failed";
    for (const auto& f : failures) msg += "\n  " + f;
    throw std::runtime_error(msg);
  }
  return manifest;
}

}  // namespace mtvssl
