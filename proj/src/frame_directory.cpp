#include "mtvssl/frame_directory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "mtvssl/image_io.hpp"

namespace mtvssl {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) fields.push_back(field);
  return fields;
}

bool wildcard_match(const char* pattern, const char* text) {
  if (*pattern == '\0') return *text == '\0';
  if (*pattern == '*') {
    return wildcard_match(pattern + 1, text) || (*text && wildcard_match(pattern, text + 1));
  }
  if (*text && (*pattern == '?' || *pattern == *text)) return wildcard_match(pattern + 1, text + 1);
  return false;
}

std::optional<long long> trailing_number(const std::string& name) {
  const std::string stem = fs::path(name).stem().string();
  auto end = stem.find_last_of("0123456789");
  if (end == std::string::npos) return std::nullopt;
  auto begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  return std::stoll(stem.substr(begin, end - begin + 1));
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("", "cannot open manifest " + manifest.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    const std::string id = fields.empty() ? "" : fields[0];
    if (fields.size() < 3 || fields.size() > 4 || id.empty()) {
      throw DatasetError(id, "malformed manifest line " + std::to_string(line_no) +
                                 ": expected 3 or 4 tab-separated fields");
    }
    ManifestEntry e;
    e.video_id = id;
    try {
      std::size_t used = 0;
      e.label = std::stoi(fields[1], &used);
      if (used != fields[1].size() || e.label < 0) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw DatasetError(id, "malformed manifest line " + std::to_string(line_no) +
                                 ": label '" + fields[1] + "' is not a non-negative integer");
    }
    e.frame_glob = fields[2];
    if (fields.size() == 4) e.parsing_glob = fields[3];
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<fs::path> expand_frame_glob(const fs::path& root, const std::string& pattern) {
  const fs::path rel(pattern);
  const fs::path dir = root / rel.parent_path();
  const std::string name_pattern = rel.filename().string();
  if (rel.parent_path().string().find_first_of("*?") != std::string::npos) {
    throw std::invalid_argument("wildcards are only supported in the file name: " + pattern);
  }
  std::vector<fs::path> matches;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return matches;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (wildcard_match(name_pattern.c_str(), name.c_str())) matches.push_back(entry.path());
  }
  std::sort(matches.begin(), matches.end(), [](const fs::path& a, const fs::path& b) {
    const auto na = trailing_number(a.filename().string());
    const auto nb = trailing_number(b.filename().string());
    if (na && nb && *na != *nb) return *na < *nb;
    return a.filename() < b.filename();
  });
  return matches;
}

std::vector<SourceVideo> load_frame_directory(const fs::path& root, const fs::path& manifest) {
  const auto entries = parse_manifest(manifest);
  std::vector<SourceVideo> videos;
  for (const auto& e : entries) {
    const auto frames = expand_frame_glob(root, e.frame_glob);
    if (frames.empty()) throw DatasetError(e.video_id, "no frames match '" + e.frame_glob + "'");
    for (std::size_t k = 1; k < frames.size(); ++k) {
      const auto prev = trailing_number(frames[k - 1].filename().string());
      const auto cur = trailing_number(frames[k].filename().string());
      if (prev && cur && *cur != *prev + 1) {
        throw DatasetError(e.video_id, "missing frame between " + frames[k - 1].filename().string() +
                                           " and " + frames[k].filename().string());
      }
    }
    SourceVideo v;
    v.video_id = e.video_id;
    v.action_label = e.label;
    std::size_t H = 0, W = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      Image8 img;
      try {
        img = read_png(frames[k], 3);
      } catch (const std::exception& ex) {
        throw DatasetError(e.video_id, ex.what());
      }
      if (k == 0) {
        H = img.height;
        W = img.width;
        v.frames = Tensor({frames.size(), H, W, 3});
      } else if (img.height != H || img.width != W) {
        throw DatasetError(e.video_id, "inconsistent resolution: " + frames[k].filename().string() +
                                           " is " + std::to_string(img.width) + "x" +
                                           std::to_string(img.height) + ", expected " +
                                           std::to_string(W) + "x" + std::to_string(H));
      }
      double* dst = v.frames.data() + k * H * W * 3;
      for (std::size_t i = 0; i < H * W * 3; ++i) dst[i] = img.pixels[i] / 255.0;
    }
    if (!e.parsing_glob.empty()) {
      const auto maps = expand_frame_glob(root, e.parsing_glob);
      if (maps.size() != frames.size()) {
        throw DatasetError(e.video_id, "found " + std::to_string(maps.size()) +
                                           " parsing maps for " + std::to_string(frames.size()) +
                                           " frames");
      }
      std::vector<std::uint8_t> gt;
      gt.reserve(frames.size() * H * W);
      for (const auto& m : maps) {
        Image8 img;
        try {
          img = read_png(m, 1);
        } catch (const std::exception& ex) {
          throw DatasetError(e.video_id, ex.what());
        }
        if (img.height != H || img.width != W) {
          throw DatasetError(e.video_id, "parsing map " + m.filename().string() +
                                             " does not match frame resolution");
        }
        gt.insert(gt.end(), img.pixels.begin(), img.pixels.end());
      }
      v.parsing_gt = std::move(gt);
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

fs::path write_frame_directory(const std::vector<SourceVideo>& videos, const fs::path& root) {
  fs::create_directories(root);
  const fs::path manifest = root / "manifest.tsv";
  std::ofstream out(manifest);
  if (!out) throw std::runtime_error("cannot write " + manifest.string());
  out << "# video_id\tlabel\tframe_glob\tparsing_glob\n";
  for (const auto& v : videos) {
    v.validate();
    const fs::path dir = root / v.video_id;
    fs::create_directories(dir);
    const std::size_t H = v.height(), W = v.width();
    for (std::size_t f = 0; f < v.frame_count(); ++f) {
      char name[32];
      Image8 img{W, H, 3, std::vector<std::uint8_t>(H * W * 3)};
      const double* src = v.frames.data() + f * H * W * 3;
      for (std::size_t i = 0; i < H * W * 3; ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
      }
      std::snprintf(name, sizeof(name), "frame_%04zu.png", f);
      write_png(dir / name, img);
      if (v.parsing_gt) {
        Image8 map{W, H, 1, std::vector<std::uint8_t>(v.parsing_gt->begin() + f * H * W,
                                                      v.parsing_gt->begin() + (f + 1) * H * W)};
        std::snprintf(name, sizeof(name), "parsing_%04zu.png", f);
        write_png(dir / name, map);
      }
    }
    out << v.video_id << '\t' << v.action_label << '\t' << v.video_id << "/frame_*.png";
    if (v.parsing_gt) out << '\t' << v.video_id << "/parsing_*.png";
    out << '\n';
  }
  return manifest;
}

}  // namespace mtvssl
