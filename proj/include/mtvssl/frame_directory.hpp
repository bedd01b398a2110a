#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtvssl/video.hpp"

namespace mtvssl {

// Raised for any problem with an on-disk dataset; the message names the video.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& video_id, const std::string& what)
      : std::runtime_error(video_id.empty() ? what : video_id + ": " + what), video_id_(video_id) {}
  const std::string& video_id() const { return video_id_; }

 private:
  std::string video_id_;
};

struct ManifestEntry {
  std::string video_id;
  int label = 0;
  std::string frame_glob;
  std::string parsing_glob;  // empty when absent
};

// Tab-separated: video_id, label, frame_glob[, parsing_glob]. '#' starts a comment line.
std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& manifest);

// Files matching a glob whose wildcards ('*', '?') are confined to the file
// name, sorted by the last run of digits in the name.
std::vector<std::filesystem::path> expand_frame_glob(const std::filesystem::path& root,
                                                     const std::string& pattern);

std::vector<SourceVideo> load_frame_directory(const std::filesystem::path& root,
                                              const std::filesystem::path& manifest);

// Writes videos as PNG frame folders plus `manifest.tsv` under root; returns the manifest path.
std::filesystem::path write_frame_directory(const std::vector<SourceVideo>& videos,
                                            const std::filesystem::path& root);

}  // namespace mtvssl
