#pragma once

#include <vector>

#include "mtvssl/config.hpp"
#include "mtvssl/video.hpp"

namespace mtvssl {

struct DatasetSplits {
  std::vector<SourceVideo> train;
  std::vector<SourceVideo> test;
};

// Synthetic corpora are generated from the run seed (train and test use
// disjoint seed streams and id prefixes); directory corpora are read from the
// configured manifests.
DatasetSplits load_datasets(const Config& config);

std::uint64_t synthetic_split_seed(std::uint64_t run_seed, bool test);

}  // namespace mtvssl
