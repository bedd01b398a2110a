#include "mtvssl/dataset.hpp"

#include "mtvssl/frame_directory.hpp"
#include "mtvssl/rng.hpp"
#include "mtvssl/synthetic.hpp"

namespace mtvssl {

std::uint64_t synthetic_split_seed(std::uint64_t run_seed, bool test) {
  return derive_seed(run_seed, test ? 0x74657374ULL : 0x747261696eULL);
}

DatasetSplits load_datasets(const Config& config) {
  DatasetSplits splits;
  if (config.data.source == "synthetic") {
    splits.train = generate_synthetic_corpus(config.data.scene, config.data.train_videos_per_action,
                                             synthetic_split_seed(config.seed, false), "train");
    splits.test = generate_synthetic_corpus(config.data.scene, config.data.test_videos_per_action,
                                            synthetic_split_seed(config.seed, true), "test");
    return splits;
  }
  splits.train = load_frame_directory(config.data.root, config.data.manifest);
  if (!config.data.test_manifest.empty()) {
    splits.test = load_frame_directory(config.data.root, config.data.test_manifest);
  }
  return splits;
}

}  // namespace mtvssl
