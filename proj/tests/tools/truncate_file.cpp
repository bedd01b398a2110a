// truncate_file <path> <bytes>: used by the CLI test to corrupt a checkpoint.
#include <filesystem>
#include <string>

int main(int argc, char** argv) {
  if (argc != 3) return 1;
  std::filesystem::resize_file(argv[1], std::stoull(argv[2]));
  return 0;
}
