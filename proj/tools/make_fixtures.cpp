// Writes the synthetic fixture set: make_fixtures <out_dir> [per_category] [seed] [size]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "sfseg/fixtures.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s out_dir [per_category=8] [seed=7] [size=96]\n", argv[0]);
    return 2;
  }
  const int per = argc > 2 ? std::atoi(argv[2]) : 8;
  const auto seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 7ULL;
  const int size = argc > 4 ? std::atoi(argv[4]) : 96;
  try {
    const auto samples = sfseg::make_fixture_set(per, seed, size);
    sfseg::write_raw_dataset(argv[1], samples);
    std::printf("wrote %zu fixtures to %s\n", samples.size(), argv[1]);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
