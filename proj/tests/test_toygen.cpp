#include <unistd.h>

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphnet/toygen.hpp"
#include "helpers.hpp"

using namespace glyphnet;
using testutil::bit_equal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("glyphnet_test_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ToyParams small_params() {
  ToyParams p;
  p.classes = 4;
  p.per_class = 10;
  p.image_size = 16;
  p.seed = 5;
  return p;
}

}  // namespace

TEST_CASE("toy parameter validation", "[toygen]") {
  ToyParams p;
  REQUIRE_NOTHROW(p.validate());
  p.classes = 1;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
  p = ToyParams{};
  p.per_class = 0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
  p = ToyParams{};
  p.image_size = 7;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("generated corpus layout", "[toygen]") {
  TempDir tmp("toygen");
  const auto p = small_params();
  const fs::path root = tmp.path / "corpus";
  generate_toy_corpus(root, p);

  for (int c = 0; c < p.classes; ++c) {
    char dir[8];
    std::snprintf(dir, sizeof dir, "c%03d", c);
    REQUIRE(fs::is_directory(root / dir));
    int files = 0;
    for (const auto& e : fs::directory_iterator(root / dir)) {
      REQUIRE(e.path().extension() == ".pgm");
      auto img = read_image_gray(e.path());
      REQUIRE(img.shape() == Shape{1, 16, 16});
      ++files;
    }
    REQUIRE(files == p.per_class);
    REQUIRE(fs::exists(root / dir / "s00000.pgm"));
    REQUIRE(fs::exists(root / dir / "s00009.pgm"));
  }
  REQUIRE_FALSE(fs::exists(root.string() + ".tmp"));

  SECTION("a non-empty destination is refused") {
    REQUIRE_THROWS_AS(generate_toy_corpus(root, p), DataError);
  }

  SECTION("an existing empty directory is acceptable") {
    const fs::path other = tmp.path / "empty_ok";
    fs::create_directories(other);
    REQUIRE_NOTHROW(generate_toy_corpus(other, p));
    REQUIRE(fs::exists(other / "c000" / "s00000.pgm"));
  }
}

TEST_CASE("generation is deterministic in the seed", "[toygen]") {
  TempDir tmp("toydet");
  const auto p = small_params();
  generate_toy_corpus(tmp.path / "one", p);
  generate_toy_corpus(tmp.path / "two", p);
  for (int c = 0; c < p.classes; ++c)
    for (int i = 0; i < p.per_class; ++i) {
      const auto rel = fs::path(toy::class_dir_name(c)) / toy::sample_file_name(i);
      REQUIRE(slurp(tmp.path / "one" / rel) == slurp(tmp.path / "two" / rel));
    }

  ToyParams q = p;
  q.seed = 6;
  generate_toy_corpus(tmp.path / "three", q);
  REQUIRE(slurp(tmp.path / "one" / "c000" / "s00000.pgm") !=
          slurp(tmp.path / "three" / "c000" / "s00000.pgm"));
}

TEST_CASE("in-memory samples equal their decoded files", "[toygen]") {
  TempDir tmp("toymem");
  const auto p = small_params();
  const fs::path root = tmp.path / "corpus";
  generate_toy_corpus(root, p);

  std::vector<std::string> mem_names;
  auto mem = toy_dataset(p, &mem_names);
  REQUIRE(mem.size() == static_cast<size_t>(p.classes * p.per_class));
  REQUIRE(mem_names == std::vector<std::string>{"c000", "c001", "c002", "c003"});

  std::vector<std::string> disk_names;
  auto disk = load_corpus(root, p.image_size, disk_names);
  REQUIRE(disk_names == mem_names);
  REQUIRE(disk.size() == mem.size());
  // Both are ordered class-major then file-name order; 8-bit quantization at
  // render time makes the write/read round trip lossless.
  for (size_t i = 0; i < mem.size(); ++i) {
    REQUIRE(disk[i].label == mem[i].label);
    REQUIRE(disk[i].source_id == mem[i].source_id);
    REQUIRE(bit_equal(disk[i].pixels, mem[i].pixels));
  }
}

TEST_CASE("classes are mutually distinguishable", "[toygen]") {
  SECTION("canonical rasters keep their distance") {
    auto skeletons = toy::class_skeletons(10, 7, 32);
    std::vector<Tensor<float>> rasters;
    for (const auto& s : skeletons) rasters.push_back(toy::render_canonical(s, 32));
    for (size_t a = 0; a < rasters.size(); ++a)
      for (size_t b = a + 1; b < rasters.size(); ++b) {
        INFO("classes " << a << " and " << b);
        REQUIRE(toy::raster_distance(rasters[a], rasters[b]) > 1.0);
      }
  }

  SECTION("a nearest-centroid rule clears 60% on a held-out split") {
    ToyParams p;
    p.classes = 4;
    p.per_class = 30;
    p.image_size = 16;
    p.seed = 5;
    std::vector<std::string> names;
    auto images = toy_dataset(p, &names);
    auto split = split_dataset(std::move(images), names, 0.8, 3);

    std::vector<Tensor<double>> centroid(4, Tensor<double>({16 * 16}));
    std::vector<int> counts(4, 0);
    for (const auto& s : split.train) {
      for (std::int64_t j = 0; j < s.pixels.numel(); ++j)
        centroid[static_cast<size_t>(s.label)][j] += s.pixels[j];
      ++counts[static_cast<size_t>(s.label)];
    }
    for (int c = 0; c < 4; ++c)
      for (std::int64_t j = 0; j < centroid[0].numel(); ++j)
        centroid[static_cast<size_t>(c)][j] /= counts[static_cast<size_t>(c)];

    int hits = 0;
    for (const auto& s : split.test) {
      double best = 1e300;
      int pred = -1;
      for (int c = 0; c < 4; ++c) {
        double d = 0;
        for (std::int64_t j = 0; j < s.pixels.numel(); ++j) {
          const double diff = s.pixels[j] - centroid[static_cast<size_t>(c)][j];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          pred = c;
        }
      }
      if (pred == s.label) ++hits;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(split.test.size());
    INFO("nearest-centroid accuracy " << acc);
    REQUIRE(acc > 0.6);
  }
}
