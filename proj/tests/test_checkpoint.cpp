#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hvae/checkpoint.hpp"
#include "hvae/errors.hpp"
#include "hvae/ioutil.hpp"
#include "hvae/rng.hpp"

using namespace hvae;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hvae_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<Tensor> sample_tensors() {
  Rng rng(11);
  Tensor a = Tensor::param({3, 4}, "enc.w");
  Tensor b = Tensor::param({4}, "enc.b");
  Tensor c = Tensor::param({1}, "kappa");
  for (Tensor* t : {&a, &b, &c}) {
    for (double& v : t->values_mutable()) v = rng.normal();
  }
  // Edge values must survive the byte round trip unchanged.
  a.values_mutable()[0] = 0.0;
  a.values_mutable()[1] = -0.0;
  a.values_mutable()[2] = 1e-308;
  a.values_mutable()[3] = -1.7976931348623157e308;
  return {a, b, c};
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  TempDir dir;
  const std::string path = dir.file("model.ckpt");
  const std::vector<Tensor> saved = sample_tensors();
  save_checkpoint(path, saved);

  const std::vector<Tensor> loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == saved.size());
  for (std::size_t i = 0; i < saved.size(); ++i) {
    CHECK(loaded[i].name() == saved[i].name());
    REQUIRE(loaded[i].shape() == saved[i].shape());
    for (std::size_t j = 0; j < saved[i].values().size(); ++j) {
      // Bitwise comparison: -0.0 and denormals must come back identical.
      double a = saved[i].values()[j];
      double b = loaded[i].values()[j];
      CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    }
  }
}

TEST_CASE("checkpoint writes leave no temp files behind") {
  TempDir dir;
  save_checkpoint(dir.file("m.ckpt"), sample_tensors());
  int entries = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    ++entries;
    CHECK(e.path().filename().string() == "m.ckpt");
  }
  CHECK(entries == 1);
}

TEST_CASE("foreign and damaged files are rejected with io errors") {
  TempDir dir;

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), IoError);
  }

  SUBCASE("bad magic") {
    const std::string path = dir.file("foreign.ckpt");
    std::ofstream(path, std::ios::binary) << "NOPE not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }

  SUBCASE("truncated payload") {
    const std::string path = dir.file("whole.ckpt");
    save_checkpoint(path, sample_tensors());
    const std::string bytes = ioutil::read_file(path);
    REQUIRE(bytes.size() > 16);
    for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t{9}}) {
      const std::string cut = dir.file("cut.ckpt");
      ioutil::atomic_write_file(cut, bytes.substr(0, keep));
      CAPTURE(keep);
      CHECK_THROWS_AS(load_checkpoint(cut), IoError);
    }
  }

  SUBCASE("trailing garbage") {
    const std::string path = dir.file("padded.ckpt");
    save_checkpoint(path, sample_tensors());
    std::string bytes = ioutil::read_file(path);
    bytes.push_back('\0');
    ioutil::atomic_write_file(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
}

TEST_CASE("atomic text writes round-trip and split lines correctly") {
  TempDir dir;
  const std::string path = dir.file("log.csv");
  ioutil::atomic_write_file(path, "a,b\r\n1,2\n3,4\n");
  CHECK(ioutil::read_file(path) == "a,b\r\n1,2\n3,4\n");

  const std::vector<std::string> lines = ioutil::read_lines(path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a,b");  // trailing carriage return stripped
  CHECK(lines[1] == "1,2");
  CHECK(lines[2] == "3,4");

  CHECK_THROWS_AS(ioutil::read_file(dir.file("missing.txt")), IoError);
}
