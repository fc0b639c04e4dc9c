#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "hvae/corpus.hpp"
#include "hvae/errors.hpp"
#include "hvae/ioutil.hpp"
#include "hvae/rng.hpp"

using namespace hvae;
using namespace hvae::corpus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hvae_corpus_" + std::to_string(::getpid()) + "_" +
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

std::vector<std::vector<std::string>> docs_of(
    std::initializer_list<std::string> lines) {
  std::vector<std::vector<std::string>> out;
  for (const std::string& line : lines) out.push_back(tokenize(line));
  return out;
}

}  // namespace

TEST_CASE("tokenize splits on any blank run and drops edges") {
  CHECK(tokenize("a b c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("  a\t\tb   c  ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("   \t ") == std::vector<std::string>{});
  CHECK(tokenize("one") == std::vector<std::string>{"one"});
}

TEST_CASE("vocab orders by frequency with first-seen tie breaks") {
  const Vocab v = Vocab::build(
      docs_of({"pear pear apple", "plum apple pear", "plum quince"}), 100);
  // pear x3, apple x2, plum x2 (apple seen first), quince x1.
  CHECK(v.size() == Vocab::kReservedCount + 4);
  CHECK(v.id("pear") == 4);
  CHECK(v.id("apple") == 5);
  CHECK(v.id("plum") == 6);
  CHECK(v.id("quince") == 7);
  CHECK(v.id("banana") == Vocab::kUnk);
  CHECK(v.token(4) == "pear");
  CHECK(v.token(Vocab::kUnk) == "<unk>");
  CHECK_THROWS_AS(v.token(99), std::out_of_range);
}

TEST_CASE("vocab cap keeps only the most frequent tokens") {
  const Vocab v = Vocab::build(
      docs_of({"pear pear pear apple apple plum quince"}), 2);
  CHECK(v.size() == Vocab::kReservedCount + 2);
  CHECK(v.id("pear") == 4);
  CHECK(v.id("apple") == 5);
  CHECK(v.id("plum") == Vocab::kUnk);
}

TEST_CASE("vocab save and load round-trip and reject foreign content") {
  TempDir dir;
  const Vocab v = Vocab::build(docs_of({"c b a", "c b", "c"}), 100);
  const std::string path = dir.file("vocab.txt");
  v.save(path);

  const Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  for (int id = Vocab::kReservedCount; id < v.size(); ++id) {
    CHECK(loaded.token(id) == v.token(id));
    CHECK(loaded.id(v.token(id)) == id);
  }

  SUBCASE("empty line rejected") {
    ioutil::atomic_write_file(path, "alpha\n\nbeta\n");
    CHECK_THROWS_AS(Vocab::load(path), IoError);
  }
  SUBCASE("reserved marker rejected") {
    ioutil::atomic_write_file(path, "alpha\n<unk>\n");
    CHECK_THROWS_AS(Vocab::load(path), IoError);
  }
  SUBCASE("missing file rejected") {
    CHECK_THROWS_AS(Vocab::load(dir.file("absent.txt")), IoError);
  }
}

TEST_CASE("bow vectors carry presence or counts and skip reserved ids") {
  Document doc;
  doc.ids = {4, 6, 6, Vocab::kUnk, 8};
  doc.raw_len = 5;

  const BowVector presence = to_bow(doc, 10, false);
  REQUIRE(presence.weights.size() == 10);
  CHECK(presence.weights[4] == 1.0);
  CHECK(presence.weights[6] == 1.0);
  CHECK(presence.weights[8] == 1.0);
  CHECK(presence.weights[Vocab::kUnk] == 0.0);
  CHECK(presence.distinct == 3);

  const BowVector counted = to_bow(doc, 10, true);
  CHECK(counted.weights[6] == 2.0);
  CHECK(counted.weights[4] == 1.0);
  CHECK(counted.distinct == 3);

  Document unk_only;
  unk_only.ids = {Vocab::kUnk, Vocab::kUnk};
  unk_only.raw_len = 2;
  CHECK_FALSE(has_content(unk_only));
  CHECK(has_content(doc));
  CHECK_THROWS_AS(to_bow(unk_only, 10), std::invalid_argument);
}

TEST_CASE("swap perturbation fires per adjacent pair and preserves tokens") {
  Document doc;
  doc.ids = {4, 5, 6, 7, 8};
  doc.raw_len = 5;

  Rng rng(3);
  const Document same = swap_perturb(doc, 0.0, rng);
  CHECK(same.ids == doc.ids);

  const Document flipped = swap_perturb(doc, 1.0, rng);
  CHECK(flipped.ids == std::vector<int>{5, 4, 7, 6, 8});
  CHECK(flipped.raw_len == doc.raw_len);

  // Intermediate p keeps the multiset and the trailing singleton.
  int changed = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const Document d = swap_perturb(doc, 0.5, rng);
    std::vector<int> sorted = d.ids;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{4, 5, 6, 7, 8});
    CHECK(d.ids[4] == 8);
    if (d.ids != doc.ids) ++changed;
  }
  // Two independent pairs at p = 0.5: 3/4 of draws change something.
  CHECK(changed > trials / 2);
  CHECK(changed < trials);

  Rng fresh(3);
  CHECK_THROWS_AS(swap_perturb(doc, -0.1, fresh), std::invalid_argument);
  CHECK_THROWS_AS(swap_perturb(doc, 1.5, fresh), std::invalid_argument);
}

TEST_CASE("corpus loading truncates, maps oov to unk, and counts empties") {
  TempDir dir;
  const std::string prefix = dir.file("tiny");
  ioutil::atomic_write_file(prefix + ".train",
                            "a b c d\na b\r\n\nb c e\n");
  ioutil::atomic_write_file(prefix + ".dev", "a z\n");
  ioutil::atomic_write_file(prefix + ".test", "e e e\n");

  const CorpusSplits splits = load_corpus(prefix, 100, 3);
  // b x3, a x2, c x2 in train (a seen before c), then d x1, e x1.
  CHECK(splits.vocab.id("b") == 4);
  CHECK(splits.vocab.id("a") == 5);
  CHECK(splits.vocab.id("c") == 6);

  REQUIRE(splits.train.size() == 3);  // the empty line is dropped
  CHECK(splits.skipped_lines == 1);
  CHECK(splits.train[0].ids.size() == 3);  // truncated from 4
  CHECK(splits.train[0].raw_len == 4);
  CHECK(splits.train[1].ids == std::vector<int>{5, 4});  // "a b", \r\n stripped

  REQUIRE(splits.dev.size() == 1);
  CHECK(splits.dev[0].ids == std::vector<int>{5, Vocab::kUnk});  // z is oov

  REQUIRE(splits.test.size() == 1);
  CHECK(splits.test[0].ids ==
        std::vector<int>{splits.vocab.id("e"), splits.vocab.id("e"),
                         splits.vocab.id("e")});

  CHECK_THROWS_AS(load_corpus(dir.file("absent"), 100, 3), IoError);

  ioutil::atomic_write_file(prefix + ".train", "\n\n\n");
  CHECK_THROWS_AS(load_corpus(prefix, 100, 3), IoError);
}

TEST_CASE("synthetic corpora are deterministic and carry their sidecars") {
  TempDir a, b;
  SynthParams params;
  params.latents = 4;
  params.train = 60;
  params.dev = 16;
  params.test = 16;

  for (const std::string kind : {"collapse", "topic"}) {
    CAPTURE(kind);
    const SynthInfo info_a = synth_corpus(kind, 99, params, a.path.string());
    const SynthInfo info_b = synth_corpus(kind, 99, params, b.path.string());
    CHECK(info_a.unigram_entropy == info_b.unigram_entropy);
    CHECK(info_a.conditional_entropy == info_b.conditional_entropy);
    // Conditioning on the latent strictly reduces per-token entropy.
    CHECK(info_a.unigram_entropy > info_a.conditional_entropy);

    for (const std::string split : {"train", "dev", "test"}) {
      const std::string name = "corpus." + split;
      CHECK(ioutil::read_file(a.file(name)) == ioutil::read_file(b.file(name)));
      const std::vector<std::string> sidecar =
          ioutil::read_lines(a.file(name + ".latents.csv"));
      CHECK(sidecar[0] == "example_index,latent_id");
      const int want = split == "train"  ? params.train
                       : split == "dev" ? params.dev
                                         : params.test;
      CHECK(static_cast<int>(sidecar.size()) == want + 1);
    }

    const SynthInfo shifted = synth_corpus(kind, 100, params, b.path.string());
    CHECK(ioutil::read_file(a.file("corpus.train")) !=
          ioutil::read_file(b.file("corpus.train")));
    (void)shifted;
  }

  CHECK_THROWS_AS(synth_corpus("unknown", 1, params, a.path.string()), ConfigError);
}

TEST_CASE("collapse documents share length and tokens across templates") {
  TempDir dir;
  SynthParams params;
  params.latents = 3;
  params.train = 120;
  params.dev = 20;
  params.test = 20;
  params.template_len = 6;
  synth_corpus("collapse", 7, params, dir.path.string());

  const CorpusSplits splits = load_corpus(dir.file("corpus"), 1000, 64);
  std::set<std::vector<int>> distinct_docs;
  for (const Document& doc : splits.train) {
    CHECK(static_cast<int>(doc.ids.size()) == params.template_len);
    distinct_docs.insert(doc.ids);
  }
  // Noise slots make many surface forms per template.
  CHECK(distinct_docs.size() > static_cast<std::size_t>(params.latents));
}

TEST_CASE("topic documents stay inside the configured length band") {
  TempDir dir;
  SynthParams params;
  params.latents = 3;
  params.train = 80;
  params.dev = 10;
  params.test = 10;
  params.doc_min = 5;
  params.doc_max = 9;
  synth_corpus("topic", 13, params, dir.path.string());

  const CorpusSplits splits = load_corpus(dir.file("corpus"), 1000, 64);
  for (const Document& doc : splits.train) {
    CHECK(doc.raw_len >= params.doc_min);
    CHECK(doc.raw_len <= params.doc_max);
  }
}
