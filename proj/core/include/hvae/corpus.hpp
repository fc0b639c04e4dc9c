#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hvae/rng.hpp"

// Corpus ingestion, vocabulary construction, bag-of-words derivation, the
// synthetic datasets the trainers run on, and the adjacent-pair word swap
// used by the order-sensitivity probe.

namespace hvae::corpus {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReservedCount = 4;

  // Frequency order, ties broken by first occurrence, capped at the
  // vocab_cap most frequent tokens (reserved ids not counted in the cap).
  static Vocab build(const std::vector<std::vector<std::string>>& documents,
                     int vocab_cap);

  // One non-reserved token per line, line number = id - 4.
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  Vocab();  // just the reserved markers

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;  // index 0..3 are reserved markers

  void push_token(const std::string& token);
};

// Token id sequence without boundary markers. UNK is the only reserved id
// that may appear. raw_len counts source tokens before truncation.
struct Document {
  std::vector<int> ids;
  int raw_len = 0;
};

struct CorpusSplits {
  Vocab vocab;
  std::vector<Document> train;
  std::vector<Document> dev;
  std::vector<Document> test;
  int skipped_lines = 0;  // empty lines dropped during ingestion
};

// Reads path.train / path.dev / path.test (UTF-8, one whitespace-tokenized
// example per line). The vocabulary is built from the train split only;
// out-of-vocabulary tokens map to UNK; sequences are truncated to max_len.
CorpusSplits load_corpus(const std::string& path_prefix, int vocab_cap, int max_len);

// Tokens of one line, split on blanks.
std::vector<std::string> tokenize(const std::string& line);

// weights over the vocabulary: occurrence indicator by default, occurrence
// counts when counts = true. Reserved ids (UNK included) stay 0.
struct BowVector {
  std::vector<double> weights;
  int distinct = 0;  // in-vocabulary distinct tokens
};

// Throws std::invalid_argument when no in-vocabulary token remains (such
// documents are rejected before bag-of-words training).
BowVector to_bow(const Document& doc, const Vocab& vocab, bool counts = false);
BowVector to_bow(const Document& doc, int vocab_size, bool counts = false);

// True when the document contains at least one non-reserved token.
bool has_content(const Document& doc);

// Swaps the disjoint adjacent pairs (0,1), (2,3), ... each independently
// with probability p. Length and token multiset are preserved.
Document swap_perturb(const Document& doc, double p, Rng& rng);

struct SynthParams {
  int latents = 6;       // template count (collapse) or topic count (topic)
  int train = 600;
  int dev = 120;
  int test = 120;
  // collapse kind
  int template_len = 8;
  int content_tokens = 10;
  int noise_tokens = 20;
  double noise = 0.3;    // per-slot probability of a noise token
  // topic kind
  int topic_vocab = 60;
  double topic_sharpness = 0.8;  // probability mass a topic keeps on its own block
  int doc_min = 18;
  int doc_max = 36;
};

// Exact per-token entropies (nats) of the generating distributions:
// marginal over latents versus conditioned on the latent id. Computed from
// the generator's own tables, not from samples.
struct SynthInfo {
  double unigram_entropy = 0.0;
  double conditional_entropy = 0.0;
};

// Writes <out_dir>/corpus.{train,dev,test} plus a sidecar
// <out_dir>/corpus.<split>.latents.csv (header example_index,latent_id)
// recording the latent id that generated each example. Identical seeds
// give byte-identical files.
//
// kind "collapse": each latent is a fixed ordering of shared content
// tokens with noise slots, so the latent is recoverable only from global
// sentence structure, never from any single token.
// kind "topic": each latent is a multinomial over a shared vocabulary,
// concentrated on its own token block; documents draw tokens iid.
SynthInfo synth_corpus(const std::string& kind, std::uint64_t seed,
                       const SynthParams& params, const std::string& out_dir);

}  // namespace hvae::corpus
