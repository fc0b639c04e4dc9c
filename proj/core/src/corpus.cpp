#include "hvae/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "hvae/errors.hpp"
#include "hvae/ioutil.hpp"

namespace hvae::corpus {

namespace {

const char* kReservedNames[Vocab::kReservedCount] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_reserved_name(const std::string& token) {
  for (const char* name : kReservedNames) {
    if (token == name) return true;
  }
  return false;
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const auto idx = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(n));
  return std::min(idx, n - 1);
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

}  // namespace

Vocab::Vocab() {
  for (const char* name : kReservedNames) push_token(name);
}

void Vocab::push_token(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& documents, int vocab_cap) {
  if (vocab_cap < 1) throw ConfigError("vocab cap must be >= 1");

  struct Stat {
    long count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::size_t position = 0;
  for (const auto& doc : documents) {
    for (const auto& token : doc) {
      if (is_reserved_name(token)) continue;
      auto [it, inserted] = stats.try_emplace(token);
      if (inserted) it->second.first_seen = position;
      ++it->second.count;
      ++position;
    }
  }

  std::vector<const std::pair<const std::string, Stat>*> order;
  order.reserve(stats.size());
  for (const auto& entry : stats) order.push_back(&entry);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->second.count != b->second.count) return a->second.count > b->second.count;
    return a->second.first_seen < b->second.first_seen;
  });
  if (static_cast<int>(order.size()) > vocab_cap) order.resize(vocab_cap);

  Vocab vocab;
  for (const auto* entry : order) vocab.push_token(entry->first);
  return vocab;
}

Vocab Vocab::load(const std::string& path) {
  Vocab vocab;
  for (const std::string& line : ioutil::read_lines(path)) {
    if (line.empty()) throw IoError("vocab file has an empty line: " + path);
    if (is_reserved_name(line)) throw IoError("vocab file lists a reserved marker: " + path);
    vocab.push_token(line);
  }
  return vocab;
}

void Vocab::save(const std::string& path) const {
  std::string content;
  for (int i = kReservedCount; i < size(); ++i) {
    content += id_to_token_[i];
    content += '\n';
  }
  ioutil::atomic_write_file(path, content);
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(std::move(token));
  return tokens;
}

namespace {

std::vector<Document> to_documents(const std::vector<std::vector<std::string>>& docs,
                                   const Vocab& vocab, int max_len) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& tokens : docs) {
    Document doc;
    doc.raw_len = static_cast<int>(tokens.size());
    const int keep = std::min<int>(max_len, doc.raw_len);
    doc.ids.reserve(keep);
    for (int i = 0; i < keep; ++i) doc.ids.push_back(vocab.id(tokens[i]));
    out.push_back(std::move(doc));
  }
  return out;
}

std::vector<std::vector<std::string>> read_tokenized(const std::string& path,
                                                     int* skipped) {
  std::vector<std::vector<std::string>> docs;
  for (const std::string& line : ioutil::read_lines(path)) {
    std::vector<std::string> tokens = tokenize(line);
    if (tokens.empty()) {
      ++*skipped;
      continue;
    }
    docs.push_back(std::move(tokens));
  }
  if (docs.empty()) throw IoError("empty corpus file: " + path);
  return docs;
}

}  // namespace

CorpusSplits load_corpus(const std::string& path_prefix, int vocab_cap, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  CorpusSplits splits;
  auto train_tokens = read_tokenized(path_prefix + ".train", &splits.skipped_lines);
  auto dev_tokens = read_tokenized(path_prefix + ".dev", &splits.skipped_lines);
  auto test_tokens = read_tokenized(path_prefix + ".test", &splits.skipped_lines);

  splits.vocab = Vocab::build(train_tokens, vocab_cap);
  splits.train = to_documents(train_tokens, splits.vocab, max_len);
  splits.dev = to_documents(dev_tokens, splits.vocab, max_len);
  splits.test = to_documents(test_tokens, splits.vocab, max_len);
  return splits;
}

BowVector to_bow(const Document& doc, const Vocab& vocab, bool counts) {
  return to_bow(doc, vocab.size(), counts);
}

BowVector to_bow(const Document& doc, int vocab_size, bool counts) {
  BowVector bow;
  bow.weights.assign(static_cast<std::size_t>(vocab_size), 0.0);
  for (int id : doc.ids) {
    if (id < Vocab::kReservedCount) continue;
    auto& w = bow.weights[static_cast<std::size_t>(id)];
    if (w == 0.0) ++bow.distinct;
    if (counts) {
      w += 1.0;
    } else {
      w = 1.0;
    }
  }
  if (bow.distinct == 0) {
    throw std::invalid_argument("document has no in-vocabulary token");
  }
  return bow;
}

bool has_content(const Document& doc) {
  for (int id : doc.ids) {
    if (id >= Vocab::kReservedCount) return true;
  }
  return false;
}

Document swap_perturb(const Document& doc, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("swap probability outside [0,1]");
  Document out = doc;
  for (std::size_t i = 0; i + 1 < out.ids.size(); i += 2) {
    if (rng.uniform() < p) std::swap(out.ids[i], out.ids[i + 1]);
  }
  return out;
}

namespace {

struct SplitPlan {
  const char* name;
  int count;
  std::uint64_t stream;
};

void validate_common(const SynthParams& params) {
  if (params.latents < 1) throw ConfigError("synth: latents must be >= 1");
  if (params.train < 1 || params.dev < 1 || params.test < 1) {
    throw ConfigError("synth: every split needs at least one example");
  }
}

// Each latent is a distinct ordering of content tokens; any single token is
// shared across most latents, so identity lives in the arrangement.
std::vector<std::vector<int>> draw_templates(const SynthParams& params, Rng& rng) {
  std::vector<std::vector<int>> templates;
  templates.reserve(static_cast<std::size_t>(params.latents));
  for (int k = 0; k < params.latents; ++k) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<int> pool(static_cast<std::size_t>(params.content_tokens));
      for (int i = 0; i < params.content_tokens; ++i) pool[static_cast<std::size_t>(i)] = i;
      for (int i = params.content_tokens - 1; i > 0; --i) {
        const auto j = uniform_index(rng, static_cast<std::uint64_t>(i) + 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      }
      pool.resize(static_cast<std::size_t>(params.template_len));
      if (std::find(templates.begin(), templates.end(), pool) == templates.end()) {
        templates.push_back(std::move(pool));
        break;
      }
    }
    if (static_cast<int>(templates.size()) != k + 1) {
      throw ConfigError("synth: could not draw distinct templates; too few content tokens");
    }
  }
  return templates;
}

SynthInfo collapse_entropies(const SynthParams& params,
                             const std::vector<std::vector<int>>& templates) {
  const double p = params.noise;
  const double n_noise = static_cast<double>(params.noise_tokens);

  SynthInfo info;
  if (p > 0.0) info.conditional_entropy -= p * std::log(p / n_noise);
  if (p < 1.0) info.conditional_entropy -= (1.0 - p) * std::log(1.0 - p);

  const double slots = static_cast<double>(params.latents * params.template_len);
  std::vector<double> marginal(static_cast<std::size_t>(params.content_tokens), 0.0);
  for (const auto& tmpl : templates) {
    for (int tok : tmpl) marginal[static_cast<std::size_t>(tok)] += (1.0 - p) / slots;
  }
  marginal.insert(marginal.end(), static_cast<std::size_t>(params.noise_tokens),
                  p / n_noise);
  info.unigram_entropy = entropy(marginal);
  return info;
}

SynthInfo write_collapse(const SynthParams& params, std::uint64_t seed,
                         const std::string& out_dir) {
  if (params.template_len < 2 || params.template_len > params.content_tokens) {
    throw ConfigError("synth: template_len must be in [2, content_tokens]");
  }
  if (params.noise < 0.0 || params.noise >= 1.0) {
    throw ConfigError("synth: noise must be in [0, 1)");
  }
  if (params.noise_tokens < 1) throw ConfigError("synth: noise_tokens must be >= 1");

  Rng template_rng(Rng::derive(seed, 0));
  const auto templates = draw_templates(params, template_rng);

  const SplitPlan plans[] = {{"train", params.train, 1},
                             {"dev", params.dev, 2},
                             {"test", params.test, 3}};
  for (const SplitPlan& plan : plans) {
    Rng rng(Rng::derive(seed, plan.stream));
    std::string text;
    std::string sidecar = "example_index,latent_id\n";
    for (int i = 0; i < plan.count; ++i) {
      const auto k = uniform_index(rng, static_cast<std::uint64_t>(params.latents));
      for (int j = 0; j < params.template_len; ++j) {
        if (j > 0) text += ' ';
        if (rng.uniform() < params.noise) {
          text += 'n';
          text += std::to_string(uniform_index(rng, static_cast<std::uint64_t>(params.noise_tokens)));
        } else {
          text += 'c';
          text += std::to_string(templates[k][static_cast<std::size_t>(j)]);
        }
      }
      text += '\n';
      sidecar += std::to_string(i) + ',' + std::to_string(k) + '\n';
    }
    const std::string base = out_dir + "/corpus." + plan.name;
    ioutil::atomic_write_file(base, text);
    ioutil::atomic_write_file(base + ".latents.csv", sidecar);
  }
  return collapse_entropies(params, templates);
}

SynthInfo write_topic(const SynthParams& params, std::uint64_t seed,
                      const std::string& out_dir) {
  if (params.topic_vocab < params.latents) {
    throw ConfigError("synth: topic_vocab must be >= latents");
  }
  if (params.topic_sharpness < 0.0 || params.topic_sharpness > 1.0) {
    throw ConfigError("synth: topic_sharpness must be in [0, 1]");
  }
  if (params.doc_min < 1 || params.doc_max < params.doc_min) {
    throw ConfigError("synth: need 1 <= doc_min <= doc_max");
  }

  const int v = params.topic_vocab;
  const int k_count = params.latents;
  // Block sizes differ by at most one when latents does not divide the vocab.
  std::vector<std::vector<double>> topic(static_cast<std::size_t>(k_count),
                                         std::vector<double>(static_cast<std::size_t>(v)));
  int start = 0;
  for (int k = 0; k < k_count; ++k) {
    const int block = v / k_count + (k < v % k_count ? 1 : 0);
    for (int t = 0; t < v; ++t) {
      topic[k][static_cast<std::size_t>(t)] = (1.0 - params.topic_sharpness) / v;
    }
    for (int t = start; t < start + block; ++t) {
      topic[k][static_cast<std::size_t>(t)] += params.topic_sharpness / block;
    }
    start += block;
  }

  std::vector<std::vector<double>> cdf(topic.size());
  for (std::size_t k = 0; k < topic.size(); ++k) {
    cdf[k].resize(topic[k].size());
    double acc = 0.0;
    for (std::size_t t = 0; t < topic[k].size(); ++t) {
      acc += topic[k][t];
      cdf[k][t] = acc;
    }
    cdf[k].back() = 1.0;
  }

  const SplitPlan plans[] = {{"train", params.train, 1},
                             {"dev", params.dev, 2},
                             {"test", params.test, 3}};
  for (const SplitPlan& plan : plans) {
    Rng rng(Rng::derive(seed, plan.stream));
    std::string text;
    std::string sidecar = "example_index,latent_id\n";
    for (int i = 0; i < plan.count; ++i) {
      const auto k = uniform_index(rng, static_cast<std::uint64_t>(k_count));
      const auto span = static_cast<std::uint64_t>(params.doc_max - params.doc_min + 1);
      const int len = params.doc_min + static_cast<int>(uniform_index(rng, span));
      for (int j = 0; j < len; ++j) {
        if (j > 0) text += ' ';
        const double u = rng.uniform();
        const auto it = std::lower_bound(cdf[k].begin(), cdf[k].end(), u);
        text += 'w';
        text += std::to_string(it - cdf[k].begin());
      }
      text += '\n';
      sidecar += std::to_string(i) + ',' + std::to_string(k) + '\n';
    }
    const std::string base = out_dir + "/corpus." + plan.name;
    ioutil::atomic_write_file(base, text);
    ioutil::atomic_write_file(base + ".latents.csv", sidecar);
  }

  SynthInfo info;
  std::vector<double> marginal(static_cast<std::size_t>(v), 0.0);
  for (int k = 0; k < k_count; ++k) {
    info.conditional_entropy += entropy(topic[static_cast<std::size_t>(k)]) / k_count;
    for (int t = 0; t < v; ++t) {
      marginal[static_cast<std::size_t>(t)] += topic[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)] / k_count;
    }
  }
  info.unigram_entropy = entropy(marginal);
  return info;
}

}  // namespace

SynthInfo synth_corpus(const std::string& kind, std::uint64_t seed,
                       const SynthParams& params, const std::string& out_dir) {
  validate_common(params);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  if (kind == "collapse") return write_collapse(params, seed, out_dir);
  if (kind == "topic") return write_topic(params, seed, out_dir);
  throw ConfigError("unknown synthetic corpus kind: " + kind);
}

}  // namespace hvae::corpus
