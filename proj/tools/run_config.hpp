#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "hvae/corpus.hpp"
#include "hvae/models.hpp"
#include "json.hpp"

// JSON run configuration shared by train, eval, sweep, and the probes.
// Strict: unknown keys anywhere in the document are rejected before any
// work starts, so a typo cannot silently fall back to a default.

namespace hvae::cli {

enum class ModelKind { kNvdm, kNvrnn, kRnnlm };

const char* to_string(ModelKind kind);

struct RunSpec {
  ModelKind kind = ModelKind::kNvdm;
  std::string corpus_prefix;
  int vocab_cap = 10000;
  int max_len = 60;
  std::uint64_t model_seed = 1;
  models::NvdmConfig nvdm;    // vocab_size filled from the corpus
  models::NvrnnConfig nvrnn;  // likewise
  models::TrainConfig train;
};

// Parses and validates a config document. Throws ConfigError on unknown
// keys, wrong types, or inconsistent values.
RunSpec parse_run_spec(const nlohmann::json& j);

// Reads and parses a config file (IoError / ConfigError).
RunSpec load_run_spec(const std::string& path);

// The run spec normalized back to JSON with every default filled in,
// written beside training outputs so a run is reproducible from its
// artifacts.
nlohmann::json echo_run_spec(const RunSpec& spec);

struct LoadedRun {
  corpus::CorpusSplits splits;
  std::unique_ptr<models::Model> model;
};

// Loads the corpus named by the run spec and builds the configured model
// with fresh seeded weights (no checkpoint applied).
LoadedRun make_run(const RunSpec& spec);

}  // namespace hvae::cli
