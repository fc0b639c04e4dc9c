#include "run_config.hpp"

#include <initializer_list>
#include <set>

#include "hvae/errors.hpp"
#include "hvae/ioutil.hpp"

namespace hvae::cli {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
T take(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad type for '") + key + "' in " + where);
  }
}

std::string take_string(const json& j, const char* key, const std::string& where,
                        const std::string& fallback) {
  return take<std::string>(j, key, where, fallback);
}

models::AnnealSchedule parse_anneal(const json& j) {
  models::AnnealSchedule schedule;
  reject_unknown_keys(j, "train.anneal", {"kind", "warm_epochs", "weight"});
  schedule.kind = models::anneal_kind_from_string(
      take_string(j, "kind", "train.anneal", "none"));
  schedule.warm_epochs = take<int>(j, "warm_epochs", "train.anneal", schedule.warm_epochs);
  schedule.weight = take<double>(j, "weight", "train.anneal", schedule.weight);
  return schedule;
}

models::TrainConfig parse_train(const json& j) {
  models::TrainConfig config;
  reject_unknown_keys(j, "train",
                      {"epochs", "learning_rate", "lr_decay", "patience", "clip_norm",
                       "seed", "anneal"});
  config.epochs = take<int>(j, "epochs", "train", config.epochs);
  config.learning_rate = take<double>(j, "learning_rate", "train", config.learning_rate);
  config.lr_decay = take<double>(j, "lr_decay", "train", config.lr_decay);
  config.patience = take<int>(j, "patience", "train", config.patience);
  config.clip_norm = take<double>(j, "clip_norm", "train", config.clip_norm);
  config.seed = take<std::uint64_t>(j, "seed", "train", config.seed);
  if (j.contains("anneal")) config.anneal = parse_anneal(j.at("anneal"));
  return config;
}

models::NvdmConfig parse_nvdm(const json& j) {
  models::NvdmConfig config;
  reject_unknown_keys(j, "nvdm", {"hidden", "latent_dim", "family", "kappa", "count_bow"});
  config.hidden = take<int>(j, "hidden", "nvdm", config.hidden);
  config.latent_dim = take<int>(j, "latent_dim", "nvdm", config.latent_dim);
  config.family = models::family_from_string(
      take_string(j, "family", "nvdm", models::to_string(config.family)));
  config.kappa = take<double>(j, "kappa", "nvdm", config.kappa);
  config.count_bow = take<bool>(j, "count_bow", "nvdm", config.count_bow);
  return config;
}

models::NvrnnConfig parse_nvrnn(const json& j) {
  models::NvrnnConfig config;
  reject_unknown_keys(j, "nvrnn",
                      {"embed_dim", "hidden", "latent_dim", "family", "kappa", "setting",
                       "learn_kappa", "kappa_clip", "zero_latent"});
  config.embed_dim = take<int>(j, "embed_dim", "nvrnn", config.embed_dim);
  config.hidden = take<int>(j, "hidden", "nvrnn", config.hidden);
  config.latent_dim = take<int>(j, "latent_dim", "nvrnn", config.latent_dim);
  config.family = models::family_from_string(
      take_string(j, "family", "nvrnn", models::to_string(config.family)));
  config.kappa = take<double>(j, "kappa", "nvrnn", config.kappa);
  config.setting = models::setting_from_string(
      take_string(j, "setting", "nvrnn", models::to_string(config.setting)));
  config.learn_kappa = take<bool>(j, "learn_kappa", "nvrnn", config.learn_kappa);
  config.zero_latent = take<bool>(j, "zero_latent", "nvrnn", config.zero_latent);
  if (j.contains("kappa_clip")) {
    const json& clip = j.at("kappa_clip");
    if (!clip.is_array() || clip.size() != 2 || !clip[0].is_number() ||
        !clip[1].is_number()) {
      throw ConfigError("nvrnn.kappa_clip must be [low, high]");
    }
    config.kappa_clip_low = clip[0].get<double>();
    config.kappa_clip_high = clip[1].get<double>();
  }
  return config;
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNvdm: return "nvdm";
    case ModelKind::kNvrnn: return "nvrnn";
    case ModelKind::kRnnlm: return "rnnlm";
  }
  return "nvdm";
}

RunSpec parse_run_spec(const nlohmann::json& j) {
  RunSpec spec;
  reject_unknown_keys(j, "config",
                      {"model", "corpus", "vocab_cap", "max_len", "model_seed", "nvdm",
                       "nvrnn", "train"});

  const std::string kind = take_string(j, "model", "config", "");
  if (kind == "nvdm") {
    spec.kind = ModelKind::kNvdm;
  } else if (kind == "nvrnn") {
    spec.kind = ModelKind::kNvrnn;
  } else if (kind == "rnnlm") {
    spec.kind = ModelKind::kRnnlm;
  } else {
    throw ConfigError("config.model must be one of nvdm, nvrnn, rnnlm");
  }

  spec.corpus_prefix = take_string(j, "corpus", "config", "");
  if (spec.corpus_prefix.empty()) {
    throw ConfigError("config.corpus (path prefix) is required");
  }
  spec.vocab_cap = take<int>(j, "vocab_cap", "config", spec.vocab_cap);
  spec.max_len = take<int>(j, "max_len", "config", spec.max_len);
  spec.model_seed = take<std::uint64_t>(j, "model_seed", "config", spec.model_seed);

  const bool wants_nvdm = spec.kind == ModelKind::kNvdm;
  if (j.contains("nvdm") && !wants_nvdm) {
    throw ConfigError("config.nvdm block given for a non-nvdm model");
  }
  if (j.contains("nvrnn") && wants_nvdm) {
    throw ConfigError("config.nvrnn block given for an nvdm model");
  }
  if (wants_nvdm) {
    spec.nvdm = parse_nvdm(j.contains("nvdm") ? j.at("nvdm") : json::object());
  } else {
    spec.nvrnn = parse_nvrnn(j.contains("nvrnn") ? j.at("nvrnn") : json::object());
    if (spec.kind == ModelKind::kRnnlm &&
        spec.nvrnn.setting != models::NvrnnSetting::kStandard) {
      throw ConfigError("rnnlm uses the standard decoder setting");
    }
  }
  spec.train =
      parse_train(j.contains("train") ? j.at("train") : json::object());
  spec.train.validate();
  spec.train.anneal.validate();
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  const std::string text = ioutil::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_spec(j);
}

nlohmann::json echo_run_spec(const RunSpec& spec) {
  nlohmann::json j;
  j["model"] = to_string(spec.kind);
  j["corpus"] = spec.corpus_prefix;
  j["vocab_cap"] = spec.vocab_cap;
  j["max_len"] = spec.max_len;
  j["model_seed"] = spec.model_seed;
  if (spec.kind == ModelKind::kNvdm) {
    nlohmann::json m;
    m["hidden"] = spec.nvdm.hidden;
    m["latent_dim"] = spec.nvdm.latent_dim;
    m["family"] = models::to_string(spec.nvdm.family);
    m["kappa"] = spec.nvdm.kappa;
    m["count_bow"] = spec.nvdm.count_bow;
    j["nvdm"] = m;
  } else {
    nlohmann::json m;
    m["embed_dim"] = spec.nvrnn.embed_dim;
    m["hidden"] = spec.nvrnn.hidden;
    m["latent_dim"] = spec.nvrnn.latent_dim;
    m["family"] = models::to_string(spec.nvrnn.family);
    m["kappa"] = spec.nvrnn.kappa;
    m["setting"] = models::to_string(spec.nvrnn.setting);
    m["learn_kappa"] = spec.nvrnn.learn_kappa;
    m["kappa_clip"] = {spec.nvrnn.kappa_clip_low, spec.nvrnn.kappa_clip_high};
    m["zero_latent"] = spec.nvrnn.zero_latent;
    j["nvrnn"] = m;
  }
  nlohmann::json t;
  t["epochs"] = spec.train.epochs;
  t["learning_rate"] = spec.train.learning_rate;
  t["lr_decay"] = spec.train.lr_decay;
  t["patience"] = spec.train.patience;
  t["clip_norm"] = spec.train.clip_norm;
  t["seed"] = spec.train.seed;
  nlohmann::json a;
  a["kind"] = models::to_string(spec.train.anneal.kind);
  a["warm_epochs"] = spec.train.anneal.warm_epochs;
  a["weight"] = spec.train.anneal.weight;
  t["anneal"] = a;
  j["train"] = t;
  return j;
}

LoadedRun make_run(const RunSpec& spec) {
  LoadedRun run;
  run.splits = corpus::load_corpus(spec.corpus_prefix, spec.vocab_cap, spec.max_len);
  const int vocab_size = run.splits.vocab.size();
  switch (spec.kind) {
    case ModelKind::kNvdm: {
      models::NvdmConfig config = spec.nvdm;
      config.vocab_size = vocab_size;
      run.model = std::make_unique<models::NvdmModel>(config, spec.model_seed);
      break;
    }
    case ModelKind::kNvrnn: {
      models::NvrnnConfig config = spec.nvrnn;
      config.vocab_size = vocab_size;
      run.model = std::make_unique<models::NvrnnModel>(config, spec.model_seed);
      break;
    }
    case ModelKind::kRnnlm: {
      models::NvrnnConfig config = spec.nvrnn;
      config.vocab_size = vocab_size;
      run.model = std::make_unique<models::RnnlmModel>(config, spec.model_seed);
      break;
    }
  }
  return run;
}

}  // namespace hvae::cli
