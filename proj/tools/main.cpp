#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hvae/corpus.hpp"
#include "hvae/diagnostics.hpp"
#include "hvae/errors.hpp"
#include "hvae/ioutil.hpp"
#include "hvae/latent.hpp"
#include "hvae/models.hpp"
#include "hvae/probes.hpp"
#include "json.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hvae::cli {

namespace {

constexpr int kFormatVersion = 1;

// A run directory has one owner at a time; the lock names the pid so a
// stale lock after a crash is easy to identify and remove.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(dir + "/.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw IoError("run directory is locked; remove " + path_ + " if stale");
      }
      throw IoError("cannot create lock " + path_ + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // lock still holds; the pid note is best-effort
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

int env_threads() {
  const char* raw = std::getenv("HVAE_THREADS");
  if (!raw || !*raw) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 256) {
    throw ConfigError("HVAE_THREADS must be an integer in [1, 256]");
  }
  return static_cast<int>(v);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(text.substr(start));
      break;
    }
    parts.push_back(text.substr(start, comma - start));
    start = comma + 1;
  }
  return parts;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  for (const std::string& part : split_commas(text)) {
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (part.empty() || end != part.c_str() + part.size()) {
      throw ConfigError(std::string(what) + ": '" + part + "' is not a number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_doubles(text, what)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
      throw ConfigError(std::string(what) + ": expected integers");
    }
    out.push_back(i);
  }
  return out;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::span<const corpus::Document> pick_split(const corpus::CorpusSplits& splits,
                                             const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "dev") return splits.dev;
  if (name == "test") return splits.test;
  throw ConfigError("split must be train, dev, or test");
}

void write_text(const std::string& path_or_empty, const std::string& content) {
  if (path_or_empty.empty()) {
    std::cout << content;
  } else {
    ioutil::atomic_write_file(path_or_empty, content);
  }
}

std::string sibling_config(const std::string& checkpoint) {
  return (fs::path(checkpoint).parent_path() / "config.json").string();
}

json summary_json(const models::EvalSummary& summary) {
  json j;
  j["kl"] = summary.kl;
  j["recon_nll"] = summary.recon_nll;
  j["nll_bound"] = summary.nll_bound;
  j["perplexity"] = summary.perplexity;
  j["mean_kappa"] = summary.mean_kappa;
  j["tokens"] = summary.tokens;
  j["examples"] = summary.examples;
  j["skipped"] = summary.skipped;
  return j;
}

// ---- subcommand bodies -------------------------------------------------

struct SynthArgs {
  std::string kind;
  std::string out_dir;
  std::uint64_t seed = 1;
  corpus::SynthParams params;
};

void run_synth(const SynthArgs& args) {
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw IoError("cannot create " + args.out_dir + ": " + ec.message());
  DirLock lock(args.out_dir);
  const corpus::SynthInfo info =
      corpus::synth_corpus(args.kind, args.seed, args.params, args.out_dir);
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = args.kind;
  j["seed"] = args.seed;
  j["corpus"] = (fs::path(args.out_dir) / "corpus").string();
  j["unigram_entropy"] = info.unigram_entropy;
  j["conditional_entropy"] = info.conditional_entropy;
  std::cout << j.dump() << "\n";
}

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
};

void run_train(const TrainArgs& args) {
  const RunSpec spec = load_run_spec(args.config_path);
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw IoError("cannot create " + args.out_dir + ": " + ec.message());
  DirLock lock(args.out_dir);

  LoadedRun run = make_run(spec);
  const std::string checkpoint = (fs::path(args.out_dir) / "model.ckpt").string();
  const models::TrainResult result =
      models::train(*run.model, run.splits.train, run.splits.dev, spec.train, checkpoint);

  const std::string log_path = (fs::path(args.out_dir) / "train_log.csv").string();
  ioutil::atomic_write_file(log_path, result.log_csv);
  const std::string echo_path = (fs::path(args.out_dir) / "config.json").string();
  ioutil::atomic_write_file(echo_path, echo_run_spec(spec).dump(2) + "\n");

  json j;
  j["format_version"] = kFormatVersion;
  j["best_epoch"] = result.best_epoch;
  j["best_dev"] = summary_json(result.best_dev);
  j["checkpoint"] = checkpoint;
  j["log_csv"] = log_path;
  j["config_echo"] = echo_path;
  std::cout << j.dump() << "\n";
}

struct EvalArgs {
  std::string checkpoint;
  std::string config_path;  // defaults to config.json beside the checkpoint
  std::string split = "test";
  int samples = 8;
  std::uint64_t seed = 1234;
};

void run_eval(const EvalArgs& args) {
  if (args.split != "dev" && args.split != "test") {
    throw ConfigError("eval split must be dev or test");
  }
  const std::string config_path =
      args.config_path.empty() ? sibling_config(args.checkpoint) : args.config_path;
  const RunSpec spec = load_run_spec(config_path);
  LoadedRun run = make_run(spec);
  run.model->load_parameters(args.checkpoint);

  const models::EvalSummary summary =
      models::evaluate(*run.model, pick_split(run.splits, args.split), args.samples,
                       args.seed, env_threads());
  json j = summary_json(summary);
  j["format_version"] = kFormatVersion;
  j["split"] = args.split;
  j["samples"] = args.samples;
  j["seed"] = args.seed;
  std::cout << j.dump() << "\n";
}

struct KlTableArgs {
  std::string dims;
  std::string kappas;
  int samples = 100000;
  std::uint64_t seed = 1;
  std::string out;
};

void run_kl_table(const KlTableArgs& args) {
  const std::vector<int> dims = parse_ints(args.dims, "--dims");
  const std::vector<double> kappas = parse_doubles(args.kappas, "--kappas");
  const std::vector<probes::KappaStatRow> rows =
      probes::kappa_stats(dims, kappas, args.samples, args.seed);
  write_text(args.out, probes::kappa_stats_csv(rows));
}

struct SweepArgs {
  std::string config_path;
  std::string kappas;
  std::string out_dir;
};

void run_sweep(const SweepArgs& args) {
  const std::vector<double> kappas = parse_doubles(args.kappas, "--kappas");
  RunSpec spec = load_run_spec(args.config_path);
  if (spec.kind == ModelKind::kRnnlm) {
    throw ConfigError("sweep needs a latent model (nvdm or nvrnn)");
  }
  const bool vmf = spec.kind == ModelKind::kNvdm
                       ? spec.nvdm.family == models::Family::kVmf
                       : spec.nvrnn.family == models::Family::kVmf;
  if (!vmf) throw ConfigError("sweep varies kappa; config must use the vmf family");
  if (spec.kind == ModelKind::kNvrnn && spec.nvrnn.learn_kappa) {
    throw ConfigError("sweep varies a fixed kappa; disable learn_kappa");
  }

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw IoError("cannot create " + args.out_dir + ": " + ec.message());
  DirLock lock(args.out_dir);

  const int latent_dim =
      spec.kind == ModelKind::kNvdm ? spec.nvdm.latent_dim : spec.nvrnn.latent_dim;
  std::string csv = "kappa,analytic_kl,best_epoch,dev_kl,dev_recon,dev_nll_bound,dev_ppl\n";
  double best_kappa = 0.0;
  double best_nll = std::numeric_limits<double>::infinity();

  for (double kappa : kappas) {
    RunSpec point = spec;
    if (point.kind == ModelKind::kNvdm) {
      point.nvdm.kappa = kappa;
    } else {
      point.nvrnn.kappa = kappa;
    }
    const std::string subdir =
        (fs::path(args.out_dir) / ("kappa_" + format_g(kappa))).string();
    fs::create_directories(subdir, ec);
    if (ec) throw IoError("cannot create " + subdir + ": " + ec.message());

    LoadedRun run = make_run(point);
    const models::TrainResult result =
        models::train(*run.model, run.splits.train, run.splits.dev, point.train,
                      subdir + "/model.ckpt");
    ioutil::atomic_write_file(subdir + "/train_log.csv", result.log_csv);
    ioutil::atomic_write_file(subdir + "/config.json",
                              echo_run_spec(point).dump(2) + "\n");

    csv += format_g(kappa) + "," +
           format_g(latent::vmf_kl_uniform(latent_dim, kappa)) + "," +
           std::to_string(result.best_epoch) + "," + format_g(result.best_dev.kl) +
           "," + format_g(result.best_dev.recon_nll) + "," +
           format_g(result.best_dev.nll_bound) + "," +
           format_g(result.best_dev.perplexity) + "\n";
    if (result.best_dev.nll_bound < best_nll) {
      best_nll = result.best_dev.nll_bound;
      best_kappa = kappa;
    }
  }

  const std::string csv_path = (fs::path(args.out_dir) / "sweep.csv").string();
  ioutil::atomic_write_file(csv_path, csv);
  json j;
  j["format_version"] = kFormatVersion;
  j["best_kappa"] = best_kappa;
  j["best_dev_nll_bound"] = best_nll;
  j["rows"] = kappas.size();
  j["csv"] = csv_path;
  std::cout << j.dump() << "\n";
}

struct ProbeCommonArgs {
  std::string checkpoint;
  std::string config_path;
  std::string split = "test";
  std::uint64_t seed = 7;
  std::string out;
  bool untrained = false;
};

LoadedRun probe_model(const ProbeCommonArgs& args) {
  if (args.checkpoint.empty() && !args.untrained) {
    throw ConfigError("probe needs --checkpoint (or --untrained for the control)");
  }
  const std::string config_path = args.config_path.empty()
                                      ? sibling_config(args.checkpoint)
                                      : args.config_path;
  if (args.config_path.empty() && args.checkpoint.empty()) {
    throw ConfigError("probe with --untrained needs an explicit --config");
  }
  const RunSpec spec = load_run_spec(config_path);
  LoadedRun run = make_run(spec);
  if (!args.untrained) run.model->load_parameters(args.checkpoint);
  return run;
}

struct SwapArgs {
  ProbeCommonArgs common;
  std::string p_grid = "0,0.1,0.25,0.5,0.75,1";
  int repeats = 4;
};

void run_probe_swap(const SwapArgs& args) {
  const std::vector<double> grid = parse_doubles(args.p_grid, "--p-grid");
  LoadedRun run = probe_model(args.common);
  const std::vector<probes::SwapPoint> points =
      probes::swap_sensitivity(*run.model, pick_split(run.splits, args.common.split),
                               grid, args.repeats, args.common.seed, env_threads());
  write_text(args.common.out, probes::swap_csv(points));
}

struct BowArgs {
  ProbeCommonArgs common;
  std::string direction = "code_to_bow";
  int epochs = 200;
};

void run_probe_bow(const BowArgs& args) {
  LoadedRun run = probe_model(args.common);
  probes::ProbeConfig config;
  config.epochs = args.epochs;
  config.seed = args.common.seed;
  const bool count_bow = [&] {
    // presence/count scoring follows the model's own configuration
    const auto* nvdm = dynamic_cast<models::NvdmModel*>(run.model.get());
    return nvdm ? nvdm->config().count_bow : false;
  }();
  const probes::ProbeResult result = probes::bow_code_probe(
      *run.model, pick_split(run.splits, args.common.split), run.splits.vocab.size(),
      count_bow, probes::direction_from_string(args.direction), config);
  std::string csv = "direction,mean_cosine,best_epoch,n_train,n_examples,skipped\n";
  csv += std::string(probes::to_string(result.direction)) + "," +
         format_g(result.mean_cosine) + "," + std::to_string(result.best_epoch) + "," +
         std::to_string(result.n_train) + "," + std::to_string(result.n_examples) +
         "," + std::to_string(result.skipped) + "\n";
  write_text(args.common.out, csv);
}

void run_selftest() {
  const std::vector<diagnostics::SuiteResult> results = diagnostics::run_all();
  std::string failed;
  for (const auto& r : results) {
    std::cout << r.name << ": " << (r.passed ? "pass" : "FAIL") << " (" << r.detail
              << ")\n";
    if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.name;
  }
  if (!failed.empty()) throw NumericError("selftest failed: " + failed);
}

// ---- wiring -------------------------------------------------------------

void emit_error(int code, const char* kind, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  json j;
  j["error"] = {{"code", code}, {"kind", kind}, {"message", one_line}};
  std::cerr << j.dump() << "\n";
}

void add_probe_common(CLI::App* cmd, ProbeCommonArgs& args) {
  cmd->add_option("--checkpoint", args.checkpoint, "Trained model checkpoint");
  cmd->add_option("--config", args.config_path,
                  "Run config JSON (default: config.json beside the checkpoint)");
  cmd->add_option("--split", args.split, "Corpus split: train, dev, or test");
  cmd->add_option("--seed", args.seed, "Probe seed");
  cmd->add_option("--out", args.out, "Output CSV path (default: stdout)");
  cmd->add_flag("--untrained", args.untrained,
                "Use fresh seeded weights instead of the checkpoint (control run)");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Hyperspherical latent variable models: corpora, training, probes"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--kind", synth_args.kind, "collapse or topic")->required();
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--latents", synth_args.params.latents, "Template or topic count");
  synth->add_option("--train", synth_args.params.train, "Training examples");
  synth->add_option("--dev", synth_args.params.dev, "Dev examples");
  synth->add_option("--test", synth_args.params.test, "Test examples");
  synth->add_option("--template-len", synth_args.params.template_len,
                    "Tokens per collapse sentence");
  synth->add_option("--content-tokens", synth_args.params.content_tokens,
                    "Collapse content vocabulary");
  synth->add_option("--noise-tokens", synth_args.params.noise_tokens,
                    "Collapse noise vocabulary");
  synth->add_option("--noise", synth_args.params.noise,
                    "Collapse per-slot noise probability");
  synth->add_option("--topic-vocab", synth_args.params.topic_vocab,
                    "Topic vocabulary size");
  synth->add_option("--topic-sharpness", synth_args.params.topic_sharpness,
                    "Probability mass a topic keeps on its own block");
  synth->add_option("--doc-min", synth_args.params.doc_min, "Topic document min length");
  synth->add_option("--doc-max", synth_args.params.doc_max, "Topic document max length");
  synth->callback([&] { run_synth(synth_args); });

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", train_args.config_path, "Run config JSON")->required();
  train->add_option("--out", train_args.out_dir, "Run directory")->required();
  train->callback([&] { run_train(train_args); });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required();
  eval->add_option("--config", eval_args.config_path,
                   "Run config JSON (default: config.json beside the checkpoint)");
  eval->add_option("--split", eval_args.split, "dev or test");
  eval->add_option("--samples", eval_args.samples, "Monte Carlo draws per example");
  eval->add_option("--seed", eval_args.seed, "Evaluation seed");
  eval->callback([&] { run_eval(eval_args); });

  KlTableArgs kl_args;
  CLI::App* kl = app.add_subcommand("kl-table", "Concentration/KL/alignment table");
  kl->add_option("--dims", kl_args.dims, "Comma-separated dimensions")->required();
  kl->add_option("--kappas", kl_args.kappas, "Comma-separated concentrations")->required();
  kl->add_option("--samples", kl_args.samples, "Draws per (d, kappa) row");
  kl->add_option("--seed", kl_args.seed, "Sampling seed");
  kl->add_option("--out", kl_args.out, "Output CSV path (default: stdout)");
  kl->callback([&] { run_kl_table(kl_args); });

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "Train once per kappa, merge dev metrics");
  sweep->add_option("--config", sweep_args.config_path, "Run config JSON")->required();
  sweep->add_option("--kappas", sweep_args.kappas, "Comma-separated kappa grid")->required();
  sweep->add_option("--out", sweep_args.out_dir, "Sweep directory")->required();
  sweep->callback([&] { run_sweep(sweep_args); });

  CLI::App* probe = app.add_subcommand("probe", "Analysis passes over a trained model");
  probe->require_subcommand(1);

  SwapArgs swap_args;
  CLI::App* swap = probe->add_subcommand("swap", "Word-order swap sensitivity curve");
  add_probe_common(swap, swap_args.common);
  swap->add_option("--p-grid", swap_args.p_grid, "Comma-separated swap probabilities");
  swap->add_option("--repeats", swap_args.repeats, "Perturbations per document");
  swap->callback([&] { run_probe_swap(swap_args); });

  BowArgs bow_args;
  CLI::App* bow = probe->add_subcommand("bow", "Bag-of-words <-> latent-code readout");
  add_probe_common(bow, bow_args.common);
  bow->add_option("--direction", bow_args.direction, "code_to_bow or bow_to_code");
  bow->add_option("--epochs", bow_args.epochs, "Readout training epochs");
  bow->callback([&] { run_probe_bow(bow_args); });

  CLI::App* selftest =
      app.add_subcommand("selftest", "Numerical consistency suites; exit 0 iff green");
  selftest->callback([&] { run_selftest(); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error(2, "config", e.what());
    return 2;
  } catch (const ConfigError& e) {
    emit_error(2, "config", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    emit_error(2, "config", e.what());
    return 2;
  } catch (const NumericError& e) {
    emit_error(3, "numerical", e.what());
    return 3;
  } catch (const IoError& e) {
    emit_error(4, "io", e.what());
    return 4;
  } catch (const json::exception& e) {
    emit_error(2, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error(1, "internal", e.what());
    return 1;
  }
}

}  // namespace hvae::cli

int main(int argc, char** argv) { return hvae::cli::run_cli(argc, argv); }
