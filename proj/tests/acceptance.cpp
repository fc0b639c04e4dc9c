// Acceptance runner: one line per criterion, exit 0 iff all pass. Each
// criterion retrains or rechecks from the shipped seeds, so a pass is
// reproducible bit for bit on the same platform.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "hvae/corpus.hpp"
#include "hvae/diagnostics.hpp"
#include "hvae/errors.hpp"
#include "hvae/latent.hpp"
#include "hvae/models.hpp"
#include "hvae/probes.hpp"
#include "hvae/rng.hpp"
#include "hvae/specialfn.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "support/checks.hpp"
#include "support/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hvae;

namespace {

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Shared artifacts flowing between criteria: corpora are synthesized once,
// the collapse vMF model is reused by the probe and determinism criteria,
// and the sweep's best bound anchors the learned-kappa comparison.
struct Context {
  fs::path work;
  fs::path hvae_bin;
  fs::path config_dir;

  std::string collapse_prefix;
  std::string topic_prefix;
  std::string topic_k1_prefix;

  double annealed_best_nll = 0.0;
  std::string vmf_checkpoint;
  double sweep_best_nll = 0.0;
  double sweep_best_kappa = 0.0;
};

json load_config(const Context& ctx, const std::string& name,
                 const std::string& corpus_prefix) {
  std::ifstream in(ctx.config_dir / name);
  if (!in) throw IoError("missing shipped config: " + name);
  json j = json::parse(in);
  j["corpus"] = corpus_prefix;
  return j;
}

struct CsvRow {
  int epoch = 0;
  std::string split;
  double kl = 0.0;
  double nll_bound = 0.0;
};

std::vector<CsvRow> parse_log(const std::string& csv) {
  std::vector<CsvRow> rows;
  std::size_t pos = csv.find('\n');  // skip header
  while (pos != std::string::npos && pos + 1 < csv.size()) {
    const std::size_t end = csv.find('\n', pos + 1);
    const std::string line = csv.substr(pos + 1, end - pos - 1);
    pos = end;
    if (line.empty()) continue;
    CsvRow row;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    row.epoch = std::atoi(fields.at(0).c_str());
    row.split = fields.at(1);
    row.kl = std::atof(fields.at(2).c_str());
    row.nll_bound = std::atof(fields.at(4).c_str());
    rows.push_back(row);
  }
  return rows;
}

double final_dev_kl(const std::string& csv) {
  const auto rows = parse_log(csv);
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->split == "dev") return it->kl;
  }
  throw std::runtime_error("no dev rows in training log");
}

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

// ---- criteria ------------------------------------------------------------

Outcome special_functions(Context&) {
  const double kappas[] = {1e-3, 0.1, 1.0, 10.0, 80.0, 150.0, 500.0};
  const double orders[] = {0.0, 0.5, 1.0, 11.5, 24.0, 99.0};
  double worst = 0.0;
  for (double kappa : kappas) {
    for (double v : orders) {
      const double got = specialfn::log_bessel_i(v, kappa).log_value;
      const double want = static_cast<double>(testsupport::log_bessel_series(v, kappa));
      const double rel = std::fabs(got - want) /
                         std::max({std::fabs(want), std::fabs(got), 1e-300});
      worst = std::max(worst, rel);
    }
  }
  if (worst >= 1e-8) return {false, fmt("oracle grid rel %.3g >= 1e-8", worst)};
  const diagnostics::SuiteResult recurrence = diagnostics::bessel_recurrence_suite();
  if (!recurrence.passed) return {false, "recurrence/overlap: " + recurrence.detail};
  return {true, fmt("oracle grid rel %.2g; %s", worst, recurrence.detail.c_str())};
}

Outcome kl_correctness(Context&) {
  for (int d = 2; d <= 200; ++d) {
    if (latent::vmf_kl_uniform(d, 0.0) != 0.0) {
      return {false, fmt("kl(d=%d, 0) != 0", d)};
    }
  }
  // concentration/KL figure grid: dims 25, 50, 100 by kappa 20..160
  for (int d : {25, 50, 100}) {
    double previous = latent::vmf_kl_uniform(d, 20.0);
    for (double kappa = 40.0; kappa <= 160.0; kappa += 20.0) {
      const double current = latent::vmf_kl_uniform(d, kappa);
      if (!(current > previous)) {
        return {false, fmt("kl not strictly increasing at d=%d kappa=%g", d, kappa)};
      }
      previous = current;
    }
  }
  double worst = 0.0;
  for (int d : {2, 3, 4, 8, 25, 200}) {
    for (double kappa : {0.1, 0.5, 2.0, 10.0, 40.0, 100.0, 250.0}) {
      const double h = 1e-5 * std::max(1.0, kappa);
      const double fd =
          (latent::vmf_kl_uniform(d, kappa + h) - latent::vmf_kl_uniform(d, kappa - h)) /
          (2.0 * h);
      const double grad = latent::vmf_kl_kappa_gradient(d, kappa);
      const double rel =
          std::fabs(fd - grad) / std::max({std::fabs(fd), std::fabs(grad), 1e-10});
      worst = std::max(worst, rel);
    }
  }
  if (worst >= 1e-4) return {false, fmt("gradient FD rel %.3g >= 1e-4", worst)};
  return {true, fmt("zero at 199 dims; monotone on figure grid; grad FD rel %.2g", worst)};
}

Outcome sampler_suite(Context&) {
  double worst_ks_ratio = 0.0, worst_mean_sigmas = 0.0, worst_norm = 0.0;
  for (int d : {3, 10, 50}) {
    for (double kappa : {0.5, 10.0, 100.0}) {
      const auto check = testsupport::check_sampler(
          d, kappa, 100000, Rng::derive(20240817, static_cast<std::uint64_t>(d * 1000) +
                                                      static_cast<std::uint64_t>(kappa)));
      if (!check.pass()) {
        return {false, fmt("(d=%d, kappa=%g): ks %.3g vs %.3g, mean %.2f sigma, norm %.2g",
                           d, kappa, check.ks_stat, check.ks_critical,
                           check.mean_cos_gap_sigmas, check.worst_norm_gap)};
      }
      worst_ks_ratio = std::max(worst_ks_ratio, check.ks_stat / check.ks_critical);
      worst_mean_sigmas = std::max(worst_mean_sigmas, check.mean_cos_gap_sigmas);
      worst_norm = std::max(worst_norm, check.worst_norm_gap);
    }
  }
  return {true, fmt("9 grid points at n=1e5: ks <= %.2f of critical, mean <= %.2f sigma, "
                    "norm gap <= %.1g",
                    worst_ks_ratio, worst_mean_sigmas, worst_norm)};
}

Outcome reparameterization(Context&) {
  const double worst = testsupport::reparam_gradient_max_rel(20, 424242);
  if (worst >= 1e-4) return {false, fmt("max rel %.3g >= 1e-4", worst)};
  return {true, fmt("20 instances, max rel %.2g", worst)};
}

Outcome autodiff(Context&) {
  std::vector<std::string> failures;
  const double primitives = testsupport::primitive_gradient_max_rel(20, 20240817, 1e-4,
                                                                    &failures);
  if (!failures.empty() || primitives >= 1e-4) {
    std::string names;
    for (const auto& f : failures) names += (names.empty() ? "" : ", ") + f;
    return {false, fmt("primitives rel %.3g (%s)", primitives, names.c_str())};
  }
  double models_worst = 0.0;
  for (auto family : {models::Family::kGaussian, models::Family::kVmf}) {
    models_worst = std::max(models_worst, testsupport::nvdm_gradient_max_rel(family, 7));
    for (auto setting : {models::NvrnnSetting::kStandard, models::NvrnnSetting::kInputless}) {
      models_worst =
          std::max(models_worst, testsupport::nvrnn_gradient_max_rel(family, setting, 7));
    }
  }
  if (models_worst >= 1e-3) return {false, fmt("model losses rel %.3g >= 1e-3", models_worst)};
  return {true, fmt("primitives rel %.2g; full losses rel %.2g", primitives, models_worst)};
}

struct TrainedRun {
  models::TrainResult result;
  cli::LoadedRun run;
};

TrainedRun train_config(Context& ctx, const std::string& name,
                        const std::string& corpus_prefix,
                        const std::string& checkpoint = {},
                        const std::function<void(json&)>& patch = {}) {
  json j = load_config(ctx, name, corpus_prefix);
  if (patch) patch(j);
  const cli::RunSpec spec = cli::parse_run_spec(j);
  TrainedRun trained{.result = {}, .run = cli::make_run(spec)};
  trained.result = models::train(*trained.run.model, trained.run.splits.train,
                                 trained.run.splits.dev, spec.train, checkpoint);
  return trained;
}

Outcome collapse_reproduction(Context& ctx) {
  corpus::SynthParams params;
  params.latents = 12;
  params.noise = 0.42;
  const fs::path dir = ctx.work / "collapse";
  fs::create_directories(dir);
  corpus::synth_corpus("collapse", 20240817, params, dir.string());
  ctx.collapse_prefix = (dir / "corpus").string();

  const auto plain =
      train_config(ctx, "collapse_gaussian_plain.json", ctx.collapse_prefix);
  const double plain_kl = final_dev_kl(plain.result.log_csv);
  if (!(plain_kl < 0.5)) {
    return {false, fmt("no-anneal final dev KL %.3f >= 0.5", plain_kl)};
  }

  const auto annealed =
      train_config(ctx, "collapse_gaussian_annealed.json", ctx.collapse_prefix);
  const double annealed_kl = final_dev_kl(annealed.result.log_csv);
  if (!(annealed_kl > plain_kl)) {
    return {false, fmt("annealed final dev KL %.3f not > plain %.3f", annealed_kl,
                       plain_kl)};
  }
  ctx.annealed_best_nll = annealed.result.best_dev_nll_bound;

  ctx.vmf_checkpoint = (ctx.work / "collapse_vmf.ckpt").string();
  const auto vmf = train_config(ctx, "collapse_vmf.json", ctx.collapse_prefix,
                                ctx.vmf_checkpoint);
  const json vmf_json = load_config(ctx, "collapse_vmf.json", ctx.collapse_prefix);
  const int latent_dim = vmf_json.at("nvrnn").at("latent_dim").get<int>();
  const double kappa = vmf_json.at("nvrnn").at("kappa").get<double>();
  const double analytic = latent::vmf_kl_uniform(latent_dim, kappa);
  if (!(analytic >= 2.0 && analytic <= 20.0)) {
    return {false, fmt("shipped kappa's analytic KL %.3f outside [2, 20]", analytic)};
  }
  for (const CsvRow& row : parse_log(vmf.result.log_csv)) {
    if (std::fabs(row.kl - analytic) > 1e-9 * analytic) {
      return {false, fmt("vMF KL %.12g != analytic %.12g at epoch %d %s", row.kl,
                         analytic, row.epoch, row.split.c_str())};
    }
  }
  if (!(vmf.result.best_dev_nll_bound <= annealed.result.best_dev_nll_bound)) {
    return {false, fmt("vMF dev NLL %.3f > annealed Gaussian %.3f",
                       vmf.result.best_dev_nll_bound,
                       annealed.result.best_dev_nll_bound)};
  }
  return {true, fmt("plain KL %.3f < 0.5; annealed KL %.3f > plain; vMF KL "
                    "constant %.3f in [2,20], dev NLL %.2f <= %.2f",
                    plain_kl, annealed_kl, analytic, vmf.result.best_dev_nll_bound,
                    annealed.result.best_dev_nll_bound)};
}

Outcome nvdm_trend(Context& ctx) {
  corpus::SynthParams params;
  const fs::path topic_dir = ctx.work / "topic";
  fs::create_directories(topic_dir);
  corpus::synth_corpus("topic", 20240817, params, topic_dir.string());
  ctx.topic_prefix = (topic_dir / "corpus").string();

  corpus::SynthParams control_params;
  control_params.latents = 1;
  const fs::path k1_dir = ctx.work / "topic_k1";
  fs::create_directories(k1_dir);
  corpus::synth_corpus("topic", 20240817, control_params, k1_dir.string());
  ctx.topic_k1_prefix = (k1_dir / "corpus").string();

  const auto test_ppl = [](TrainedRun& trained, const std::string& checkpoint) {
    trained.run.model->load_parameters(checkpoint);
    return models::evaluate(*trained.run.model, trained.run.splits.test, 8, 2024, 1)
        .perplexity;
  };

  const std::string vmf_ckpt = (ctx.work / "topic_vmf.ckpt").string();
  auto vmf = train_config(ctx, "topic_nvdm_vmf.json", ctx.topic_prefix, vmf_ckpt);
  const double vmf_ppl = test_ppl(vmf, vmf_ckpt);
  const double unigram = models::unigram_perplexity(
      vmf.run.splits.train, vmf.run.splits.test,
      static_cast<int>(vmf.run.splits.vocab.size()), false);

  const std::string gauss_ckpt = (ctx.work / "topic_gauss.ckpt").string();
  auto gauss = train_config(ctx, "topic_nvdm_gaussian.json", ctx.topic_prefix, gauss_ckpt);
  const double gauss_ppl = test_ppl(gauss, gauss_ckpt);

  const std::string ctrl_ckpt = (ctx.work / "topic_ctrl.ckpt").string();
  auto ctrl = train_config(ctx, "topic_nvdm_control.json", ctx.topic_k1_prefix, ctrl_ckpt);
  const double ctrl_ppl = test_ppl(ctrl, ctrl_ckpt);
  const double ctrl_unigram = models::unigram_perplexity(
      ctrl.run.splits.train, ctrl.run.splits.test,
      static_cast<int>(ctrl.run.splits.vocab.size()), false);

  if (!(vmf_ppl <= 0.95 * unigram)) {
    return {false, fmt("vMF ppl %.2f not 5%% under unigram %.2f", vmf_ppl, unigram)};
  }
  if (!(gauss_ppl <= 0.95 * unigram)) {
    return {false, fmt("Gaussian ppl %.2f not 5%% under unigram %.2f", gauss_ppl, unigram)};
  }
  if (!(ctrl_ppl > 0.95 * ctrl_unigram)) {
    return {false, fmt("K=1 control ppl %.2f beats unigram %.2f by 5%%", ctrl_ppl,
                       ctrl_unigram)};
  }
  return {true, fmt("unigram %.1f vs vMF %.1f and Gaussian %.1f (both >5%% better); "
                    "K=1 control %.1f vs unigram %.1f (no gain)",
                    unigram, vmf_ppl, gauss_ppl, ctrl_ppl, ctrl_unigram)};
}

Outcome kappa_sweep(Context& ctx) {
  const std::vector<double> grid = {1, 2, 5, 10, 20, 40, 80};
  std::vector<double> nll;
  for (double kappa : grid) {
    auto point = train_config(ctx, "collapse_vmf.json", ctx.collapse_prefix, {},
                              [&](json& j) { j["nvrnn"]["kappa"] = kappa; });
    nll.push_back(point.result.best_dev_nll_bound);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < nll.size(); ++i) {
    if (nll[i] < nll[best]) best = i;
  }
  if (best == 0 || best + 1 == nll.size()) {
    return {false, fmt("optimum at grid edge kappa=%g (NLL %.3f)", grid[best], nll[best])};
  }
  if (!(nll.front() > nll[best] && nll.back() > nll[best])) {
    return {false, "bound not strictly higher at both grid edges"};
  }
  ctx.sweep_best_nll = nll[best];
  ctx.sweep_best_kappa = grid[best];
  return {true, fmt("optimum kappa=%g (NLL %.3f) strictly inside grid [%g, %g]; edges "
                    "%.3f and %.3f",
                    grid[best], nll[best], grid.front(), grid.back(), nll.front(),
                    nll.back())};
}

Outcome learned_kappa(Context& ctx) {
  auto learned =
      train_config(ctx, "collapse_vmf_learned.json", ctx.collapse_prefix);
  const json j = load_config(ctx, "collapse_vmf_learned.json", ctx.collapse_prefix);
  const double clip_low = j.at("nvrnn").at("kappa_clip").at(0).get<double>();
  // final-model mean kappa on the held-out split
  const double mean_kappa =
      models::evaluate(*learned.run.model, learned.run.splits.dev, 1, 404, 1).mean_kappa;
  if (!(std::fabs(mean_kappa - clip_low) <= 0.1 * clip_low)) {
    return {false, fmt("final mean kappa %.4f not within 10%% of clip low %g", mean_kappa,
                       clip_low)};
  }
  if (!(learned.result.best_dev_nll_bound > ctx.sweep_best_nll)) {
    return {false, fmt("learned-kappa dev NLL %.3f not worse than sweep best %.3f",
                       learned.result.best_dev_nll_bound, ctx.sweep_best_nll)};
  }
  return {true, fmt("final mean kappa %.4f within 10%% of clip low %g; dev NLL %.3f "
                    "worse than sweep best %.3f (kappa=%g)",
                    mean_kappa, clip_low, learned.result.best_dev_nll_bound,
                    ctx.sweep_best_nll, ctx.sweep_best_kappa)};
}

Outcome probe_properties(Context& ctx) {
  json j = load_config(ctx, "collapse_vmf.json", ctx.collapse_prefix);
  cli::LoadedRun run = cli::make_run(cli::parse_run_spec(j));
  run.model->load_parameters(ctx.vmf_checkpoint);

  const std::vector<double> grid = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  const auto points =
      probes::swap_sensitivity(*run.model, run.splits.test, grid, 4, 7, 1);
  if (points.front().mean_cos != 1.0 || points.front().std_err != 0.0) {
    return {false, fmt("p=0 cosine %.17g, expected exactly 1", points.front().mean_cos)};
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double slack = 3.0 * std::sqrt(points[i - 1].std_err * points[i - 1].std_err +
                                         points[i].std_err * points[i].std_err);
    if (points[i].mean_cos > points[i - 1].mean_cos + slack) {
      return {false, fmt("curve increases at p=%g: %.4f -> %.4f (3 sigma %.4f)",
                         points[i].p, points[i - 1].mean_cos, points[i].mean_cos, slack)};
    }
  }

  // Readout harness controls: a centered reference cloud with a
  // deterministic paired target map, plus identity on the model's codes.
  std::vector<std::vector<double>> cloud, mirrored;
  Rng cloud_rng(424242);
  for (int i = 0; i < 360; ++i) {
    std::vector<double> point(8);
    double norm2 = 0.0;
    for (double& c : point) {
      c = cloud_rng.normal();
      norm2 += c * c;
    }
    for (double& c : point) c /= std::sqrt(norm2);
    mirrored.push_back({point.rbegin(), point.rend()});
    cloud.push_back(std::move(point));
  }
  probes::ProbeConfig readout;
  const double cloud_identity =
      probes::fit_readout(cloud, {}, probes::ProbeMode::kIdentity, readout).mean_cosine;
  const double cloud_shuffled =
      probes::fit_readout(cloud, mirrored, probes::ProbeMode::kShuffled, readout)
          .mean_cosine;
  if (!(cloud_identity >= 0.99)) {
    return {false, fmt("identity readout %.4f < 0.99", cloud_identity)};
  }
  if (!(cloud_shuffled < 0.2)) {
    return {false, fmt("shuffled readout %.4f >= 0.2", cloud_shuffled)};
  }
  std::vector<std::vector<double>> codes;
  for (const auto& doc : run.splits.test) {
    if (!run.model->admits(doc) || !corpus::has_content(doc)) continue;
    codes.push_back(
        std::get<latent::VmfParams>(run.model->posterior(doc)).mu.components);
  }
  const double code_identity =
      probes::fit_readout(codes, {}, probes::ProbeMode::kIdentity, readout).mean_cosine;
  if (!(code_identity >= 0.99)) {
    return {false, fmt("identity readout on model codes %.4f < 0.99", code_identity)};
  }

  probes::ProbeConfig bow_config;
  const int vocab = static_cast<int>(run.splits.vocab.size());
  const double c2b = probes::bow_code_probe(*run.model, run.splits.test, vocab, false,
                                            probes::ProbeDirection::kCodeToBow,
                                            bow_config)
                         .mean_cosine;
  const double b2c = probes::bow_code_probe(*run.model, run.splits.test, vocab, false,
                                            probes::ProbeDirection::kBowToCode,
                                            bow_config)
                         .mean_cosine;
  if (!(c2b > b2c)) {
    return {false, fmt("code->bow %.4f not above bow->code %.4f", c2b, b2c)};
  }
  return {true, fmt("swap p=0 exact, curve nonincreasing; identity %.3f/%.3f, shuffled "
                    "%.3f; code->bow %.3f > bow->code %.3f",
                    cloud_identity, code_identity, cloud_shuffled, c2b, b2c)};
}

Outcome determinism(Context& ctx) {
  const std::string quiet = " > /dev/null 2>&1";
  const std::string selftest_log = (ctx.work / "selftest.txt").string();
  const int selftest = run_command(ctx.hvae_bin.string() + " selftest > " + selftest_log +
                                   " 2>&1");
  if (selftest != 0) {
    return {false, "selftest exited " + std::to_string(selftest) + ", see " + selftest_log};
  }

  json j = load_config(ctx, "topic_nvdm_vmf.json", ctx.topic_prefix);
  const fs::path config_path = ctx.work / "determinism_config.json";
  std::ofstream(config_path) << j.dump(2) << "\n";
  const fs::path run_a = ctx.work / "repeat_a";
  const fs::path run_b = ctx.work / "repeat_b";
  for (const fs::path& dir : {run_a, run_b}) {
    const int code = run_command(ctx.hvae_bin.string() + " train --config " +
                                 config_path.string() + " --out " + dir.string() + quiet);
    if (code != 0) return {false, "train exited " + std::to_string(code)};
  }
  if (read_file(run_a / "train_log.csv") != read_file(run_b / "train_log.csv")) {
    return {false, "repeated train logs differ"};
  }
  if (read_file(run_a / "model.ckpt") != read_file(run_b / "model.ckpt")) {
    return {false, "repeated train checkpoints differ"};
  }

  json collapse = load_config(ctx, "collapse_vmf.json", ctx.collapse_prefix);
  cli::LoadedRun run = cli::make_run(cli::parse_run_spec(collapse));
  run.model->load_parameters(ctx.vmf_checkpoint);
  const auto single = models::evaluate(*run.model, run.splits.test, 4, 31337, 1);
  const auto sharded = models::evaluate(*run.model, run.splits.test, 4, 31337, 5);
  const bool equal = single.kl == sharded.kl && single.recon_nll == sharded.recon_nll &&
                     single.nll_bound == sharded.nll_bound &&
                     single.perplexity == sharded.perplexity &&
                     single.mean_kappa == sharded.mean_kappa &&
                     single.tokens == sharded.tokens &&
                     single.examples == sharded.examples &&
                     single.skipped == sharded.skipped;
  if (!equal) return {false, "sharded evaluation differs from single-threaded"};
  return {true, "selftest green; repeated train byte-identical; 5-way sharded eval "
                "bitwise equal"};
}

struct Criterion {
  const char* name;
  double time_limit_s;  // 0 = no limit specified
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main() {
  Context ctx;
  ctx.work = fs::temp_directory_path() /
             ("hvae_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);
  ctx.hvae_bin = HVAE_BIN;
  ctx.config_dir = CONFIG_DIR;

  const std::vector<Criterion> criteria = {
      {"special-functions", 10, special_functions},
      {"kl-correctness", 10, kl_correctness},
      {"sampler-distribution", 120, sampler_suite},
      {"reparameterization-gradient", 30, reparameterization},
      {"autodiff-gradients", 120, autodiff},
      {"collapse-reproduction", 900, collapse_reproduction},
      {"document-model-trend", 600, nvdm_trend},
      {"kappa-sweep-shape", 0, kappa_sweep},
      {"learned-kappa-brittleness", 0, learned_kappa},
      {"probe-properties", 0, probe_properties},
      {"determinism", 0, determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& criterion = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run(ctx);
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.pass && criterion.time_limit_s > 0 && seconds >= criterion.time_limit_s) {
      outcome = {false, fmt("passed but took %.1fs >= %.0fs budget: %s", seconds,
                            criterion.time_limit_s, outcome.detail.c_str())};
    }
    if (!outcome.pass) ++failed;
    std::printf("[%2zu/%zu] %-28s %s  (%s; %.1fs)\n", i + 1, criteria.size(),
                criterion.name, outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(),
                seconds);
    std::fflush(stdout);
  }
  if (failed == 0) {
    fs::remove_all(ctx.work);
    std::printf("acceptance: %zu/%zu passed\n", criteria.size(), criteria.size());
  } else {
    std::printf("acceptance: %d criteria FAILED (work dir kept: %s)\n", failed,
                ctx.work.c_str());
  }
  return failed == 0 ? 0 : 1;
}
