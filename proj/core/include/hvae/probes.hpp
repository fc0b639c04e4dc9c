#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hvae/corpus.hpp"
#include "hvae/models.hpp"

// Analysis passes over trained models: the concentration/KL/alignment
// table, the bag-of-words <-> latent-code readout probe, and the
// word-order swap sensitivity curve.

namespace hvae::probes {

struct KappaStatRow {
  int d = 0;
  double kappa = 0.0;
  double kl = 0.0;       // analytic, against the uniform prior
  double mean_cos = 0.0; // Monte Carlo mean of mu . z
  double std_err = 0.0;  // standard error of mean_cos
};

// One row per (d, kappa) pair: analytic KL plus the sampled alignment
// between the mean direction and draws. n_samples >= 10000; rows come out
// grouped by d in the order given, each group in the kappa order given.
// Deterministic for a fixed seed regardless of row count or order.
std::vector<KappaStatRow> kappa_stats(std::span<const int> dims,
                                      std::span<const double> kappas,
                                      int n_samples, std::uint64_t seed);

// Long-format table, header d,kappa,kl,mean_cos,stderr.
std::string kappa_stats_csv(std::span<const KappaStatRow> rows);

enum class ProbeDirection { kCodeToBow, kBowToCode };
enum class ProbeMode {
  kPaired,    // sources[i] -> targets[i]
  kIdentity,  // sources[i] -> sources[i] (harness sanity check)
  kShuffled,  // sources[i] -> targets[perm(i)] (chance-level control)
};

const char* to_string(ProbeDirection direction);
ProbeDirection direction_from_string(const std::string& s);

struct ProbeConfig {
  int epochs = 200;
  double learning_rate = 0.05;
  double clip_norm = 5.0;
  double holdout_fraction = 0.2;
  int patience = 25;  // epochs without held-out improvement before stopping
  std::uint64_t seed = 7;

  void validate() const;
};

struct ProbeResult {
  ProbeDirection direction = ProbeDirection::kCodeToBow;
  double mean_cosine = 0.0;  // best held-out mean cosine(target, prediction)
  int best_epoch = -1;
  long n_examples = 0;  // held-out rows scored
  long n_train = 0;     // training rows
  long skipped = 0;     // rows dropped for a degenerate (zero) target
};

// Trains a two-layer tanh readout (hidden = 2x source dim) from source
// vectors to target vectors under squared error on a seeded 80/20 split,
// early-stopped on the held-out mean cosine, and reports that best cosine.
// Rows whose target has zero norm are dropped and counted.
ProbeResult fit_readout(const std::vector<std::vector<double>>& sources,
                        const std::vector<std::vector<double>>& targets,
                        ProbeMode mode, const ProbeConfig& config);

// Readout between posterior mean codes and bag-of-words vectors of the
// admitted documents in the split, in the requested direction.
ProbeResult bow_code_probe(models::Model& model,
                           std::span<const corpus::Document> docs, int vocab_size,
                           bool count_bow, ProbeDirection direction,
                           const ProbeConfig& config);

struct SwapPoint {
  double p = 0.0;
  double mean_cos = 0.0;
  double std_err = 0.0;
  long pairs = 0;  // (document, repeat) cosines aggregated
};

// For each swap probability p: every eligible document (two or more
// tokens) is perturbed `repeats` times and the cosine between the
// posterior mean of the original and of the perturbation is averaged.
// p = 0 short-circuits to cosine exactly 1 without touching the model.
// Example-parallel with per-(point, example) derived seeds; any thread
// count reproduces the single-threaded result bit for bit.
std::vector<SwapPoint> swap_sensitivity(models::Model& model,
                                        std::span<const corpus::Document> docs,
                                        std::span<const double> p_grid, int repeats,
                                        std::uint64_t seed, int threads = 1);

// Header p,mean_cos,stderr.
std::string swap_csv(std::span<const SwapPoint> points);

}  // namespace hvae::probes
