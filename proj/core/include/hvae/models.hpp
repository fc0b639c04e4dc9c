#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hvae/corpus.hpp"
#include "hvae/latent.hpp"
#include "hvae/tensor.hpp"

// The trainable models: a bag-of-words document VAE, a recurrent sequence
// VAE in four decoder settings, and a latent-free recurrent language-model
// baseline, plus the shared training loop and evaluation metrics.

namespace hvae::models {

enum class Family { kGaussian, kVmf };

enum class NvrnnSetting { kStandard, kInputless, kStandardBow, kInputlessBow };

const char* to_string(Family family);
const char* to_string(NvrnnSetting setting);
Family family_from_string(const std::string& s);
NvrnnSetting setting_from_string(const std::string& s);

struct AnnealSchedule {
  enum class Kind { kNone, kSigmoid, kConstant };
  Kind kind = Kind::kNone;
  int warm_epochs = 20;  // sigmoid ramp length
  double weight = 1.0;   // constant schedule value, in (0, 1]

  void validate() const;
};

const char* to_string(AnnealSchedule::Kind kind);
AnnealSchedule::Kind anneal_kind_from_string(const std::string& s);

// KL weight for an epoch (0-based). none -> 1; constant -> weight;
// sigmoid -> 1/(1+exp(-s(epoch - warm/2))) with steepness s = 12/warm,
// which puts epoch 0 below 0.01 and epoch warm above 0.99, and is exactly
// 1 for every later epoch.
double anneal_weight(const AnnealSchedule& schedule, int epoch);

struct NvdmConfig {
  int vocab_size = 0;
  int hidden = 32;
  int latent_dim = 8;
  Family family = Family::kVmf;
  double kappa = 40.0;    // vmf only
  bool count_bow = false;  // score occurrence counts instead of presence

  void validate() const;
};

struct NvrnnConfig {
  int vocab_size = 0;
  int embed_dim = 16;
  int hidden = 32;
  int latent_dim = 8;
  Family family = Family::kVmf;
  double kappa = 40.0;
  NvrnnSetting setting = NvrnnSetting::kStandard;
  bool learn_kappa = false;
  double kappa_clip_low = 5.0;
  double kappa_clip_high = 500.0;
  // Pins z to the zero vector and drops the KL term; with kl weight 0 this
  // makes a Standard run reproduce the language-model baseline exactly.
  bool zero_latent = false;

  void validate() const;
};

// Per-example ELBO decomposition. nll_bound = kl + recon_nll always.
struct ElboReport {
  double kl = 0.0;
  double recon_nll = 0.0;
  double nll_bound = 0.0;
  double perplexity = 1.0;
  long tokens = 0;
};

class Model {
 public:
  virtual ~Model() = default;

  struct Forward {
    Tensor loss;  // kl_weight * KL + recon, on the tape
    ElboReport report;
  };

  // One training forward pass; rng supplies the sampler noise.
  virtual Forward forward(Tape& tape, const corpus::Document& doc, Rng& rng,
                          double kl_weight) = 0;

  // Variational posterior for one input; deterministic, consumes no rng.
  virtual latent::PosteriorParams posterior(const corpus::Document& doc) = 0;

  // Reconstruction NLL of doc under a fixed latent code (no gradients).
  virtual double recon_nll(const corpus::Document& doc,
                           const std::vector<double>& code) = 0;

  virtual const latent::PosteriorContract& contract() const = 0;

  // Normalizer for this example's NLL: token count for sequence models,
  // scored bag weight for the document model.
  virtual long example_tokens(const corpus::Document& doc) const = 0;

  // False for inputs the model rejects (documents with no scorable token).
  virtual bool admits(const corpus::Document& doc) const { return true; }

  // False for the latent-free baseline and for zero-latent test runs;
  // evaluation then skips posterior sampling and reports KL = 0.
  virtual bool has_latent() const { return true; }

  // True when perplexity aggregates exp(mean over documents of nll/tokens)
  // instead of exp(total nll / total tokens).
  virtual bool per_document_perplexity() const = 0;

  virtual int latent_dim() const = 0;

  std::span<Tensor> parameters() { return params_; }
  // Copies values from a checkpoint into the matching named parameters.
  // Throws IoError on a name or shape mismatch.
  void load_parameters(const std::string& checkpoint_path);

 protected:
  // Registers a named trainable tensor; weights get fan-in uniform init
  // from a stream derived from (seed, name), biases stay zero.
  Tensor add_param(std::vector<int> shape, const std::string& name,
                   std::uint64_t seed, int fan_in);

  std::vector<Tensor> params_;
};

class NvdmModel final : public Model {
 public:
  NvdmModel(NvdmConfig config, std::uint64_t seed);

  Forward forward(Tape& tape, const corpus::Document& doc, Rng& rng,
                  double kl_weight) override;
  latent::PosteriorParams posterior(const corpus::Document& doc) override;
  double recon_nll(const corpus::Document& doc,
                   const std::vector<double>& code) override;
  const latent::PosteriorContract& contract() const override { return *contract_; }
  long example_tokens(const corpus::Document& doc) const override;
  bool admits(const corpus::Document& doc) const override;
  bool per_document_perplexity() const override { return true; }
  int latent_dim() const override { return config_.latent_dim; }

  const NvdmConfig& config() const { return config_; }

 private:
  struct Encoded {
    Tensor mu;       // vmf: unit direction; gaussian: mean
    Tensor log_var;  // gaussian only
  };
  Encoded encode(Tape& tape, const Tensor& bow);
  Tensor decode_recon(Tape& tape, const Tensor& z, const Tensor& bow);

  NvdmConfig config_;
  std::unique_ptr<latent::PosteriorContract> contract_;
  Tensor enc_w1_, enc_b1_;
  Tensor mu_w_, mu_b_;
  Tensor lv_w_, lv_b_;  // gaussian head
  Tensor dec_w_, dec_b_;
};

class NvrnnModel : public Model {
 public:
  NvrnnModel(NvrnnConfig config, std::uint64_t seed);

  Forward forward(Tape& tape, const corpus::Document& doc, Rng& rng,
                  double kl_weight) override;
  latent::PosteriorParams posterior(const corpus::Document& doc) override;
  double recon_nll(const corpus::Document& doc,
                   const std::vector<double>& code) override;
  const latent::PosteriorContract& contract() const override { return *contract_; }
  long example_tokens(const corpus::Document& doc) const override;
  bool per_document_perplexity() const override { return false; }
  bool has_latent() const override {
    return !language_model_only_ && !config_.zero_latent;
  }
  int latent_dim() const override { return config_.latent_dim; }

  const NvrnnConfig& config() const { return config_; }

 protected:
  struct GruCell {
    Tensor wr, ur, br;
    Tensor wu, uu, bu;
    Tensor wc, uc, bc;
  };
  GruCell add_gru(const std::string& prefix, int input_dim, std::uint64_t seed);
  Tensor gru_step(Tape& tape, const GruCell& cell, const Tensor& x, const Tensor& h);

  struct Encoded {
    Tensor mu;
    Tensor log_var;  // gaussian
    Tensor kappa;    // learned-kappa head output, already in the clip range
  };
  Encoded encode(Tape& tape, const corpus::Document& doc);
  Tensor decode_recon(Tape& tape, const corpus::Document& doc, const Tensor& z);

  // Mean decoder embedding of the document's tokens, taken by value so no
  // gradient reaches the table through the conditioning vector.
  Tensor bow_condition_vector(const corpus::Document& doc) const;

  NvrnnConfig config_;
  bool language_model_only_ = false;
  std::unique_ptr<latent::PosteriorContract> contract_;
  Tensor enc_embed_;
  GruCell enc_gru_;
  Tensor mu_w_, mu_b_;
  Tensor lv_w_, lv_b_;        // gaussian head
  Tensor kappa_w_, kappa_b_;  // learned-kappa head
  Tensor dec_embed_;
  GruCell dec_gru_;
  Tensor out_w_, out_b_;

  NvrnnModel(NvrnnConfig config, std::uint64_t seed, bool language_model_only);
};

// The language-model baseline: the Standard-setting decoder with z pinned
// to zero, no encoder, and no KL term.
class RnnlmModel final : public NvrnnModel {
 public:
  RnnlmModel(NvrnnConfig config, std::uint64_t seed);
};

struct TrainConfig {
  int epochs = 30;
  double learning_rate = 0.3;
  double lr_decay = 0.98;
  int patience = 1;  // epochs without dev improvement before decay starts
  double clip_norm = 5.0;
  AnnealSchedule anneal;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EvalSummary {
  double kl = 0.0;         // mean per example
  double recon_nll = 0.0;  // mean per example
  double nll_bound = 0.0;  // mean per example
  double perplexity = 1.0;
  double mean_kappa = 0.0;  // vmf posteriors only; 0 otherwise
  long tokens = 0;
  long examples = 0;
  long skipped = 0;  // inputs the model does not admit
};

// Per-example bounds with samples_per_example Monte Carlo reconstruction
// draws, each example seeded by derive(seed, example index). Sharding
// across threads partitions examples; per-example results land in index
// slots and are reduced in index order, so any thread count reproduces the
// single-threaded result bit for bit. Must not run concurrently with
// training on the same model.
EvalSummary evaluate(Model& model, std::span<const corpus::Document> docs,
                     int samples_per_example, std::uint64_t seed, int threads = 1);

struct TrainResult {
  std::string log_csv;  // header epoch,split,kl,recon,nll_bound,ppl,kl_weight,lr
  double best_dev_nll_bound = 0.0;
  int best_epoch = -1;
  EvalSummary best_dev;
};

// Seeded shuffled passes over the train split; logs train and dev rows per
// epoch; decays the learning rate after `patience` epochs without dev
// improvement; checkpoints the best dev NLL bound to checkpoint_path when
// nonempty. Throws NumericError (with epoch, example, and loss terms) on a
// non-finite loss.
TrainResult train(Model& model, std::span<const corpus::Document> train_docs,
                  std::span<const corpus::Document> dev_docs, const TrainConfig& config,
                  const std::string& checkpoint_path = {});

// Add-one-smoothed multinomial over non-reserved train tokens, scored with
// the document model's normalization (presence or counts per count_bow).
double unigram_perplexity(std::span<const corpus::Document> train_docs,
                          std::span<const corpus::Document> eval_docs, int vocab_size,
                          bool count_bow);

}  // namespace hvae::models
