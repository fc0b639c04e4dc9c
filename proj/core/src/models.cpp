#include "hvae/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>
#include <variant>

#include "hvae/checkpoint.hpp"
#include "hvae/errors.hpp"

namespace hvae::models {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const auto idx = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(n));
  return std::min(idx, n - 1);
}

std::string format_row(int epoch, const char* split, double kl, double recon,
                       double nll, double ppl, double kl_weight, double lr) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                epoch, split, kl, recon, nll, ppl, kl_weight, lr);
  return buf;
}

}  // namespace

const char* to_string(Family family) {
  return family == Family::kGaussian ? "gaussian" : "vmf";
}

const char* to_string(NvrnnSetting setting) {
  switch (setting) {
    case NvrnnSetting::kStandard: return "standard";
    case NvrnnSetting::kInputless: return "inputless";
    case NvrnnSetting::kStandardBow: return "standard_bow";
    case NvrnnSetting::kInputlessBow: return "inputless_bow";
  }
  return "standard";
}

const char* to_string(AnnealSchedule::Kind kind) {
  switch (kind) {
    case AnnealSchedule::Kind::kNone: return "none";
    case AnnealSchedule::Kind::kSigmoid: return "sigmoid";
    case AnnealSchedule::Kind::kConstant: return "constant";
  }
  return "none";
}

Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::kGaussian;
  if (s == "vmf") return Family::kVmf;
  throw ConfigError("unknown family: " + s);
}

NvrnnSetting setting_from_string(const std::string& s) {
  if (s == "standard") return NvrnnSetting::kStandard;
  if (s == "inputless") return NvrnnSetting::kInputless;
  if (s == "standard_bow") return NvrnnSetting::kStandardBow;
  if (s == "inputless_bow") return NvrnnSetting::kInputlessBow;
  throw ConfigError("unknown decoder setting: " + s);
}

AnnealSchedule::Kind anneal_kind_from_string(const std::string& s) {
  if (s == "none") return AnnealSchedule::Kind::kNone;
  if (s == "sigmoid") return AnnealSchedule::Kind::kSigmoid;
  if (s == "constant") return AnnealSchedule::Kind::kConstant;
  throw ConfigError("unknown anneal kind: " + s);
}

void AnnealSchedule::validate() const {
  if (kind == Kind::kSigmoid && warm_epochs < 1) {
    throw ConfigError("sigmoid anneal needs warm_epochs >= 1");
  }
  if (kind == Kind::kConstant && !(weight > 0.0 && weight <= 1.0)) {
    throw ConfigError("constant anneal weight must be in (0, 1]");
  }
}

double anneal_weight(const AnnealSchedule& schedule, int epoch) {
  if (epoch < 0) throw ConfigError("anneal epoch must be >= 0");
  switch (schedule.kind) {
    case AnnealSchedule::Kind::kNone:
      return 1.0;
    case AnnealSchedule::Kind::kConstant:
      return schedule.weight;
    case AnnealSchedule::Kind::kSigmoid: {
      if (epoch > schedule.warm_epochs) return 1.0;
      const double warm = static_cast<double>(schedule.warm_epochs);
      const double steepness = 12.0 / warm;
      return 1.0 / (1.0 + std::exp(-steepness * (epoch - 0.5 * warm)));
    }
  }
  return 1.0;
}

void NvdmConfig::validate() const {
  if (vocab_size < corpus::Vocab::kReservedCount + 1) {
    throw ConfigError("nvdm: vocab_size must exceed the reserved ids");
  }
  if (hidden < 1 || latent_dim < 1) throw ConfigError("nvdm: sizes must be positive");
  if (family == Family::kVmf) {
    if (latent_dim < 2) throw ConfigError("nvdm: vmf needs latent_dim >= 2");
    if (!(kappa > 0.0)) throw ConfigError("nvdm: vmf needs kappa > 0");
  }
}

void NvrnnConfig::validate() const {
  if (vocab_size < corpus::Vocab::kReservedCount + 1) {
    throw ConfigError("nvrnn: vocab_size must exceed the reserved ids");
  }
  if (embed_dim < 1 || hidden < 1 || latent_dim < 1) {
    throw ConfigError("nvrnn: sizes must be positive");
  }
  if (family == Family::kVmf) {
    if (latent_dim < 2) throw ConfigError("nvrnn: vmf needs latent_dim >= 2");
    if (!learn_kappa && !(kappa > 0.0)) throw ConfigError("nvrnn: vmf needs kappa > 0");
  }
  if (learn_kappa) {
    if (family != Family::kVmf) throw ConfigError("nvrnn: learn_kappa requires the vmf family");
    if (kappa_clip_low < 1e-2) throw ConfigError("nvrnn: kappa_clip low bound must be >= 1e-2");
    if (!(kappa_clip_high > kappa_clip_low)) {
      throw ConfigError("nvrnn: kappa_clip range must be increasing");
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train: lr_decay must be in (0, 1]");
  if (patience < 0) throw ConfigError("train: patience must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
  anneal.validate();
}

Tensor Model::add_param(std::vector<int> shape, const std::string& name,
                        std::uint64_t seed, int fan_in) {
  Tensor t = Tensor::param(std::move(shape), name);
  if (fan_in > 0) {
    Rng rng(Rng::derive(seed, fnv1a(name)));
    init_uniform_fan_in(t, fan_in, rng);
  }
  params_.push_back(t);
  return t;
}

void Model::load_parameters(const std::string& checkpoint_path) {
  std::vector<Tensor> loaded = load_checkpoint(checkpoint_path);
  if (loaded.size() != params_.size()) {
    throw IoError("checkpoint holds " + std::to_string(loaded.size()) +
                  " tensors, model expects " + std::to_string(params_.size()));
  }
  for (Tensor& p : params_) {
    const Tensor* match = nullptr;
    for (const Tensor& l : loaded) {
      if (l.name() == p.name()) {
        match = &l;
        break;
      }
    }
    if (!match) throw IoError("checkpoint is missing tensor '" + p.name() + "'");
    if (match->shape() != p.shape()) {
      throw IoError("checkpoint tensor '" + p.name() + "' has a different shape");
    }
    p.values_mutable() = match->values();
  }
}

NvdmModel::NvdmModel(NvdmConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int v = config_.vocab_size, h = config_.hidden, l = config_.latent_dim;
  if (config_.family == Family::kVmf) {
    contract_ = std::make_unique<latent::VmfPosterior>(false);
  } else {
    contract_ = std::make_unique<latent::GaussianPosterior>();
  }
  enc_w1_ = add_param({h, v}, "enc.w1", seed, v);
  enc_b1_ = add_param({h}, "enc.b1", seed, 0);
  mu_w_ = add_param({l, h}, "enc.mu.w", seed, h);
  mu_b_ = add_param({l}, "enc.mu.b", seed, 0);
  if (config_.family == Family::kGaussian) {
    lv_w_ = add_param({l, h}, "enc.lv.w", seed, h);
    lv_b_ = add_param({l}, "enc.lv.b", seed, 0);
  }
  dec_w_ = add_param({v, l}, "dec.w", seed, l);
  dec_b_ = add_param({v}, "dec.b", seed, 0);
}

NvdmModel::Encoded NvdmModel::encode(Tape& tape, const Tensor& bow) {
  Tensor hidden = tape.tanh(tape.add(tape.matmul(enc_w1_, bow), enc_b1_));
  Tensor raw = tape.add(tape.matmul(mu_w_, hidden), mu_b_);
  Encoded out;
  if (config_.family == Family::kVmf) {
    out.mu = tape.l2_normalize(raw);
  } else {
    out.mu = raw;
    out.log_var = tape.add(tape.matmul(lv_w_, hidden), lv_b_);
  }
  return out;
}

Tensor NvdmModel::decode_recon(Tape& tape, const Tensor& z, const Tensor& bow) {
  Tensor logits = tape.add(tape.matmul(dec_w_, z), dec_b_);
  Tensor log_probs = tape.log_softmax(logits);
  return tape.negate(tape.sum(tape.multiply(log_probs, bow)));
}

Model::Forward NvdmModel::forward(Tape& tape, const corpus::Document& doc, Rng& rng,
                                  double kl_weight) {
  const corpus::BowVector bow =
      corpus::to_bow(doc, config_.vocab_size, config_.count_bow);
  Tensor bow_t = Tensor::from_values({config_.vocab_size}, bow.weights);

  Encoded enc = encode(tape, bow_t);
  Tensor z, kl_node;
  double kl_value;
  if (config_.family == Family::kVmf) {
    z = latent::sample_vmf_reparameterized(tape, enc.mu, config_.kappa, rng);
    kl_value = latent::vmf_kl_uniform(config_.latent_dim, config_.kappa);
    kl_node = Tensor::scalar(kl_value);
  } else {
    kl_node = latent::gaussian_kl_node(tape, enc.mu, enc.log_var);
    kl_value = kl_node.value();
    z = latent::sample_gaussian_reparameterized(tape, enc.mu, enc.log_var, rng);
  }
  Tensor recon = decode_recon(tape, z, bow_t);

  Forward out;
  out.loss = tape.add(tape.scale(kl_node, kl_weight), recon);
  out.report.kl = kl_value;
  out.report.recon_nll = recon.value();
  out.report.nll_bound = out.report.kl + out.report.recon_nll;
  out.report.tokens = example_tokens(doc);
  out.report.perplexity =
      std::exp(out.report.nll_bound / static_cast<double>(out.report.tokens));
  return out;
}

latent::PosteriorParams NvdmModel::posterior(const corpus::Document& doc) {
  const corpus::BowVector bow =
      corpus::to_bow(doc, config_.vocab_size, config_.count_bow);
  Tape tape;
  Encoded enc = encode(tape, Tensor::from_values({config_.vocab_size}, bow.weights));
  latent::PosteriorParams params;
  if (config_.family == Family::kVmf) {
    params = latent::VmfParams{latent::UnitVector{enc.mu.values()}, config_.kappa};
  } else {
    params = latent::GaussianParams{enc.mu.values(), enc.log_var.values()};
  }
  tape.clear();
  return params;
}

double NvdmModel::recon_nll(const corpus::Document& doc, const std::vector<double>& code) {
  const corpus::BowVector bow =
      corpus::to_bow(doc, config_.vocab_size, config_.count_bow);
  Tape tape;
  Tensor z = Tensor::from_values({config_.latent_dim}, code);
  const double value =
      decode_recon(tape, z, Tensor::from_values({config_.vocab_size}, bow.weights)).value();
  tape.clear();
  return value;
}

long NvdmModel::example_tokens(const corpus::Document& doc) const {
  long total = 0;
  if (config_.count_bow) {
    for (int id : doc.ids) total += id >= corpus::Vocab::kReservedCount ? 1 : 0;
  } else {
    const corpus::BowVector bow = corpus::to_bow(doc, config_.vocab_size, false);
    total = bow.distinct;
  }
  return total;
}

bool NvdmModel::admits(const corpus::Document& doc) const {
  return corpus::has_content(doc);
}

NvrnnModel::NvrnnModel(NvrnnConfig config, std::uint64_t seed)
    : NvrnnModel(config, seed, false) {}

NvrnnModel::NvrnnModel(NvrnnConfig config, std::uint64_t seed, bool language_model_only)
    : config_(config), language_model_only_(language_model_only) {
  config_.validate();
  if (language_model_only_ && config_.setting != NvrnnSetting::kStandard) {
    throw ConfigError("the language-model baseline uses the standard setting");
  }
  const int v = config_.vocab_size, e = config_.embed_dim, h = config_.hidden,
            l = config_.latent_dim;

  if (config_.family == Family::kVmf) {
    contract_ = std::make_unique<latent::VmfPosterior>(config_.learn_kappa);
  } else {
    contract_ = std::make_unique<latent::GaussianPosterior>();
  }

  if (!language_model_only_) {
    enc_embed_ = add_param({v, e}, "enc.embed", seed, e);
    enc_gru_ = add_gru("enc.gru", e, seed);
    mu_w_ = add_param({l, h}, "enc.mu.w", seed, h);
    mu_b_ = add_param({l}, "enc.mu.b", seed, 0);
    if (config_.family == Family::kGaussian) {
      lv_w_ = add_param({l, h}, "enc.lv.w", seed, h);
      lv_b_ = add_param({l}, "enc.lv.b", seed, 0);
    }
    if (config_.learn_kappa) {
      kappa_w_ = add_param({1, h}, "enc.kappa.w", seed, h);
      kappa_b_ = add_param({1}, "enc.kappa.b", seed, 0);
    }
  }

  int input_dim = 0;
  switch (config_.setting) {
    case NvrnnSetting::kStandard: input_dim = e + l; break;
    case NvrnnSetting::kInputless: input_dim = l; break;
    case NvrnnSetting::kStandardBow: input_dim = e + l + e; break;
    case NvrnnSetting::kInputlessBow: input_dim = l + e; break;
  }
  dec_embed_ = add_param({v, e}, "dec.embed", seed, e);
  dec_gru_ = add_gru("dec.gru", input_dim, seed);
  out_w_ = add_param({v, h}, "dec.out.w", seed, h);
  out_b_ = add_param({v}, "dec.out.b", seed, 0);
}

NvrnnModel::GruCell NvrnnModel::add_gru(const std::string& prefix, int input_dim,
                                        std::uint64_t seed) {
  const int h = config_.hidden;
  GruCell cell;
  cell.wr = add_param({h, input_dim}, prefix + ".wr", seed, input_dim);
  cell.ur = add_param({h, h}, prefix + ".ur", seed, h);
  cell.br = add_param({h}, prefix + ".br", seed, 0);
  cell.wu = add_param({h, input_dim}, prefix + ".wu", seed, input_dim);
  cell.uu = add_param({h, h}, prefix + ".uu", seed, h);
  cell.bu = add_param({h}, prefix + ".bu", seed, 0);
  cell.wc = add_param({h, input_dim}, prefix + ".wc", seed, input_dim);
  cell.uc = add_param({h, h}, prefix + ".uc", seed, h);
  cell.bc = add_param({h}, prefix + ".bc", seed, 0);
  return cell;
}

Tensor NvrnnModel::gru_step(Tape& tape, const GruCell& cell, const Tensor& x,
                            const Tensor& h) {
  Tensor r = tape.sigmoid(
      tape.add(tape.add(tape.matmul(cell.wr, x), tape.matmul(cell.ur, h)), cell.br));
  Tensor u = tape.sigmoid(
      tape.add(tape.add(tape.matmul(cell.wu, x), tape.matmul(cell.uu, h)), cell.bu));
  Tensor candidate = tape.tanh(tape.add(
      tape.add(tape.matmul(cell.wc, x), tape.matmul(cell.uc, tape.multiply(r, h))),
      cell.bc));
  // h' = u h + (1-u) candidate
  return tape.add(candidate, tape.multiply(u, tape.sub(h, candidate)));
}

NvrnnModel::Encoded NvrnnModel::encode(Tape& tape, const corpus::Document& doc) {
  if (language_model_only_) {
    throw std::logic_error("the language-model baseline has no encoder");
  }
  Tensor h = Tensor::zeros({config_.hidden});
  for (int id : doc.ids) {
    Tensor x = tape.embedding_row(enc_embed_, id);
    h = gru_step(tape, enc_gru_, x, h);
  }

  Encoded out;
  Tensor raw = tape.add(tape.matmul(mu_w_, h), mu_b_);
  if (config_.family == Family::kVmf) {
    out.mu = tape.l2_normalize(raw);
    if (config_.learn_kappa) {
      Tensor gate = tape.sigmoid(tape.add(tape.matmul(kappa_w_, h), kappa_b_));
      out.kappa =
          tape.add(tape.scale(gate, config_.kappa_clip_high - config_.kappa_clip_low),
                   Tensor::scalar(config_.kappa_clip_low));
    }
  } else {
    out.mu = raw;
    out.log_var = tape.add(tape.matmul(lv_w_, h), lv_b_);
  }
  return out;
}

Tensor NvrnnModel::bow_condition_vector(const corpus::Document& doc) const {
  const int e = config_.embed_dim;
  std::vector<double> acc(static_cast<std::size_t>(e), 0.0);
  for (int id : doc.ids) {
    const double* row = dec_embed_.values().data() + static_cast<std::size_t>(id) * e;
    for (int j = 0; j < e; ++j) acc[static_cast<std::size_t>(j)] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(doc.ids.size());
  for (double& v : acc) v *= inv;
  return Tensor::from_values({e}, std::move(acc));
}

Tensor NvrnnModel::decode_recon(Tape& tape, const corpus::Document& doc, const Tensor& z) {
  const bool with_prev = config_.setting == NvrnnSetting::kStandard ||
                         config_.setting == NvrnnSetting::kStandardBow;
  const bool with_bow = config_.setting == NvrnnSetting::kStandardBow ||
                        config_.setting == NvrnnSetting::kInputlessBow;
  Tensor bow;
  if (with_bow) bow = bow_condition_vector(doc);

  Tensor h = Tensor::zeros({config_.hidden});
  Tensor total;
  const int n = static_cast<int>(doc.ids.size());
  for (int t = 0; t <= n; ++t) {
    const int prev = t == 0 ? corpus::Vocab::kBos : doc.ids[static_cast<std::size_t>(t - 1)];
    const int target = t < n ? doc.ids[static_cast<std::size_t>(t)] : corpus::Vocab::kEos;

    Tensor input = z;
    if (with_prev) input = tape.concat(tape.embedding_row(dec_embed_, prev), z);
    if (with_bow) input = tape.concat(input, bow);

    h = gru_step(tape, dec_gru_, input, h);
    Tensor logits = tape.add(tape.matmul(out_w_, h), out_b_);
    const int targets[1] = {target};
    Tensor nll = tape.masked_nll(logits, std::span<const int>(targets, 1));
    total = t == 0 ? nll : tape.add(total, nll);
  }
  return total;
}

Model::Forward NvrnnModel::forward(Tape& tape, const corpus::Document& doc, Rng& rng,
                                   double kl_weight) {
  Tensor z, kl_node;
  double kl_value = 0.0;
  if (!has_latent()) {
    z = Tensor::zeros({config_.latent_dim});
    kl_node = Tensor::scalar(0.0);
  } else {
    Encoded enc = encode(tape, doc);
    if (config_.family == Family::kVmf) {
      const double kappa = config_.learn_kappa ? enc.kappa.value() : config_.kappa;
      z = latent::sample_vmf_reparameterized(tape, enc.mu, kappa, rng);
      kl_value = latent::vmf_kl_uniform(config_.latent_dim, kappa);
      if (config_.learn_kappa) {
        // Straight-through kappa on the sample path: only the KL term
        // carries the kappa gradient.
        kl_node = tape.scalar_chain(
            enc.kappa, kl_value,
            latent::vmf_kl_kappa_gradient(config_.latent_dim, kappa));
      } else {
        kl_node = Tensor::scalar(kl_value);
      }
    } else {
      kl_node = latent::gaussian_kl_node(tape, enc.mu, enc.log_var);
      kl_value = kl_node.value();
      z = latent::sample_gaussian_reparameterized(tape, enc.mu, enc.log_var, rng);
    }
  }

  Tensor recon = decode_recon(tape, doc, z);

  Forward out;
  out.loss = tape.add(tape.scale(kl_node, kl_weight), recon);
  out.report.kl = kl_value;
  out.report.recon_nll = recon.value();
  out.report.nll_bound = kl_value + out.report.recon_nll;
  out.report.tokens = example_tokens(doc);
  out.report.perplexity =
      std::exp(out.report.nll_bound / static_cast<double>(out.report.tokens));
  return out;
}

latent::PosteriorParams NvrnnModel::posterior(const corpus::Document& doc) {
  if (!has_latent()) {
    throw std::logic_error("latent-free model has no posterior");
  }
  Tape tape;
  Encoded enc = encode(tape, doc);
  latent::PosteriorParams params;
  if (config_.family == Family::kVmf) {
    const double kappa = config_.learn_kappa ? enc.kappa.value() : config_.kappa;
    params = latent::VmfParams{latent::UnitVector{enc.mu.values()}, kappa};
  } else {
    params = latent::GaussianParams{enc.mu.values(), enc.log_var.values()};
  }
  tape.clear();
  return params;
}

double NvrnnModel::recon_nll(const corpus::Document& doc, const std::vector<double>& code) {
  Tape tape;
  Tensor z = has_latent() ? Tensor::from_values({config_.latent_dim}, code)
                          : Tensor::zeros({config_.latent_dim});
  const double value = decode_recon(tape, doc, z).value();
  tape.clear();
  return value;
}

long NvrnnModel::example_tokens(const corpus::Document& doc) const {
  return static_cast<long>(doc.ids.size()) + 1;  // every token plus the end marker
}

RnnlmModel::RnnlmModel(NvrnnConfig config, std::uint64_t seed)
    : NvrnnModel(std::move(config), seed, true) {}

EvalSummary evaluate(Model& model, std::span<const corpus::Document> docs,
                     int samples_per_example, std::uint64_t seed, int threads) {
  if (docs.empty()) throw ConfigError("evaluation split is empty");
  if (samples_per_example < 1) throw ConfigError("samples_per_example must be >= 1");

  struct Slot {
    double kl = 0.0, recon = 0.0, per_token = 0.0, kappa = 0.0;
    long tokens = 0;
    bool used = false;
  };
  std::vector<Slot> slots(docs.size());

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const corpus::Document& doc = docs[i];
      if (!model.admits(doc)) continue;
      Slot& slot = slots[i];
      Rng rng(Rng::derive(seed, i));
      if (model.has_latent()) {
        const latent::PosteriorParams params = model.posterior(doc);
        slot.kl = model.contract().kl(params);
        if (const auto* vmf = std::get_if<latent::VmfParams>(&params)) {
          slot.kappa = vmf->kappa;
        }
        double acc = 0.0;
        for (int s = 0; s < samples_per_example; ++s) {
          const latent::PosteriorDraw draw = model.contract().sample(params, rng);
          acc += model.recon_nll(doc, draw.code);
        }
        slot.recon = acc / samples_per_example;
      } else {
        slot.recon = model.recon_nll(doc, {});
      }
      slot.tokens = model.example_tokens(doc);
      slot.per_token = (slot.kl + slot.recon) / static_cast<double>(slot.tokens);
      slot.used = true;
    }
  };

  const int worker_count =
      std::max(1, std::min<int>(threads, static_cast<int>(docs.size())));
  if (worker_count == 1) {
    run_range(0, docs.size());
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(worker_count));
    const std::size_t chunk = (docs.size() + worker_count - 1) / worker_count;
    for (int w = 0; w < worker_count; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(docs.size(), begin + chunk);
      workers.emplace_back([&, w, begin, end]() {
        try {
          run_range(begin, end);
        } catch (...) {
          failures[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& failure : failures) {
      if (failure) std::rethrow_exception(failure);
    }
  }

  // Reduce in index order so any worker count matches the serial run.
  EvalSummary summary;
  double per_token_sum = 0.0;
  for (const Slot& slot : slots) {
    if (!slot.used) {
      ++summary.skipped;
      continue;
    }
    summary.kl += slot.kl;
    summary.recon_nll += slot.recon;
    summary.nll_bound += slot.kl + slot.recon;
    summary.mean_kappa += slot.kappa;
    summary.tokens += slot.tokens;
    per_token_sum += slot.per_token;
    ++summary.examples;
  }
  if (summary.examples == 0) throw ConfigError("no admissible example in the split");

  const double n = static_cast<double>(summary.examples);
  summary.kl /= n;
  summary.recon_nll /= n;
  const double total_nll = summary.nll_bound;
  summary.nll_bound /= n;
  summary.mean_kappa /= n;
  summary.perplexity = model.per_document_perplexity()
                           ? std::exp(per_token_sum / n)
                           : std::exp(total_nll / static_cast<double>(summary.tokens));
  return summary;
}

TrainResult train(Model& model, std::span<const corpus::Document> train_docs,
                  std::span<const corpus::Document> dev_docs, const TrainConfig& config,
                  const std::string& checkpoint_path) {
  config.validate();
  if (train_docs.empty()) throw ConfigError("training split is empty");
  if (dev_docs.empty()) throw ConfigError("held-out split is empty");

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train_docs.size(); ++i) {
    if (model.admits(train_docs[i])) order.push_back(i);
  }
  if (order.empty()) throw ConfigError("no admissible training example");

  TrainResult result;
  result.log_csv = "epoch,split,kl,recon,nll_bound,ppl,kl_weight,lr\n";
  double best = std::numeric_limits<double>::infinity();
  double lr = config.learning_rate;
  int since_improvement = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double kl_weight = anneal_weight(config.anneal, epoch);

    Rng shuffle_rng(Rng::derive(config.seed, 0x10000u + static_cast<unsigned>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    }

    Rng noise_rng(Rng::derive(config.seed, 0x20000u + static_cast<unsigned>(epoch)));
    double kl_sum = 0.0, recon_sum = 0.0, nll_sum = 0.0, per_token_sum = 0.0;
    long token_sum = 0;
    for (std::size_t i : order) {
      Tape tape;
      Model::Forward fwd = model.forward(tape, train_docs[i], noise_rng, kl_weight);
      if (!std::isfinite(fwd.loss.value())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", example " + std::to_string(i) +
                           ": kl=" + std::to_string(fwd.report.kl) +
                           ", recon=" + std::to_string(fwd.report.recon_nll));
      }
      tape.backward(fwd.loss);
      sgd_step(model.parameters(), lr, config.clip_norm);
      kl_sum += fwd.report.kl;
      recon_sum += fwd.report.recon_nll;
      nll_sum += fwd.report.nll_bound;
      token_sum += fwd.report.tokens;
      per_token_sum += fwd.report.nll_bound / static_cast<double>(fwd.report.tokens);
    }

    const double n = static_cast<double>(order.size());
    const double train_ppl = model.per_document_perplexity()
                                 ? std::exp(per_token_sum / n)
                                 : std::exp(nll_sum / static_cast<double>(token_sum));
    result.log_csv += format_row(epoch, "train", kl_sum / n, recon_sum / n, nll_sum / n,
                                 train_ppl, kl_weight, lr);

    const EvalSummary dev = evaluate(
        model, dev_docs, 1, Rng::derive(config.seed, 0x30000u + static_cast<unsigned>(epoch)),
        1);
    result.log_csv += format_row(epoch, "dev", dev.kl, dev.recon_nll, dev.nll_bound,
                                 dev.perplexity, kl_weight, lr);

    if (dev.nll_bound < best) {
      best = dev.nll_bound;
      result.best_dev_nll_bound = best;
      result.best_epoch = epoch;
      result.best_dev = dev;
      since_improvement = 0;
      if (!checkpoint_path.empty()) {
        save_checkpoint(checkpoint_path, model.parameters());
      }
    } else {
      ++since_improvement;
    }
    if (since_improvement >= config.patience && config.patience > 0) {
      lr *= config.lr_decay;
    }
  }
  return result;
}

double unigram_perplexity(std::span<const corpus::Document> train_docs,
                          std::span<const corpus::Document> eval_docs, int vocab_size,
                          bool count_bow) {
  if (vocab_size <= corpus::Vocab::kReservedCount) {
    throw ConfigError("unigram baseline: vocab too small");
  }
  std::vector<double> counts(static_cast<std::size_t>(vocab_size), 0.0);
  double total = 0.0;
  for (const corpus::Document& doc : train_docs) {
    for (int id : doc.ids) {
      if (id < corpus::Vocab::kReservedCount) continue;
      counts[static_cast<std::size_t>(id)] += 1.0;
      total += 1.0;
    }
  }
  const double denom = total + static_cast<double>(vocab_size - corpus::Vocab::kReservedCount);

  double per_token_sum = 0.0;
  long docs_used = 0;
  for (const corpus::Document& doc : eval_docs) {
    if (!corpus::has_content(doc)) continue;
    const corpus::BowVector bow = corpus::to_bow(doc, vocab_size, count_bow);
    double nll = 0.0, weight_sum = 0.0;
    for (int w = corpus::Vocab::kReservedCount; w < vocab_size; ++w) {
      const double weight = bow.weights[static_cast<std::size_t>(w)];
      if (weight == 0.0) continue;
      nll -= weight * std::log((counts[static_cast<std::size_t>(w)] + 1.0) / denom);
      weight_sum += weight;
    }
    per_token_sum += nll / weight_sum;
    ++docs_used;
  }
  if (docs_used == 0) throw ConfigError("unigram baseline: empty evaluation split");
  return std::exp(per_token_sum / static_cast<double>(docs_used));
}

}  // namespace hvae::models
