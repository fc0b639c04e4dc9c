#include "hvae/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <thread>
#include <variant>

#include "hvae/errors.hpp"
#include "hvae/latent.hpp"
#include "hvae/tensor.hpp"

namespace hvae::probes {

namespace {

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const auto idx = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(n));
  return std::min(idx, n - 1);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na < 1e-24 || nb < 1e-24) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> posterior_mean(const latent::PosteriorParams& params) {
  if (const auto* vmf = std::get_if<latent::VmfParams>(&params)) {
    return vmf->mu.components;
  }
  return std::get<latent::GaussianParams>(params).mu;
}

void append_csv_value(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

}  // namespace

const char* to_string(ProbeDirection direction) {
  return direction == ProbeDirection::kCodeToBow ? "code_to_bow" : "bow_to_code";
}

ProbeDirection direction_from_string(const std::string& s) {
  if (s == "code_to_bow") return ProbeDirection::kCodeToBow;
  if (s == "bow_to_code") return ProbeDirection::kBowToCode;
  throw ConfigError("unknown probe direction: " + s);
}

void ProbeConfig::validate() const {
  if (epochs < 1) throw ConfigError("probe: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("probe: learning rate must be > 0");
  if (!(clip_norm > 0.0)) throw ConfigError("probe: clip_norm must be > 0");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("probe: holdout_fraction must be in (0, 1)");
  }
  if (patience < 1) throw ConfigError("probe: patience must be >= 1");
}

std::vector<KappaStatRow> kappa_stats(std::span<const int> dims,
                                      std::span<const double> kappas,
                                      int n_samples, std::uint64_t seed) {
  if (dims.empty() || kappas.empty()) throw ConfigError("kappa table: empty grid");
  if (n_samples < 10000) throw ConfigError("kappa table: n_samples must be >= 10000");
  for (int d : dims) {
    if (d < 2) throw ConfigError("kappa table: dimension must be >= 2");
  }
  for (double k : kappas) {
    if (!(k >= 0.0)) throw ConfigError("kappa table: kappa must be >= 0");
  }

  std::vector<KappaStatRow> rows;
  rows.reserve(dims.size() * kappas.size());
  for (std::size_t di = 0; di < dims.size(); ++di) {
    const int d = dims[di];
    for (std::size_t ki = 0; ki < kappas.size(); ++ki) {
      const double kappa = kappas[ki];
      KappaStatRow row;
      row.d = d;
      row.kappa = kappa;
      row.kl = latent::vmf_kl_uniform(d, kappa);

      latent::VmfParams params;
      params.mu.components.assign(static_cast<std::size_t>(d), 0.0);
      params.mu.components[0] = 1.0;  // alignment is rotation invariant
      params.kappa = kappa;

      // Stream keyed by (d, kappa) bits so the grid layout cannot change
      // any row's samples.
      std::uint64_t key = static_cast<std::uint64_t>(d);
      std::uint64_t kappa_bits;
      static_assert(sizeof kappa_bits == sizeof kappa);
      std::memcpy(&kappa_bits, &kappa, sizeof kappa_bits);
      Rng rng(Rng::derive(Rng::derive(seed, key), kappa_bits));

      double mean = 0.0, m2 = 0.0;
      for (int s = 0; s < n_samples; ++s) {
        const latent::UnitVector z = latent::sample_vmf(params, rng);
        const double cos = z.components[0];
        const double delta = cos - mean;
        mean += delta / (s + 1);
        m2 += delta * (cos - mean);
      }
      row.mean_cos = mean;
      row.std_err = std::sqrt(m2 / (n_samples - 1) / n_samples);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string kappa_stats_csv(std::span<const KappaStatRow> rows) {
  std::string out = "d,kappa,kl,mean_cos,stderr\n";
  for (const KappaStatRow& row : rows) {
    out += std::to_string(row.d);
    out += ',';
    append_csv_value(out, row.kappa);
    out += ',';
    append_csv_value(out, row.kl);
    out += ',';
    append_csv_value(out, row.mean_cos);
    out += ',';
    append_csv_value(out, row.std_err);
    out += '\n';
  }
  return out;
}

ProbeResult fit_readout(const std::vector<std::vector<double>>& sources,
                        const std::vector<std::vector<double>>& targets,
                        ProbeMode mode, const ProbeConfig& config) {
  config.validate();
  if (sources.empty()) throw ConfigError("probe: no source vectors");
  const std::size_t source_dim = sources.front().size();
  for (const auto& s : sources) {
    if (s.size() != source_dim) throw ConfigError("probe: ragged source vectors");
  }
  const bool identity = mode == ProbeMode::kIdentity;
  if (!identity) {
    if (targets.size() != sources.size()) {
      throw ConfigError("probe: source/target counts differ");
    }
    for (const auto& t : targets) {
      if (t.size() != targets.front().size()) {
        throw ConfigError("probe: ragged target vectors");
      }
    }
  }
  auto target_of = [&](std::size_t i) -> const std::vector<double>& {
    return identity ? sources[i] : targets[i];
  };

  ProbeResult result;
  std::vector<std::size_t> source_rows, target_rows;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    double norm2 = 0.0;
    for (double v : target_of(i)) norm2 += v * v;
    if (norm2 < 1e-24) {
      ++result.skipped;
      continue;
    }
    source_rows.push_back(i);
    target_rows.push_back(i);
  }
  if (source_rows.size() < 2) throw ConfigError("probe: fewer than 2 usable rows");

  if (mode == ProbeMode::kShuffled) {
    Rng perm_rng(Rng::derive(config.seed, 1));
    for (std::size_t i = target_rows.size(); i > 1; --i) {
      std::swap(target_rows[i - 1], target_rows[uniform_index(perm_rng, i)]);
    }
  }

  // Seeded split: holdout is a prefix of a shuffled row order.
  std::vector<std::size_t> order(source_rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(Rng::derive(config.seed, 0));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(split_rng, i)]);
  }
  std::size_t holdout_count =
      static_cast<std::size_t>(config.holdout_fraction * order.size());
  holdout_count = std::max<std::size_t>(1, std::min(holdout_count, order.size() - 1));
  const std::vector<std::size_t> holdout(order.begin(),
                                         order.begin() + holdout_count);
  std::vector<std::size_t> train(order.begin() + holdout_count, order.end());
  result.n_examples = static_cast<long>(holdout.size());
  result.n_train = static_cast<long>(train.size());

  const int in_dim = static_cast<int>(source_dim);
  const int out_dim = static_cast<int>(target_of(source_rows.front()).size());
  const int hidden = 2 * in_dim;
  Rng init_rng(Rng::derive(config.seed, 2));
  Tensor w1 = Tensor::param({hidden, in_dim}, "probe.w1");
  Tensor b1 = Tensor::param({hidden}, "probe.b1");
  Tensor w2 = Tensor::param({out_dim, hidden}, "probe.w2");
  Tensor b2 = Tensor::param({out_dim}, "probe.b2");
  init_uniform_fan_in(w1, in_dim, init_rng);
  init_uniform_fan_in(w2, hidden, init_rng);
  std::vector<Tensor> params = {w1, b1, w2, b2};

  auto predict = [&](const std::vector<double>& x, std::vector<double>& out) {
    std::vector<double> h(static_cast<std::size_t>(hidden));
    const auto& w1v = w1.values();
    const auto& b1v = b1.values();
    for (int j = 0; j < hidden; ++j) {
      double acc = b1v[static_cast<std::size_t>(j)];
      const double* row = w1v.data() + static_cast<std::size_t>(j) * in_dim;
      for (int k = 0; k < in_dim; ++k) acc += row[k] * x[static_cast<std::size_t>(k)];
      h[static_cast<std::size_t>(j)] = std::tanh(acc);
    }
    out.assign(static_cast<std::size_t>(out_dim), 0.0);
    const auto& w2v = w2.values();
    const auto& b2v = b2.values();
    for (int j = 0; j < out_dim; ++j) {
      double acc = b2v[static_cast<std::size_t>(j)];
      const double* row = w2v.data() + static_cast<std::size_t>(j) * hidden;
      for (int k = 0; k < hidden; ++k) acc += row[k] * h[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(j)] = acc;
    }
  };

  auto holdout_cosine = [&]() {
    double sum = 0.0;
    std::vector<double> pred;
    for (std::size_t row : holdout) {
      predict(sources[source_rows[row]], pred);
      sum += cosine(pred, target_of(target_rows[row]));
    }
    return sum / static_cast<double>(holdout.size());
  };

  double best = holdout_cosine();  // epoch -1: untrained readout
  int since_improvement = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(Rng::derive(config.seed, 0x100u + static_cast<unsigned>(epoch)));
    for (std::size_t i = train.size(); i > 1; --i) {
      std::swap(train[i - 1], train[uniform_index(epoch_rng, i)]);
    }
    for (std::size_t row : train) {
      Tape tape;
      Tensor x = Tensor::from_values({in_dim}, sources[source_rows[row]]);
      Tensor t = Tensor::from_values({out_dim}, target_of(target_rows[row]));
      Tensor h = tape.tanh(tape.add(tape.matmul(w1, x), b1));
      Tensor pred = tape.add(tape.matmul(w2, h), b2);
      Tensor diff = tape.sub(pred, t);
      Tensor loss = tape.scale(tape.sum(tape.multiply(diff, diff)), 0.5);
      tape.backward(loss);
      sgd_step(params, config.learning_rate, config.clip_norm);
    }
    const double score = holdout_cosine();
    if (score > best) {
      best = score;
      result.best_epoch = epoch;
      since_improvement = 0;
    } else if (++since_improvement >= config.patience) {
      break;
    }
  }
  result.mean_cosine = best;
  return result;
}

ProbeResult bow_code_probe(models::Model& model,
                           std::span<const corpus::Document> docs, int vocab_size,
                           bool count_bow, ProbeDirection direction,
                           const ProbeConfig& config) {
  if (!model.has_latent()) throw ConfigError("probe: model has no latent code");
  if (docs.empty()) throw ConfigError("probe: empty split");

  std::vector<std::vector<double>> codes, bows;
  long skipped = 0;
  for (const corpus::Document& doc : docs) {
    if (!model.admits(doc) || !corpus::has_content(doc)) {
      ++skipped;
      continue;
    }
    codes.push_back(posterior_mean(model.posterior(doc)));
    bows.push_back(corpus::to_bow(doc, vocab_size, count_bow).weights);
  }
  if (codes.empty()) throw ConfigError("probe: no usable document");

  ProbeResult result =
      direction == ProbeDirection::kCodeToBow
          ? fit_readout(codes, bows, ProbeMode::kPaired, config)
          : fit_readout(bows, codes, ProbeMode::kPaired, config);
  result.direction = direction;
  result.skipped += skipped;
  return result;
}

std::vector<SwapPoint> swap_sensitivity(models::Model& model,
                                        std::span<const corpus::Document> docs,
                                        std::span<const double> p_grid, int repeats,
                                        std::uint64_t seed, int threads) {
  if (!model.has_latent()) throw ConfigError("swap probe: model has no latent code");
  if (p_grid.empty()) throw ConfigError("swap probe: empty p grid");
  for (double p : p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("swap probe: p must be in [0, 1]");
  }
  if (repeats < 1) throw ConfigError("swap probe: repeats must be >= 1");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (model.admits(docs[i]) && docs[i].ids.size() >= 2) eligible.push_back(i);
  }
  if (eligible.empty()) throw ConfigError("swap probe: no document with a swappable pair");

  std::vector<std::vector<double>> base(eligible.size());
  for (std::size_t e = 0; e < eligible.size(); ++e) {
    base[e] = posterior_mean(model.posterior(docs[eligible[e]]));
  }

  const long pairs = static_cast<long>(eligible.size()) * repeats;
  std::vector<SwapPoint> points;
  points.reserve(p_grid.size());
  for (std::size_t pi = 0; pi < p_grid.size(); ++pi) {
    const double p = p_grid[pi];
    SwapPoint point;
    point.p = p;
    point.pairs = pairs;
    if (p == 0.0) {
      // No swap can fire, so every perturbation is the original document.
      point.mean_cos = 1.0;
      point.std_err = 0.0;
      points.push_back(point);
      continue;
    }

    std::vector<std::vector<double>> slot_cos(eligible.size());
    auto run_range = [&](std::size_t begin, std::size_t end) {
      for (std::size_t e = begin; e < end; ++e) {
        const corpus::Document& doc = docs[eligible[e]];
        Rng rng(Rng::derive(Rng::derive(seed, pi), e));
        auto& out = slot_cos[e];
        out.reserve(static_cast<std::size_t>(repeats));
        for (int r = 0; r < repeats; ++r) {
          const corpus::Document perturbed = corpus::swap_perturb(doc, p, rng);
          const std::vector<double> code = posterior_mean(model.posterior(perturbed));
          out.push_back(cosine(base[e], code));
        }
      }
    };

    const int worker_count =
        std::max(1, std::min<int>(threads, static_cast<int>(eligible.size())));
    if (worker_count == 1) {
      run_range(0, eligible.size());
    } else {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> failures(static_cast<std::size_t>(worker_count));
      const std::size_t chunk = (eligible.size() + worker_count - 1) / worker_count;
      for (int w = 0; w < worker_count; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        const std::size_t end = std::min(eligible.size(), begin + chunk);
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

    // Two-pass mean/variance in index order: worker count cannot change it.
    double sum = 0.0;
    for (const auto& values : slot_cos) {
      for (double c : values) sum += c;
    }
    const double mean = sum / static_cast<double>(pairs);
    double ss = 0.0;
    for (const auto& values : slot_cos) {
      for (double c : values) ss += (c - mean) * (c - mean);
    }
    point.mean_cos = mean;
    point.std_err =
        pairs > 1 ? std::sqrt(ss / static_cast<double>(pairs - 1) / pairs) : 0.0;
    points.push_back(point);
  }
  return points;
}

std::string swap_csv(std::span<const SwapPoint> points) {
  std::string out = "p,mean_cos,stderr\n";
  for (const SwapPoint& point : points) {
    append_csv_value(out, point.p);
    out += ',';
    append_csv_value(out, point.mean_cos);
    out += ',';
    append_csv_value(out, point.std_err);
    out += '\n';
  }
  return out;
}

}  // namespace hvae::probes
