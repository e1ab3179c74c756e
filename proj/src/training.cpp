#include "phantasmagoria/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

#include "phantasmagoria/checkpoint.hpp"
#include "phantasmagoria/errors.hpp"
#include "phantasmagoria/png_io.hpp"

namespace phantasmagoria {

using nlohmann::json;

void TrainingConfig::validate() const {
  if (alpha < 0 || beta < 0) throw std::invalid_argument("alpha and beta must be non-negative");
  if (alpha == 0 && beta == 0) throw std::invalid_argument("alpha and beta cannot both be zero");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (max_epochs < 0 || max_iterations < 0 || pretrain_epochs < 0)
    throw std::invalid_argument("epoch and iteration limits must be non-negative");
  if (tau <= 0) throw std::invalid_argument("tau must be positive");
  if (lr_generator <= 0 || lr_discriminator <= 0) throw std::invalid_argument("learning rates must be positive");
  if (stop_window < 1) throw std::invalid_argument("stop_window must be at least 1");
  if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  if (central_fraction <= 0 || central_fraction > 1) throw std::invalid_argument("central_fraction must be in (0,1]");
}

int TrainingConfig::iterations_per_epoch(std::size_t store_size) const {
  return std::max(1, static_cast<int>(store_size / static_cast<std::size_t>(batch_size)));
}

// --- diagnostics -------------------------------------------------------------

double batch_diversity(const std::vector<Image>& batch) {
  if (batch.size() < 2) throw std::invalid_argument("diversity needs at least two images");
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t j = i + 1; j < batch.size(); ++j) {
      if (!batch[i].same_shape(batch[j])) throw std::invalid_argument("diversity over differently shaped images");
      total += std::sqrt(mean_squared_error(batch[i], batch[j]));
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

double generator_loss(double pq, const std::vector<double>& bd_probs, double alpha, double beta, double tau) {
  const double shortfall = tau - std::min(pq, tau);
  double bd = 0;
  for (double p : bd_probs) bd += (p - 1) * (p - 1);
  if (!bd_probs.empty()) bd /= static_cast<double>(bd_probs.size());
  return alpha * shortfall * shortfall + beta * bd;
}

double generator_loss(double pq, const std::vector<double>& bd_probs, const TrainingConfig& config) {
  return generator_loss(pq, bd_probs, config.alpha, config.beta, config.tau);
}

GeneratorLossTerms batch_generator_loss(const std::vector<double>& pq, const std::vector<double>& probs,
                                        double alpha, double beta, double tau) {
  if (pq.size() != probs.size() || pq.empty()) throw std::invalid_argument("loss needs one pq and one prob per image");
  const double n = static_cast<double>(pq.size());
  GeneratorLossTerms t;
  t.dpq.resize(pq.size());
  t.dprob.resize(pq.size());
  for (std::size_t i = 0; i < pq.size(); ++i) {
    const double shortfall = tau - std::min(pq[i], tau);
    t.illusion += shortfall * shortfall / n;
    t.dpq[i] = pq[i] < tau ? -2 * alpha * shortfall / n : 0.0;
    const double d = probs[i] - 1;
    t.background += d * d / n;
    t.dprob[i] = 2 * beta * d / n;
  }
  t.total = alpha * t.illusion + beta * t.background;
  return t;
}

json to_json(const IterationLog& l) {
  return {{"iteration", l.iteration}, {"epoch", l.epoch}, {"phase", l.phase},
          {"d_loss", l.d_loss}, {"g_loss", l.g_loss}, {"illusion_term", l.illusion_term},
          {"background_term", l.background_term}, {"d_real_accuracy", l.d_real_accuracy},
          {"d_fake_accuracy", l.d_fake_accuracy}, {"bd_mean_prob", l.bd_mean_prob},
          {"pq_mean", l.pq_mean}, {"pq_median", l.pq_median}, {"pq_min", l.pq_min},
          {"pq_max", l.pq_max}, {"diversity", l.diversity}};
}

bool loss_converged(const std::vector<double>& epoch_losses, int window, double tolerance) {
  const std::size_t w = static_cast<std::size_t>(window);
  if (epoch_losses.size() < 2 * w) return false;
  const auto end = epoch_losses.end();
  const double cur = std::accumulate(end - w, end, 0.0) / w;
  const double prev = std::accumulate(end - 2 * w, end - w, 0.0) / w;
  return std::abs(cur - prev) / std::max(std::abs(prev), 1e-12) < tolerance;
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance: return "tolerance";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::max_iterations: return "max_iterations";
  }
  return "?";
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

nn::AdamConfig adam_config(double lr, const TrainingConfig& c) {
  nn::AdamConfig a;
  a.learning_rate = lr;
  a.beta1 = c.adam_beta1;
  a.beta2 = c.adam_beta2;
  return a;
}

struct DiscriminatorStep {
  double loss = 0.0;
  double real_accuracy = 0.0;
  double fake_accuracy = 0.0;
};

// One binary cross-entropy update on a real and a generated batch.
DiscriminatorStep discriminator_step(DiscriminatorParams<float>& disc, nn::Adam<DiscriminatorParams<float>>& adam,
                                     const Tensor<float>& real, const Tensor<float>& fake) {
  DiscriminatorStep s;
  auto grad = zeros_like(disc);
  for (int pass = 0; pass < 2; ++pass) {
    const bool is_real = pass == 0;
    const Tensor<float>& x = is_real ? real : fake;
    DiscriminatorTrace<float> trace;
    const DiscriminatorOutput out = discriminator_forward(disc, x, &trace);
    const double n = static_cast<double>(x.n());
    std::vector<double> dlogits(x.n());
    for (int i = 0; i < x.n(); ++i) {
      const double l = out.logits[i], p = out.probabilities[i];
      s.loss += (is_real ? softplus(-l) : softplus(l)) / n;
      dlogits[i] = (is_real ? p - 1.0 : p) / n;
      if ((p >= 0.5) == is_real) (is_real ? s.real_accuracy : s.fake_accuracy) += 1.0 / n;
    }
    discriminator_backward(disc, trace, dlogits, &grad);
  }
  if (!std::isfinite(s.loss)) throw NumericalError("discriminator loss became non-finite");
  adam.step(disc, grad);
  return s;
}

// d/dlogit of a loss given d/dprob, through the logistic.
std::vector<double> through_logistic(const std::vector<double>& dprob, const std::vector<double>& probs) {
  std::vector<double> d(dprob.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = dprob[i] * probs[i] * (1 - probs[i]);
  return d;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += g.data()[i];
}

void check_store(const ImageStore& store, const GanState& state) {
  if (store.channels != state.discriminator.shape.in_channels)
    throw std::invalid_argument("store has " + std::to_string(store.channels) +
                                " channels but the discriminator expects " +
                                std::to_string(state.discriminator.shape.in_channels));
  if (state.generator.shape.out_channels != store.channels)
    throw std::invalid_argument("generator and store channel counts differ");
  if (store.crop_size != state.discriminator.shape.input_size ||
      state.generator.shape.output_size() != store.crop_size)
    throw std::invalid_argument("generator, discriminator and store disagree on image size");
}

}  // namespace

// --- pretraining ------------------------------------------------------------

PretrainResult pretrain_gan(GanState state, const ImageStore& store, const TrainingConfig& config,
                            const IterationCallback& on_iteration) {
  TrainingConfig c = config;
  c.alpha = std::max(c.alpha, 1.0);  // pretraining has no illusion term; keep validation meaningful
  c.validate();
  check_store(store, state);
  PretrainResult result;
  const int ipe = config.iterations_per_epoch(store.size());
  int total = config.pretrain_epochs * ipe;
  if (config.max_iterations > 0) total = std::min(total, config.max_iterations);

  auto data = batch_stream(store, 1);
  auto zrng = stream(config.seed, 101);
  nn::Adam<GeneratorParams<float>> adam_g(state.generator, adam_config(config.lr_generator, config));
  nn::Adam<DiscriminatorParams<float>> adam_d(state.discriminator, adam_config(config.lr_discriminator, config));
  const int n = config.batch_size;

  for (int it = 0; it < total; ++it) {
    const auto real = to_tensor<float>(sample_batch(store, n, data));
    GeneratorTrace<float> gtrace;
    const auto fake = generator_forward(state.generator, sample_latent<float>(n, state.generator.shape.latent, zrng),
                                        &gtrace);
    const DiscriminatorStep ds = discriminator_step(state.discriminator, adam_d, real, fake);

    DiscriminatorTrace<float> dtrace;
    const DiscriminatorOutput out = discriminator_forward(state.discriminator, fake, &dtrace);
    std::vector<double> dprob(n);
    double g_loss = 0;
    for (int i = 0; i < n; ++i) {
      const double d = out.probabilities[i] - 1;
      g_loss += d * d / n;
      dprob[i] = 2 * d / n;
    }
    if (!std::isfinite(g_loss)) throw NumericalError("generator loss became non-finite during pretraining");
    const auto dx = discriminator_backward(state.discriminator, dtrace, through_logistic(dprob, out.probabilities),
                                           static_cast<DiscriminatorParams<float>*>(nullptr));
    auto grad = zeros_like(state.generator);
    generator_backward(state.generator, gtrace, dx, &grad);
    adam_g.step(state.generator, grad);

    IterationLog log;
    log.iteration = it;
    log.epoch = it / ipe;
    log.phase = "pretrain";
    log.d_loss = ds.loss;
    log.g_loss = g_loss;
    log.background_term = g_loss;
    log.d_real_accuracy = ds.real_accuracy;
    log.d_fake_accuracy = ds.fake_accuracy;
    log.bd_mean_prob = std::accumulate(out.probabilities.begin(), out.probabilities.end(), 0.0) / n;
    log.diversity = batch_diversity(to_images(fake));
    result.history.push_back(log);
    if (on_iteration) on_iteration(log);
  }
  result.state = std::move(state);
  return result;
}

double discriminator_accuracy(const DiscriminatorParams<float>& disc, const std::vector<Image>& images,
                              bool label_real) {
  if (images.empty()) return 0.0;
  const DiscriminatorOutput out = discriminator_forward(disc, to_tensor<float>(images));
  int ok = 0;
  for (double p : out.probabilities) ok += (p >= 0.5) == label_real;
  return static_cast<double>(ok) / static_cast<double>(images.size());
}

// --- fine-tuning ------------------------------------------------------------

Stimulus make_stimulus(const Image& inducer, const TargetSpec& target, double central_fraction) {
  const Image up = upscale_nearest(inducer, kUpscaleFactor);
  return composite(up, target, default_placement(target, up.width()), central_fraction);
}

template <typename T>
GeneratorForward<T> generator_objective_forward(const GeneratorParams<T>& gen, const DiscriminatorParams<T>& disc,
                                                const Tensor<T>& z, const IllusionSetup& setup,
                                                double central_fraction, bool id_gradient) {
  GeneratorForward<T> f;
  f.fake = generator_forward(gen, z, &f.gtrace);
  f.inducers = to_images(f.fake);
  const std::size_t n = f.inducers.size();
  f.pq.resize(n);
  f.stimulus_gradients.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.stimuli.push_back(make_stimulus(f.inducers[i], setup.target, central_fraction));
    IllusionScore s = score_illusion(*setup.vts, setup.pq, f.stimuli.back(), id_gradient);
    f.pq[i] = s.pq;
    f.stimulus_gradients[i] = std::move(s.stimulus_gradient);
    if (!std::isfinite(f.pq[i])) throw NumericalError("perceptual quantifier became non-finite");
  }
  f.probabilities = discriminator_forward(disc, f.fake, &f.dtrace).probabilities;
  return f;
}

template <typename T>
GeneratorParams<T> generator_objective_backward(const GeneratorParams<T>& gen, const DiscriminatorParams<T>& disc,
                                                const GeneratorForward<T>& fwd, const GeneratorLossTerms& loss,
                                                bool id_term, bool bd_term) {
  const int n = fwd.fake.n(), channels = fwd.fake.c(), size = fwd.fake.h();
  const int factor = kStimulusSize / size;
  Tensor<T> dout(n, channels, size, size);
  if (id_term) {
    for (int i = 0; i < n; ++i) {
      if (loss.dpq[i] == 0.0) continue;
      Image g = fwd.stimulus_gradients[i];
      if (g.size() == 0) throw std::invalid_argument("forward pass was run without the solver gradient");
      clear_target_pixels(g, fwd.stimuli[i]);
      const Image gi = block_sum(g, factor);
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) dout.at(i, c, y, x) += static_cast<T>(loss.dpq[i] * gi.at(y, x, c));
    }
  }
  if (bd_term) {
    const auto dx = discriminator_backward(disc, fwd.dtrace, through_logistic(loss.dprob, fwd.probabilities),
                                           static_cast<DiscriminatorParams<T>*>(nullptr));
    add_into(dout, dx);
  }
  auto grad = zeros_like(gen);
  generator_backward(gen, fwd.gtrace, dout, &grad);
  return grad;
}

#define PHANTASMAGORIA_OBJECTIVE(T)                                                                        \
  template GeneratorForward<T> generator_objective_forward(const GeneratorParams<T>&,                      \
                                                           const DiscriminatorParams<T>&, const Tensor<T>&, \
                                                           const IllusionSetup&, double, bool);             \
  template GeneratorParams<T> generator_objective_backward(const GeneratorParams<T>&,                      \
                                                           const DiscriminatorParams<T>&,                  \
                                                           const GeneratorForward<T>&,                     \
                                                           const GeneratorLossTerms&, bool, bool);
PHANTASMAGORIA_OBJECTIVE(float)
PHANTASMAGORIA_OBJECTIVE(double)
#undef PHANTASMAGORIA_OBJECTIVE

FinetuneResult finetune(GanState state, bool pretrained, const IllusionSetup& setup, const ImageStore& store,
                        const TrainingConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  check_store(store, state);
  if (!pretrained && !config.allow_unpretrained)
    throw std::invalid_argument(
        "fine-tuning an unpretrained generator risks mode collapse; pretrain first or set allow_unpretrained");
  if (!setup.vts) throw std::invalid_argument("fine-tuning needs a visual task solver");
  setup.pq.validate();
  setup.target.validate();
  if (setup.target.channels() != store.channels)
    throw std::invalid_argument("target value has " + std::to_string(setup.target.channels()) +
                                " channels but images have " + std::to_string(store.channels));

  const int n = config.batch_size;
  const int ipe = config.iterations_per_epoch(store.size());
  int total = config.max_epochs * ipe;
  if (config.max_iterations > 0) total = std::min(total, config.max_iterations);

  auto data = batch_stream(store, 2);
  auto zrng = stream(config.seed, 202);
  nn::Adam<GeneratorParams<float>> adam_g(state.generator, adam_config(config.lr_generator, config));
  nn::Adam<DiscriminatorParams<float>> adam_d(state.discriminator, adam_config(config.lr_discriminator, config));

  FinetuneResult result;
  result.stop_reason = config.max_iterations > 0 && config.max_iterations < config.max_epochs * ipe
                           ? StopReason::max_iterations
                           : StopReason::max_epochs;
  double alpha = config.alpha, beta = config.beta;
  std::vector<double> epoch_losses;
  double epoch_sum = 0;
  int epoch_count = 0;

  for (int it = 0; it < total; ++it) {
    const auto z = sample_latent<float>(n, state.generator.shape.latent, zrng);
    const auto real = to_tensor<float>(sample_batch(store, n, data));
    const DiscriminatorStep ds =
        discriminator_step(state.discriminator, adam_d, real, generator_forward(state.generator, z));

    const bool need_id_gradient = config.alpha > 0;
    const auto fwd = generator_objective_forward(state.generator, state.discriminator, z, setup,
                                                 config.central_fraction, need_id_gradient);
    const auto& pq = fwd.pq;
    const auto& probs = fwd.probabilities;

    if (it == 0 && config.normalize_terms) {
      const GeneratorLossTerms raw = batch_generator_loss(pq, probs, 1.0, 1.0, config.tau);
      alpha = config.alpha / std::max(raw.illusion, 1e-8);
      beta = config.beta / std::max(raw.background, 1e-8);
    }
    const GeneratorLossTerms loss = batch_generator_loss(pq, probs, alpha, beta, config.tau);
    if (!std::isfinite(loss.total)) throw NumericalError("generator loss became non-finite");

    const auto grad =
        generator_objective_backward(state.generator, state.discriminator, fwd, loss, need_id_gradient, beta > 0);
    adam_g.step(state.generator, grad);
    if (!all_finite(state.generator)) throw NumericalError("generator parameters became non-finite");
    const auto& inducers = fwd.inducers;
    const auto& stimuli = fwd.stimuli;

    IterationLog log;
    log.iteration = it;
    log.epoch = it / ipe;
    log.phase = "finetune";
    log.d_loss = ds.loss;
    log.g_loss = loss.total;
    log.illusion_term = loss.illusion;
    log.background_term = loss.background;
    log.d_real_accuracy = ds.real_accuracy;
    log.d_fake_accuracy = ds.fake_accuracy;
    log.bd_mean_prob = std::accumulate(probs.begin(), probs.end(), 0.0) / n;
    log.pq_mean = std::accumulate(pq.begin(), pq.end(), 0.0) / n;
    log.pq_median = median(pq);
    log.pq_min = *std::min_element(pq.begin(), pq.end());
    log.pq_max = *std::max_element(pq.begin(), pq.end());
    log.diversity = batch_diversity(inducers);
    result.history.push_back(log);
    if (on_iteration) on_iteration(log);

    if (it % config.record_every == 0) {
      for (int i = 0; i < n; ++i) {
        CandidateRecord r;
        r.iteration = it;
        r.batch_index = i;
        r.inducer = inducers[i];
        r.stimulus = stimuli[i];
        r.pq_value = pq[i];
        r.bd_prob = probs[i];
        r.diversity_at_iteration = log.diversity;
        result.records.push_back(std::move(r));
      }
    }

    epoch_sum += loss.total;
    if (++epoch_count == ipe) {
      epoch_losses.push_back(epoch_sum / ipe);
      epoch_sum = 0;
      epoch_count = 0;
      if (loss_converged(epoch_losses, config.stop_window, config.stop_tolerance)) {
        result.stop_reason = StopReason::tolerance;
        break;
      }
    }
  }
  result.state = std::move(state);
  result.alpha_effective = alpha;
  result.beta_effective = beta;
  return result;
}

// --- candidate selection ----------------------------------------------------

std::vector<CandidateRecord> select_candidates(const std::vector<CandidateRecord>& records, int k,
                                               double pq_threshold, std::uint64_t seed) {
  if (k < 0) throw std::invalid_argument("k must be non-negative");
  std::vector<std::size_t> qualifying;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].pq_value >= pq_threshold) qualifying.push_back(i);
  if (static_cast<int>(qualifying.size()) < k)
    throw std::runtime_error("only " + std::to_string(qualifying.size()) + " records reach pq >= " +
                             std::to_string(pq_threshold) + ", " + std::to_string(k) + " requested");

  std::map<int, int> per_iteration;
  for (std::size_t i : qualifying) per_iteration[records[i].iteration] = 0;
  const int distinct = static_cast<int>(per_iteration.size());
  const int cap = distinct ? (k + distinct - 1) / distinct + 1 : 0;

  std::mt19937_64 rng(seed);
  std::shuffle(qualifying.begin(), qualifying.end(), rng);
  std::vector<char> taken(qualifying.size(), 0);
  std::vector<CandidateRecord> out;
  for (std::size_t j = 0; j < qualifying.size() && static_cast<int>(out.size()) < k; ++j) {
    int& used = per_iteration[records[qualifying[j]].iteration];
    if (used >= cap) continue;
    ++used;
    taken[j] = 1;
    out.push_back(records[qualifying[j]]);
  }
  // Fill pass for when a few iterations hold most qualifying records.
  for (std::size_t j = 0; j < qualifying.size() && static_cast<int>(out.size()) < k; ++j)
    if (!taken[j]) out.push_back(records[qualifying[j]]);
  return out;
}

json export_candidates(const std::filesystem::path& dir, const std::vector<CandidateRecord>& selected,
                       const ExportInfo& info) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "phantasmagoria-candidates-v1";
  manifest["method"] = info.method;
  manifest["pq_kind"] = std::string(to_string(info.pq.kind));
  manifest["sign"] = std::string(to_string(info.pq.sign));
  manifest["seed"] = info.seed;
  manifest["candidates"] = json::array();
  for (std::size_t j = 0; j < selected.size(); ++j) {
    const CandidateRecord& r = selected[j];
    char base[32];
    std::snprintf(base, sizeof(base), "candidate_%03zu", j);
    const std::string stem(base);
    auto write = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
      write_file_bytes(dir / name, bytes);
      return sha256_hex(bytes);
    };
    json entry;
    entry["id"] = stem;
    entry["file"] = stem + ".png";
    entry["sha256"] = write(stem + ".png", encode_png(r.stimulus.image));
    entry["inducer_file"] = stem + "_inducer.png";
    entry["inducer_sha256"] = write(stem + "_inducer.png", encode_png(r.inducer));
    entry["left_mask_file"] = stem + "_left_mask.png";
    write(stem + "_left_mask.png", encode_png(r.stimulus.left_mask));
    entry["right_mask_file"] = stem + "_right_mask.png";
    write(stem + "_right_mask.png", encode_png(r.stimulus.right_mask));
    entry["iteration"] = r.iteration;
    entry["batch_index"] = r.batch_index;
    entry["pq_value"] = r.pq_value;
    entry["bd_prob"] = r.bd_prob;
    entry["sign"] = std::string(to_string(info.pq.sign));
    entry["seed"] = info.seed;
    manifest["candidates"].push_back(entry);
  }
  write_file_bytes(dir / "manifest.json", [&] {
    const std::string text = manifest.dump(2) + "\n";
    return std::vector<std::uint8_t>(text.begin(), text.end());
  }());
  return manifest;
}

void save_records(const std::filesystem::path& path, const std::vector<CandidateRecord>& records,
                  const json& meta) {
  CheckpointData data;
  data.role = "records";
  data.architecture = json::object();
  data.meta = meta;
  json entries = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CandidateRecord& r = records[i];
    char name[32];
    std::snprintf(name, sizeof(name), "inducer_%06zu", i);
    nn::ParamTensor<float> t({r.inducer.height(), r.inducer.width(), r.inducer.channels()});
    const auto& px = r.inducer.data();
    std::transform(px.begin(), px.end(), t.values.begin(), [](double v) { return static_cast<float>(v); });
    data.tensors.emplace(name, std::move(t));
    entries.push_back({{"tensor", name},
                       {"iteration", r.iteration},
                       {"batch_index", r.batch_index},
                       {"pq_value", r.pq_value},
                       {"bd_prob", r.bd_prob},
                       {"diversity_at_iteration", r.diversity_at_iteration}});
  }
  data.meta["records"] = entries;
  write_checkpoint(path, data);
}

std::vector<CandidateRecord> load_records(const std::filesystem::path& path, const TargetSpec& target,
                                          double central_fraction, json* meta) {
  CheckpointData data = read_checkpoint(path);
  if (data.role != "records") throw std::invalid_argument(path.string() + ": not a records file");
  std::vector<CandidateRecord> out;
  for (const auto& e : data.meta.at("records")) {
    const auto& t = data.tensors.at(e.at("tensor").get<std::string>());
    if (t.shape.size() != 3) throw std::invalid_argument(path.string() + ": bad inducer tensor");
    CandidateRecord r;
    r.inducer = Image(t.shape[0], t.shape[1], t.shape[2], std::vector<double>(t.values.begin(), t.values.end()));
    r.iteration = e.at("iteration").get<int>();
    r.batch_index = e.at("batch_index").get<int>();
    r.pq_value = e.at("pq_value").get<double>();
    r.bd_prob = e.at("bd_prob").get<double>();
    r.diversity_at_iteration = e.at("diversity_at_iteration").get<double>();
    r.stimulus = make_stimulus(r.inducer, target, central_fraction);
    out.push_back(std::move(r));
  }
  if (meta) {
    *meta = data.meta;
    meta->erase("records");
  }
  return out;
}

}  // namespace phantasmagoria
