#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "phantasmagoria/dataset.hpp"
#include "phantasmagoria/illusion_discriminator.hpp"
#include "phantasmagoria/networks.hpp"
#include "phantasmagoria/nn/adam.hpp"
#include "phantasmagoria/stimulus.hpp"

namespace phantasmagoria {

struct TrainingConfig {
  double alpha = 1.0;  // illusion term weight
  double beta = 1.0;   // background term weight
  int batch_size = 32;
  int max_epochs = 100;
  int max_iterations = 0;  // 0: bounded by max_epochs only
  double lr_generator = 2e-4;
  double lr_discriminator = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double tau = 0.15;
  int pretrain_epochs = 0;
  std::uint64_t seed = 1;
  int stop_window = 10;         // epochs per moving-average window
  double stop_tolerance = 0.01;  // relative change that counts as "no change"
  bool normalize_terms = true;  // divide alpha/beta by each term's value at fine-tune start
  int record_every = 10;        // iterations between candidate snapshots
  double collapse_threshold = 0.02;
  double central_fraction = kDefaultCentralFraction;
  bool allow_unpretrained = false;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  int iterations_per_epoch(std::size_t store_size) const;
};

// ---------------------------------------------------------------------------
// Diagnostics

/// Mean pairwise RMS difference over all unordered pairs.
double batch_diversity(const std::vector<Image>& batch);

/// alpha (tau - min(pq, tau))^2 + beta mean((p - 1)^2).
double generator_loss(double pq, const std::vector<double>& bd_probs, double alpha, double beta, double tau);
double generator_loss(double pq, const std::vector<double>& bd_probs, const TrainingConfig& config);

/// Batch loss: mean over images of generator_loss(pq_i, {p_i}).
struct GeneratorLossTerms {
  double illusion = 0.0;    // mean (tau - min(pq_i, tau))^2
  double background = 0.0;  // mean (p_i - 1)^2
  std::vector<double> dpq;  // d total / d pq_i
  std::vector<double> dprob;  // d total / d p_i
  double total = 0.0;
};
GeneratorLossTerms batch_generator_loss(const std::vector<double>& pq, const std::vector<double>& probs,
                                        double alpha, double beta, double tau);

// ---------------------------------------------------------------------------
// Adversarial pretraining

struct IterationLog {
  int iteration = 0;
  int epoch = 0;
  std::string phase;  // "pretrain" or "finetune"
  double d_loss = 0.0;
  double g_loss = 0.0;
  double illusion_term = 0.0;
  double background_term = 0.0;
  double d_real_accuracy = 0.0;
  double d_fake_accuracy = 0.0;
  double bd_mean_prob = 0.0;
  double pq_mean = 0.0;
  double pq_median = 0.0;
  double pq_min = 0.0;
  double pq_max = 0.0;
  double diversity = 0.0;
};

nlohmann::json to_json(const IterationLog& log);

using IterationCallback = std::function<void(const IterationLog&)>;

struct GanState {
  GeneratorParams<float> generator;
  DiscriminatorParams<float> discriminator;
};

struct PretrainResult {
  GanState state;
  std::vector<IterationLog> history;
};

/// Alternating updates: the discriminator minimises binary cross-entropy on
/// real (label 1) vs generated (label 0); the generator minimises
/// mean((D(G(z)) - 1)^2).
PretrainResult pretrain_gan(GanState state, const ImageStore& store, const TrainingConfig& config,
                            const IterationCallback& on_iteration = {});

/// Accuracy of the discriminator at threshold 0.5 on a set of images.
double discriminator_accuracy(const DiscriminatorParams<float>& disc, const std::vector<Image>& images,
                              bool label_real);

// ---------------------------------------------------------------------------
// Fine-tuning with the illusion discriminator

struct CandidateRecord {
  int iteration = 0;
  int batch_index = 0;
  Image inducer;      // generator output at 32 x 32
  Stimulus stimulus;  // upscaled inducer with the targets pasted
  double pq_value = 0.0;
  double bd_prob = 0.0;
  double diversity_at_iteration = 0.0;
};

struct IllusionSetup {
  const VisualTaskSolver* vts = nullptr;
  PqConfig pq;
  TargetSpec target;
};

/// Build the stimulus for one inducer: nearest upscale to the solver
/// resolution, then the two targets pasted at the default placement.
Stimulus make_stimulus(const Image& inducer, const TargetSpec& target, double central_fraction);

/// One generator objective evaluation: G(z), the pasted targets, the solver
/// and quantifier per image, and D(G(z)). Traces are kept for the backward pass.
template <typename T>
struct GeneratorForward {
  Tensor<T> fake;
  GeneratorTrace<T> gtrace;
  DiscriminatorTrace<T> dtrace;
  std::vector<Image> inducers;
  std::vector<Stimulus> stimuli;
  std::vector<Image> stimulus_gradients;  // d pq_i / d stimulus_i, when requested
  std::vector<double> pq;
  std::vector<double> probabilities;
};

template <typename T>
GeneratorForward<T> generator_objective_forward(const GeneratorParams<T>& gen, const DiscriminatorParams<T>& disc,
                                                const Tensor<T>& z, const IllusionSetup& setup,
                                                double central_fraction, bool id_gradient);

/// Gradient of `loss` (from batch_generator_loss on the forward pass) with
/// respect to the generator parameters. Target pixels carry no gradient.
template <typename T>
GeneratorParams<T> generator_objective_backward(const GeneratorParams<T>& gen, const DiscriminatorParams<T>& disc,
                                                const GeneratorForward<T>& fwd, const GeneratorLossTerms& loss,
                                                bool id_term, bool bd_term);

enum class StopReason { tolerance, max_epochs, max_iterations };
std::string_view to_string(StopReason r);

struct FinetuneResult {
  GanState state;
  std::vector<CandidateRecord> records;
  std::vector<IterationLog> history;
  StopReason stop_reason = StopReason::max_epochs;
  double alpha_effective = 0.0;
  double beta_effective = 0.0;
};

/// Requires `pretrained` unless config.allow_unpretrained is set. The solver
/// is only read, never updated.
FinetuneResult finetune(GanState state, bool pretrained, const IllusionSetup& setup, const ImageStore& store,
                        const TrainingConfig& config, const IterationCallback& on_iteration = {});

/// Moving-average stopping rule over per-epoch mean losses.
bool loss_converged(const std::vector<double>& epoch_losses, int window, double tolerance);

// ---------------------------------------------------------------------------
// Candidate selection and export

/// Uniform random sample without replacement among records with
/// pq_value >= threshold, at most ceil(k / distinct iterations) + 1 per
/// iteration while that cap can be met. Throws when fewer than k qualify.
std::vector<CandidateRecord> select_candidates(const std::vector<CandidateRecord>& records, int k,
                                               double pq_threshold, std::uint64_t seed);

/// Candidate records on disk: inducers as float tensors in the checkpoint
/// container, scalars in the header. Stimuli are rebuilt on load.
void save_records(const std::filesystem::path& path, const std::vector<CandidateRecord>& records,
                  const nlohmann::json& meta = nlohmann::json::object());
std::vector<CandidateRecord> load_records(const std::filesystem::path& path, const TargetSpec& target,
                                          double central_fraction, nlohmann::json* meta = nullptr);

struct ExportInfo {
  std::string method;  // solver name
  PqConfig pq;
  std::uint64_t seed = 0;
};

/// Writes candidate_NNN.png (stimulus), candidate_NNN_inducer.png and the
/// two target masks, plus manifest.json. Returns the manifest.
nlohmann::json export_candidates(const std::filesystem::path& dir, const std::vector<CandidateRecord>& selected,
                                 const ExportInfo& info);

}  // namespace phantasmagoria
