#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agb/metrics.hpp"
#include "agb/networks.hpp"

namespace agb {

enum class TrainMode { baseline, wgan, cwgan, cwgan_agb };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct AgbHyper {
  double alpha = 5e-5;  // Adam learning rate for both networks
  double beta_init = 10.0;
  double clip = 0.01;
  double ma_decay = 0.99;
  double ratio = 10.0;
  double rate = 0.1;
  std::size_t n_discriminator = 1;

  void validate() const;
  friend bool operator==(const AgbHyper&, const AgbHyper&) = default;
};

struct AgbState {
  AgbHyper hyper;
  double beta = 10.0;
  double g_ma = 0.0;
  double p_ma = 0.0;

  static AgbState initial(const AgbHyper& hyper) { return {hyper, hyper.beta_init, 0.0, 0.0}; }
  friend bool operator==(const AgbState&, const AgbState&) = default;
};

/// Population standard deviation over every element of the field.
template <typename T>
double grad_std(std::span<const T> g);

struct AgbUpdate {
  AgbState state;
  bool fired = false;
};

/// Moving-average update from the two gradient STDs, then the balancing rule:
/// if g_ma > ratio · p_ma, β grows by (1 + rate) and g_ma shrinks by (1 - rate).
AgbUpdate agb_update(const AgbState& state, double std_gan, double std_mse);

template <typename T>
AgbUpdate agb_update(const AgbState& state, std::span<const T> g_gan, std::span<const T> g_mse);

struct TrainConfig {
  TrainMode mode = TrainMode::cwgan_agb;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double lambda_mse = 100.0;
  AgbHyper agb;
  std::uint64_t seed = 1;
  bool augment = true;
  bool clip_bn_affine = true;
  std::size_t select_start_epoch = 50;
  std::size_t eval_batch = 16;
  EmbedderConfig embedder;
  GeneratorConfig generator;
  CriticConfig critic;

  [[nodiscard]] bool uses_critic() const { return mode != TrainMode::baseline; }
  // The critic as the mode sees it: wgan drops the conditioning image.
  [[nodiscard]] CriticConfig effective_critic() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double nmse = 0.0;
  double fid = 0.0;
  double beta = 1.0;
  double g_ma = 0.0;
  double p_ma = 0.0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct MetricSeries {
  std::vector<EpochRecord> records;

  void append(const EpochRecord& r);
  [[nodiscard]] std::vector<std::size_t> epochs() const;
  [[nodiscard]] std::vector<double> nmse() const;
  [[nodiscard]] std::vector<double> fid() const;
  friend bool operator==(const MetricSeries&, const MetricSeries&) = default;
};

template <typename T>
struct GeneratorSnapshot {
  std::size_t epoch = 0;
  ad::ParamSet<T> params;
  friend bool operator==(const GeneratorSnapshot&, const GeneratorSnapshot&) = default;
};

/// Everything needed to continue a run exactly.
template <typename T>
struct TrainState {
  ModelParams<T> params;
  ad::AdamState<T> gen_opt;
  ad::AdamState<T> critic_opt;
  AgbState agb;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;  // completed generator steps
  MetricSeries series;
  std::vector<GeneratorSnapshot<T>> history;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg);

/// Result of one critic update.
template <typename T>
struct CriticStepResult {
  double loss = 0.0;  // negated β-scaled Wasserstein estimate
  // Objective gradient per critic parameter in set order, before the update.
  std::vector<std::vector<T>> grads;
};

/// One critic update: ascend (1/β)(mean D(m_z, m_f) - mean D(m_z, G(K_u))) with
/// Adam, then clip critic parameters to [-c, c]. Generator params are read only.
template <typename T>
CriticStepResult<T> critic_step(const Batch<T>& batch, ModelParams<T>& params, const TrainConfig& cfg,
                                const AgbState& agb, ad::AdamState<T>& opt);

template <typename T>
struct GeneratorStepResult {
  double loss = 0.0;
  double mse = 0.0;
  double adversarial = 0.0;  // mean critic score of the generated batch
  // Batch-averaged gradient fields [2,H,W] w.r.t. the generated images.
  std::vector<T> g_gan;
  std::vector<T> g_mse;
};

/// One generator update under the mode's loss. Critic params are read only.
template <typename T>
GeneratorStepResult<T> generator_step(const Batch<T>& batch, ModelParams<T>& params, const TrainConfig& cfg,
                                      const AgbState& agb, ad::AdamState<T>& opt);

struct StepRecord {
  std::size_t epoch = 0;  // 1-based epoch the step belongs to
  std::uint64_t step = 0;  // 1-based generator step
  double beta_before = 1.0;
  AgbState agb;  // after agb_update
  bool fired = false;
  double critic_max_abs = 0.0;  // largest |critic param| after the last critic step
  double critic_loss = 0.0;
  double gen_loss = 0.0;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  // Called after each epoch's record is appended. Return false to stop.
  std::function<bool(const EpochRecord&)> on_epoch;
};

/// Generator output for every sample, in order, evaluated in eval_batch chunks.
template <typename T>
std::vector<ComplexImage> run_generator(const ad::ParamSet<T>& generator, const GeneratorConfig& cfg,
                                        std::span<const TrainingSample> samples, std::size_t eval_batch = 16);

struct EvalResult {
  double nmse = 0.0;  // mean per-image NMSE
  double fid = 0.0;
  std::vector<double> per_image_nmse;
};

EvalResult evaluate_images(std::span<const ComplexImage> recon, std::span<const TrainingSample> samples,
                           const EmbedderConfig& embedder);

/// Runs epochs state.epoch+1 .. cfg.epochs. Throws NumericError on a non-finite
/// loss; state then holds the last consistent step.
template <typename T>
void train(TrainState<T>& state, const TrainConfig& cfg, std::span<const TrainingSample> train_set,
           std::span<const TrainingSample> val_set, const TrainHooks& hooks = {});

/// Whether the generator snapshot of this epoch is kept for model selection.
bool keeps_snapshot(const TrainConfig& cfg, std::size_t epoch);

/// Epoch picked by select_model over the series and its generator snapshot.
template <typename T>
const GeneratorSnapshot<T>& best_snapshot(const TrainState<T>& state, const TrainConfig& cfg);

}  // namespace agb
