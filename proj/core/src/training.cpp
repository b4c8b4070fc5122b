#include "agb/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "agb/rng.hpp"

namespace agb {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::wgan: return "wgan";
    case TrainMode::cwgan: return "cwgan";
    case TrainMode::cwgan_agb: return "cwgan_agb";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "baseline") return TrainMode::baseline;
  if (name == "wgan") return TrainMode::wgan;
  if (name == "cwgan") return TrainMode::cwgan;
  if (name == "cwgan_agb") return TrainMode::cwgan_agb;
  throw ConfigError("unknown training mode '" + name + "' (baseline|wgan|cwgan|cwgan_agb)");
}

void AgbHyper::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta_init > 0.0)) throw ConfigError("beta_init must be positive");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(ma_decay >= 0.0 && ma_decay < 1.0)) throw ConfigError("ma_decay must lie in [0, 1)");
  if (!(ratio > 0.0)) throw ConfigError("ratio must be positive");
  if (!(rate > 0.0)) throw ConfigError("rate must be positive");
  if (n_discriminator < 1) throw ConfigError("n_discriminator must be >= 1");
}

template <typename T>
double grad_std(std::span<const T> g) {
  if (g.empty()) throw ShapeError("grad_std: empty gradient field");
  // Welford's running moments.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (T v : g) {
    ++n;
    const double x = static_cast<double>(v);
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  return std::sqrt(std::max(m2, 0.0) / static_cast<double>(n));
}

AgbUpdate agb_update(const AgbState& state, double std_gan, double std_mse) {
  AgbUpdate out{state, false};
  auto& s = out.state;
  const double lam = s.hyper.ma_decay;
  s.g_ma = s.g_ma * lam + (1.0 - lam) * std_gan;
  s.p_ma = s.p_ma * lam + (1.0 - lam) * std_mse;
  if (s.g_ma > s.p_ma * s.hyper.ratio) {
    s.beta *= 1.0 + s.hyper.rate;
    s.g_ma *= 1.0 - s.hyper.rate;
    out.fired = true;
  }
  return out;
}

template <typename T>
AgbUpdate agb_update(const AgbState& state, std::span<const T> g_gan, std::span<const T> g_mse) {
  return agb_update(state, grad_std(g_gan), grad_std(g_mse));
}

CriticConfig TrainConfig::effective_critic() const {
  CriticConfig c = critic;
  c.conditional = mode != TrainMode::wgan;
  c.height = generator.height;
  c.width = generator.width;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lambda_mse > 0.0)) throw ConfigError("lambda_mse must be positive");
  if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
  if (embedder.dim < 1) throw ConfigError("embedder dim must be >= 1");
  agb.validate();
  generator.validate();
  if (uses_critic()) effective_critic().validate();
}

void MetricSeries::append(const EpochRecord& r) {
  if (!records.empty() && r.epoch <= records.back().epoch)
    throw Error("metric series: epoch " + std::to_string(r.epoch) + " does not follow " +
                std::to_string(records.back().epoch));
  records.push_back(r);
}

std::vector<std::size_t> MetricSeries::epochs() const {
  std::vector<std::size_t> out;
  for (const auto& r : records) out.push_back(r.epoch);
  return out;
}

std::vector<double> MetricSeries::nmse() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.nmse);
  return out;
}

std::vector<double> MetricSeries::fid() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.fid);
  return out;
}

template <typename T>
TrainState<T> init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState<T> s;
  s.params = init_params<T>(cfg.generator, cfg.effective_critic(), cfg.seed);
  s.gen_opt = ad::AdamState<T>::zeros_like(s.params.generator);
  s.critic_opt = ad::AdamState<T>::zeros_like(s.params.critic);
  s.agb = cfg.mode == TrainMode::cwgan_agb ? AgbState::initial(cfg.agb) : AgbState{cfg.agb, 1.0, 0.0, 0.0};
  return s;
}

namespace {

std::string agb_diagnostic(const AgbState& s) {
  std::ostringstream os;
  os.precision(17);
  os << "beta=" << s.beta << " g_ma=" << s.g_ma << " p_ma=" << s.p_ma;
  return os.str();
}

void require_finite(double v, const char* what, const AgbState& agb) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " (" + agb_diagnostic(agb) + ")");
}

// Sum over the batch axis of a [B,2,H,W] field.
template <typename T>
std::vector<T> batch_sum(std::span<const T> g, std::size_t batch) {
  const std::size_t item = g.size() / batch;
  std::vector<T> out(item, T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < item; ++i) out[i] += g[b * item + i];
  return out;
}

template <typename T>
std::vector<T> generate(const Batch<T>& batch, const ad::ParamSet<T>& gen, const GeneratorConfig& cfg) {
  ad::Tape<T> tape;
  const auto acq = record_batch(tape, batch);
  const auto bound = gen.bind(tape, false);
  const auto out = dci_forward(acq, bound, cfg);
  return {out.value().begin(), out.value().end()};
}

}  // namespace

template <typename T>
CriticStepResult<T> critic_step(const Batch<T>& batch, ModelParams<T>& params, const TrainConfig& cfg,
                                const AgbState& agb, ad::AdamState<T>& opt) {
  if (batch.size == 0) throw ShapeError("critic_step: empty batch");
  if (!(agb.beta > 0.0)) throw ConfigError("critic_step: beta must be positive");
  const auto fake_v = generate(batch, params.generator, cfg.generator);

  ad::Tape<T> tape;
  const auto shape = batch.image_shape();
  const auto m_z = tape.constant(shape, batch.m_z);
  const auto real = tape.constant(shape, batch.m_f);
  const auto fake = tape.constant(shape, fake_v);
  const auto bound = params.critic.bind(tape, true);
  const auto ccfg = cfg.effective_critic();
  const CriticNorm<T> norm{ad::BnMode::train, &params.critic_bn};
  const auto d_real = ad::mean(patchgan_forward(m_z, real, bound, ccfg, norm));
  const auto d_fake = ad::mean(patchgan_forward(m_z, fake, bound, ccfg, norm));
  const auto objective = ad::scale(ad::sub(d_real, d_fake), 1.0 / agb.beta);

  CriticStepResult<T> res;
  res.loss = -static_cast<double>(objective.item());
  require_finite(res.loss, "critic loss", agb);
  const auto grads = tape.backward(objective);
  for (const auto& p : params.critic) res.grads.push_back(grads.at(bound.at(p.name)));
  ad::adam_step(params.critic, res.grads, opt, cfg.agb.alpha, ad::Direction::maximize);
  if (cfg.clip_bn_affine)
    ad::clip_params(params.critic, cfg.agb.clip);
  else
    ad::clip_params(params.critic, cfg.agb.clip, [](const std::string& n) { return !is_critic_bn_affine(n); });
  return res;
}

template <typename T>
GeneratorStepResult<T> generator_step(const Batch<T>& batch, ModelParams<T>& params, const TrainConfig& cfg,
                                      const AgbState& agb, ad::AdamState<T>& opt) {
  if (batch.size == 0) throw ShapeError("generator_step: empty batch");
  ad::Tape<T> tape;
  const auto acq = record_batch(tape, batch);
  const auto bound = params.generator.bind(tape, true);
  const auto fake = dci_forward(acq, bound, cfg.generator);
  const auto target = tape.constant(batch.image_shape(), batch.m_f);
  const auto mse_t = ad::mse(fake, target);

  GeneratorStepResult<T> res;
  res.mse = static_cast<double>(mse_t.item());
  const ad::BackwardOptions at_fake{fake.id()};
  res.g_mse = batch_sum<T>(tape.backward(mse_t, at_fake).at(fake), batch.size);

  ad::Tensor<T> loss = mse_t;
  if (cfg.uses_critic()) {
    const bool agb_mode = cfg.mode == TrainMode::cwgan_agb;
    const double adv_coef = agb_mode ? 1.0 / agb.beta : 1.0;
    const double mse_coef = agb_mode ? 1.0 : cfg.lambda_mse;
    const auto critic = params.critic.bind(tape, false);
    const auto d = ad::mean(patchgan_forward(acq.m_z, fake, critic, cfg.effective_critic(),
                                             CriticNorm<T>{ad::BnMode::train, nullptr}));
    res.adversarial = static_cast<double>(d.item());
    res.g_gan = batch_sum<T>(tape.backward(d, at_fake).at(fake), batch.size);
    for (auto& v : res.g_gan) v = static_cast<T>(v * adv_coef);
    loss = ad::add(ad::scale(mse_t, mse_coef), ad::scale(d, -adv_coef));
  } else {
    res.g_gan.assign(res.g_mse.size(), T(0));
  }
  res.loss = static_cast<double>(loss.item());
  require_finite(res.loss, "generator loss", agb);
  const auto grads = tape.backward(loss);
  ad::adam_step(params.generator, bound, grads, opt, cfg.agb.alpha, ad::Direction::minimize);
  return res;
}

template <typename T>
std::vector<ComplexImage> run_generator(const ad::ParamSet<T>& generator, const GeneratorConfig& cfg,
                                        std::span<const TrainingSample> samples, std::size_t eval_batch) {
  if (eval_batch == 0) throw ConfigError("run_generator: eval_batch must be >= 1");
  std::vector<ComplexImage> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += eval_batch) {
    const std::size_t n = std::min(eval_batch, samples.size() - start);
    const auto batch = make_batch<T>(samples.subspan(start, n));
    const auto v = generate(batch, generator, cfg);
    const std::size_t item = 2 * batch.height * batch.width;
    for (std::size_t b = 0; b < n; ++b)
      out.push_back(read_image<T>(std::span<const T>(v).subspan(b * item, item), batch.height, batch.width));
  }
  return out;
}

EvalResult evaluate_images(std::span<const ComplexImage> recon, std::span<const TrainingSample> samples,
                           const EmbedderConfig& embedder) {
  if (recon.size() != samples.size()) throw ShapeError("evaluate_images: image and sample counts differ");
  if (samples.empty()) throw DataError("evaluate_images: no samples");
  EvalResult res;
  std::vector<ComplexImage> truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    res.per_image_nmse.push_back(nmse(recon[i], samples[i].m_f));
    res.nmse += res.per_image_nmse.back();
    truth.push_back(samples[i].m_f);
  }
  res.nmse /= static_cast<double>(samples.size());
  res.fid = frechet_distance(embed(truth, embedder), embed(recon, embedder));
  return res;
}

bool keeps_snapshot(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.epochs < cfg.select_start_epoch + 1) return true;
  return epoch >= cfg.select_start_epoch;
}

template <typename T>
const GeneratorSnapshot<T>& best_snapshot(const TrainState<T>& state, const TrainConfig& cfg) {
  const auto epochs = state.series.epochs();
  const auto a = state.series.nmse();
  const auto b = state.series.fid();
  const std::size_t best = select_model(epochs, a, b, cfg.select_start_epoch);
  for (const auto& s : state.history)
    if (s.epoch == best) return s;
  throw Error("no generator snapshot kept for selected epoch " + std::to_string(best));
}

namespace {

enum : std::uint64_t { kRoleGenerator = 1, kRoleCritic = 2, kRoleAugment = 3 };

std::vector<std::size_t> permutation(std::uint64_t seed, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

// Endless sample order for one role within one epoch: successive permutations.
class Sampler {
 public:
  Sampler(std::uint64_t seed, std::size_t epoch, std::uint64_t role, std::size_t n)
      : seed_(seed), epoch_(epoch), role_(role), n_(n) {}

  // Returns (sample index, draw position) pairs.
  std::vector<std::pair<std::size_t, std::uint64_t>> next(std::size_t count) {
    std::vector<std::pair<std::size_t, std::uint64_t>> out;
    for (std::size_t k = 0; k < count; ++k) {
      if (pos_ % n_ == 0) order_ = permutation(derive_seed(seed_, {epoch_, role_, pos_ / n_}), n_);
      out.emplace_back(order_[pos_ % n_], pos_);
      ++pos_;
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t epoch_;
  std::uint64_t role_;
  std::size_t n_;
  std::uint64_t pos_ = 0;
  std::vector<std::size_t> order_;
};

template <typename T>
Batch<T> draw_batch(Sampler& sampler, std::span<const TrainingSample> data, const TrainConfig& cfg,
                    std::size_t epoch, std::uint64_t role) {
  const auto picks = sampler.next(cfg.batch_size);
  if (!cfg.augment) {
    std::vector<const TrainingSample*> ptrs;
    for (const auto& [i, pos] : picks) ptrs.push_back(&data[i]);
    return make_batch<T>(std::span<const TrainingSample* const>(ptrs));
  }
  std::vector<TrainingSample> aug;
  aug.reserve(picks.size());
  for (const auto& [i, pos] : picks) {
    const auto& base = data[i];
    const auto m = augment(base.m_f, derive_seed(cfg.seed, {epoch, role, kRoleAugment, pos}));
    aug.push_back(make_sample(m, base.maps, base.mask));
  }
  return make_batch<T>(std::span<const TrainingSample>(aug));
}

double max_abs(const ad::ParamSet<float>& p) {
  double m = 0.0;
  for (const auto& q : p)
    for (float v : q.value) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

double max_abs(const ad::ParamSet<double>& p) {
  double m = 0.0;
  for (const auto& q : p)
    for (double v : q.value) m = std::max(m, std::abs(v));
  return m;
}

void check_data(const TrainConfig& cfg, std::span<const TrainingSample> data, const char* what) {
  for (const auto& s : data)
    if (s.m_f.height() != cfg.generator.height || s.m_f.width() != cfg.generator.width ||
        s.maps.n_coils() != cfg.generator.n_coils)
      throw DataError(std::string(what) + " sample dims do not match the generator configuration");
}

}  // namespace

template <typename T>
void train(TrainState<T>& state, const TrainConfig& cfg, std::span<const TrainingSample> train_set,
           std::span<const TrainingSample> val_set, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (val_set.empty()) throw DataError("train: empty validation set");
  if (train_set.size() < cfg.batch_size)
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds the training set");
  if (val_set.size() <= cfg.embedder.dim)
    throw ConfigError("train: validation set needs more than " + std::to_string(cfg.embedder.dim) +
                      " samples for the Frechet distance");
  check_data(cfg, train_set, "training");
  check_data(cfg, val_set, "validation");

  const std::size_t iterations = train_set.size() / cfg.batch_size;
  const bool agb_mode = cfg.mode == TrainMode::cwgan_agb;
  for (std::size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    Sampler gen_sampler(cfg.seed, epoch, kRoleGenerator, train_set.size());
    Sampler critic_sampler(cfg.seed, epoch, kRoleCritic, train_set.size());
    double critic_sum = 0.0, gen_sum = 0.0;
    std::size_t critic_steps = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
      StepRecord rec;
      rec.epoch = epoch;
      if (cfg.uses_critic()) {
        for (std::size_t t = 0; t < cfg.agb.n_discriminator; ++t) {
          const auto batch = draw_batch<T>(critic_sampler, train_set, cfg, epoch, kRoleCritic);
          const auto c = critic_step(batch, state.params, cfg, state.agb, state.critic_opt);
          critic_sum += c.loss;
          rec.critic_loss = c.loss;
          ++critic_steps;
        }
        if (hooks.on_step) rec.critic_max_abs = max_abs(state.params.critic);
      }
      const auto batch = draw_batch<T>(gen_sampler, train_set, cfg, epoch, kRoleGenerator);
      const auto g = generator_step(batch, state.params, cfg, state.agb, state.gen_opt);
      gen_sum += g.loss;
      rec.gen_loss = g.loss;
      rec.beta_before = state.agb.beta;
      if (agb_mode) {
        const auto upd = agb_update<T>(state.agb, g.g_gan, g.g_mse);
        state.agb = upd.state;
        rec.fired = upd.fired;
      }
      ++state.step;
      rec.step = state.step;
      rec.agb = state.agb;
      if (hooks.on_step) hooks.on_step(rec);
    }

    const auto recon = run_generator(state.params.generator, cfg.generator, val_set, cfg.eval_batch);
    const auto ev = evaluate_images(recon, val_set, cfg.embedder);
    EpochRecord r;
    r.epoch = epoch;
    r.nmse = ev.nmse;
    r.fid = ev.fid;
    r.beta = state.agb.beta;
    r.g_ma = state.agb.g_ma;
    r.p_ma = state.agb.p_ma;
    r.critic_loss = critic_steps ? critic_sum / static_cast<double>(critic_steps) : 0.0;
    r.gen_loss = gen_sum / static_cast<double>(iterations);
    require_finite(r.nmse, "validation NMSE", state.agb);
    state.series.append(r);
    state.epoch = epoch;
    if (keeps_snapshot(cfg, epoch)) state.history.push_back({epoch, state.params.generator});
    if (hooks.on_epoch && !hooks.on_epoch(r)) break;
  }
}

#define AGB_INSTANTIATE_TRAINING(T)                                                                               \
  template double grad_std<T>(std::span<const T>);                                                                \
  template AgbUpdate agb_update<T>(const AgbState&, std::span<const T>, std::span<const T>);                      \
  template TrainState<T> init_train_state<T>(const TrainConfig&);                                                 \
  template CriticStepResult<T> critic_step<T>(const Batch<T>&, ModelParams<T>&, const TrainConfig&,              \
                                              const AgbState&, ad::AdamState<T>&);                                \
  template GeneratorStepResult<T> generator_step<T>(const Batch<T>&, ModelParams<T>&, const TrainConfig&,        \
                                                    const AgbState&, ad::AdamState<T>&);                          \
  template std::vector<ComplexImage> run_generator<T>(const ad::ParamSet<T>&, const GeneratorConfig&,             \
                                                      std::span<const TrainingSample>, std::size_t);              \
  template void train<T>(TrainState<T>&, const TrainConfig&, std::span<const TrainingSample>,                     \
                         std::span<const TrainingSample>, const TrainHooks&);                                     \
  template const GeneratorSnapshot<T>& best_snapshot<T>(const TrainState<T>&, const TrainConfig&);

AGB_INSTANTIATE_TRAINING(float)
AGB_INSTANTIATE_TRAINING(double)

#undef AGB_INSTANTIATE_TRAINING

}  // namespace agb
