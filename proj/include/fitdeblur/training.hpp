#pragma once

// Per-video fitting loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <vector>

#include "fitdeblur/adam.hpp"
#include "fitdeblur/checkpoint.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/patches.hpp"

namespace fitdeblur {

struct FitConfig {
  int iterations = 4000;
  double lr_generator = 5e-5;
  double lr_discriminator = 1e-4;
  bool adversarial = false;
  double adversarial_weight = 1.0;
  double gp_lambda = 10.0;
  int checkpoint_every = 0;  // 0: only at the end
  std::uint64_t seed = 0;

  void validate(bool allow_zero_iterations = false) const {
    require(iterations >= (allow_zero_iterations ? 0 : 1), ErrorKind::config, "iterations must be >= 1");
    require(lr_generator > 0.0, ErrorKind::config, "lr_generator must be > 0");
    require(lr_discriminator > 0.0, ErrorKind::config, "lr_discriminator must be > 0");
    require(adversarial_weight >= 0.0, ErrorKind::config, "adversarial_weight must be >= 0");
    require(gp_lambda >= 0.0, ErrorKind::config, "gp_lambda must be >= 0");
    require(checkpoint_every >= 0, ErrorKind::config, "checkpoint_every must be >= 0");
  }
  friend bool operator==(const FitConfig&, const FitConfig&) = default;
};

struct FitRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;  // batch mean of the reweighted perceptual loss
  std::optional<double> d_loss;
  std::optional<double> g_adv;
  double seconds = 0.0;
};

struct FitLog {
  std::vector<FitRecord> records;

  // Trailing moving average of the loss column.
  std::vector<double> smoothed(std::size_t window) const {
    std::vector<double> out(records.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      sum += records[i].loss;
      if (i >= window) sum -= records[i - window].loss;
      out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
  }

  void write_csv(std::ostream& os) const {
    os << "iter,loss,d_loss,g_adv,seconds\n";
    os << std::setprecision(9);
    for (const FitRecord& r : records) {
      os << r.iteration << ',' << r.loss << ',';
      if (r.d_loss) os << *r.d_loss;
      os << ',';
      if (r.g_adv) os << *r.g_adv;
      os << ',' << std::setprecision(4) << r.seconds << std::setprecision(9) << '\n';
    }
  }
};

// Everything a training run mutates; maps 1:1 onto a checkpoint.
struct FitState {
  GeneratorConfig generator_config;
  ParameterSet generator;
  AdamState generator_opt;
  std::optional<ParameterSet> discriminator;
  std::optional<AdamState> discriminator_opt;

  Checkpoint checkpoint(bool meta = false) const {
    return {generator, generator_opt, discriminator, discriminator_opt, meta};
  }
};

inline FitState fit_state_from(const Checkpoint& c) {
  FitState s;
  s.generator_config = generator_config_of(c.generator);
  s.generator = c.generator;
  s.generator_opt = c.generator_opt.m.empty() ? init_adam(c.generator) : c.generator_opt;
  s.discriminator = c.discriminator;
  s.discriminator_opt = c.discriminator_opt;
  return s;
}

inline FitState fresh_fit_state(const GeneratorConfig& gcfg, std::uint64_t seed, bool with_critic) {
  FitState s;
  s.generator_config = gcfg;
  s.generator = init_generator(gcfg, mix_seed(seed, 2));
  s.generator_opt = init_adam(s.generator);
  if (with_critic) {
    s.discriminator = init_discriminator({}, mix_seed(seed, 3));
    s.discriminator_opt = init_adam(*s.discriminator);
  }
  return s;
}

namespace detail {

inline void accumulate(GradientSet& acc, const std::map<std::string, Tensor<float>>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (auto& [name, t] : acc) {
    const Tensor<float>& add = g.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += add.data[i];
  }
}

inline void scale_all(GradientSet& acc, double c) {
  for (auto& [name, t] : acc)
    for (float& v : t.data) v = static_cast<float>(v * c);
}

}  // namespace detail

struct PairLoss {
  double loss = 0.0;
  GradientSet grads;
};

// Reweighted perceptual loss of one pair and its gradient. Shared by the
// fitting loop and the meta-learner so their arithmetic is identical.
inline PairLoss pair_loss_and_grad(const GeneratorConfig& gcfg, const VarMap<float>& params,
                                   const FeatureExtractor<float>& fx, const Image& sharp, const Image& blurry,
                                   double weight) {
  ad::Var<float> input(image_to_tensor<float>(blurry));
  ad::Var<float> target(image_to_tensor<float>(sharp));
  ad::Var<float> loss = reweighted_loss(weight, perceptual_loss(fx, generator_forward(gcfg, params, input), target));
  PairLoss out;
  out.loss = loss.item();
  out.grads = gradients(loss, params);
  return out;
}

// Mean loss and mean gradient over a batch, summed in batch order.
inline PairLoss batch_loss_and_grad(const GeneratorConfig& gcfg, const ParameterSet& params,
                                    const FeatureExtractor<float>& fx, const std::vector<TrainPair>& batch) {
  require(!batch.empty(), ErrorKind::empty_input, "empty batch");
  const VarMap<float> vars = to_vars<float>(params);
  PairLoss total;
  for (const TrainPair& p : batch) {
    PairLoss one = pair_loss_and_grad(gcfg, vars, fx, p.sharp, p.blurry, p.weight);
    total.loss += one.loss;
    detail::accumulate(total.grads, one.grads);
  }
  total.loss /= static_cast<double>(batch.size());
  detail::scale_all(total.grads, 1.0 / static_cast<double>(batch.size()));
  return total;
}

using BatchSource = std::function<std::vector<TrainPair>()>;
using CheckpointHook = std::function<void(const FitState&)>;

inline void check_finite(const FitState& s) {
  require(s.generator.all_finite() && (!s.discriminator || s.discriminator->all_finite()), ErrorKind::numeric,
          "non-finite parameter after step " + std::to_string(s.generator.step));
}

// Runs cfg.iterations updates on `state`. The hook fires every
// checkpoint_every iterations and once at the end; a numeric failure throws
// before the hook can see the bad state, so the last written checkpoint stays
// the last good one.
inline FitLog fit_loop(FitState& state, const BatchSource& next_batch, const FitConfig& cfg,
                       const FeatureExtractor<float>& fx, const CheckpointHook& hook = {}) {
  cfg.validate(true);
  if (cfg.adversarial) {
    if (!state.discriminator) {
      state.discriminator = init_discriminator({}, mix_seed(cfg.seed, 3));
      state.discriminator_opt = init_adam(*state.discriminator);
    }
    if (!state.discriminator_opt) state.discriminator_opt = init_adam(*state.discriminator);
  }
  Rng gp_rng(mix_seed(cfg.seed, 4) ^ static_cast<std::uint64_t>(state.generator.step));
  const auto start = std::chrono::steady_clock::now();
  FitLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::vector<TrainPair> batch = next_batch();
    PairLoss g;
    FitRecord rec;
    try {
      g = batch_loss_and_grad(state.generator_config, state.generator, fx, batch);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      fail(ErrorKind::numeric, "iteration " + std::to_string(state.generator.step + 1) + ": " + e.what());
    }
    rec.loss = g.loss;

    if (cfg.adversarial) {
      const VarMap<float> gvars = to_vars<float>(state.generator);
      const VarMap<float> dvars = to_vars<float>(*state.discriminator);
      std::vector<Image> blurry, sharp;
      for (const TrainPair& p : batch) {
        blurry.push_back(p.blurry);
        sharp.push_back(p.sharp);
      }
      ad::Var<float> fake = generator_forward(state.generator_config, gvars, ad::Var<float>(images_to_tensor<float>(blurry)));
      ad::Var<float> real(images_to_tensor<float>(sharp));
      AdversarialLosses<float> adv = wgan_gp_losses(dvars, real, fake, cfg.gp_lambda, gp_rng);
      rec.d_loss = adv.d_loss.item();
      rec.g_adv = adv.g_loss.item();
      require(std::isfinite(*rec.d_loss) && std::isfinite(*rec.g_adv), ErrorKind::numeric,
              "non-finite adversarial loss at iteration " + std::to_string(state.generator.step + 1));
      GradientSet g_adv = gradients(ad::scale(adv.g_loss, static_cast<float>(cfg.adversarial_weight)), gvars);
      detail::accumulate(g.grads, g_adv);
      GradientSet d_grads = gradients(adv.d_loss, dvars);
      adam_step(*state.discriminator, d_grads, *state.discriminator_opt, cfg.lr_discriminator);
    }
    adam_step(state.generator, g.grads, state.generator_opt, cfg.lr_generator);
    check_finite(state);

    rec.iteration = state.generator.step;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.records.push_back(rec);
    const bool last = it + 1 == cfg.iterations;
    if (hook && (last || (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0))) hook(state);
  }
  return log;
}

struct FitResult {
  FitState state;
  FitLog log;
};

// Fits a fresh generator to pairs cut from `frames`. The pipeline and all
// initializations are seeded from cfg.seed.
inline FitResult fit(const std::vector<Frame>& frames, const KernelBank& bank, const FitConfig& cfg,
                     PipelineConfig pipeline, const GeneratorConfig& gcfg, const FeatureExtractorConfig& xcfg,
                     const CheckpointHook& hook = {}) {
  cfg.validate();
  pipeline.seed = mix_seed(cfg.seed, 1);
  BatchStream stream(frames, pipeline, bank);
  FeatureExtractor<float> fx(xcfg);
  FitResult r;
  r.state = fresh_fit_state(gcfg, cfg.seed, cfg.adversarial);
  r.log = fit_loop(r.state, [&] { return stream.next_batch(); }, cfg, fx, hook);
  return r;
}

}  // namespace fitdeblur
