#pragma once

// MAML initialization across several videos and per-video fine-tuning.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fitdeblur/adam.hpp"
#include "fitdeblur/blur.hpp"
#include "fitdeblur/frame_selection.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/patches.hpp"
#include "fitdeblur/training.hpp"

namespace fitdeblur {

enum class MamlOrder { first, second };

inline const char* to_string(MamlOrder o) { return o == MamlOrder::first ? "first" : "second"; }

inline MamlOrder parse_maml_order(const std::string& s) {
  if (s == "first") return MamlOrder::first;
  if (s == "second") return MamlOrder::second;
  fail(ErrorKind::config, "unknown MAML order '" + s + "' (expected first or second)");
}

struct MetaConfig {
  double alpha = 1e-4;
  double beta = 1e-5;
  int meta_iterations = 500;
  int tasks_per_batch = 4;
  MamlOrder order = MamlOrder::first;
  std::uint64_t seed = 0;

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0, ErrorKind::config, "alpha and beta must be >= 0");
    require(meta_iterations >= 1 && tasks_per_batch >= 1, ErrorKind::config,
            "meta_iterations and tasks_per_batch must be >= 1");
  }
  friend bool operator==(const MetaConfig&, const MetaConfig&) = default;
};

// One ground-truth patch blurred twice: by a bank kernel (inner step) and by
// its left-right mirror (outer step).
struct TaskSample {
  Image gt;
  Image inner_blurry;
  Image outer_blurry;
  double weight = 1.0;
  BlurKernel inner_kernel;
  BlurKernel outer_kernel;
};

class TaskSampler {
 public:
  // Keeps only the selected sharp frames of every video.
  TaskSampler(const std::vector<FrameSequence>& videos, const KernelBank& bank, PipelineConfig pipeline, int window,
              std::uint64_t seed)
      : cfg_(pipeline), bank_(&bank), rng_(seed) {
    cfg_.validate();
    require(!videos.empty(), ErrorKind::empty_input, "meta-training needs at least one video");
    require(!bank.empty(), ErrorKind::empty_bank, "cannot build tasks from an empty bank");
    for (std::size_t v = 0; v < videos.size(); ++v) {
      require(!videos[v].empty(), ErrorKind::empty_input, "video " + std::to_string(v) + " has no frames");
      std::vector<Frame> sharp;
      for (int i : select_sharp_frames(videos[v], window).indices) {
        const Frame& f = videos[v][static_cast<std::size_t>(i)];
        if (f.height >= cfg_.patch_size && f.width >= cfg_.patch_size) sharp.push_back(f);
      }
      require(!sharp.empty(), ErrorKind::empty_input,
              "video " + std::to_string(v) + " has no selected frame large enough for the patch size");
      frames_.push_back(std::move(sharp));
    }
  }

  TaskSample next() {
    const std::vector<Frame>& pool = frames_[rng_.index(frames_.size())];
    const Frame& frame = pool[rng_.index(pool.size())];
    TaskSample t;
    t.gt = sample_patch(frame, cfg_.patch_size, rng_).patch;
    t.inner_kernel = bank_->kernels[rng_.index(bank_->size())];
    t.outer_kernel = flip_lr(t.inner_kernel);
    t.inner_blurry = apply_blur(t.gt, t.inner_kernel, cfg_.gamma, cfg_.linearize);
    t.outer_blurry = apply_blur(t.gt, t.outer_kernel, cfg_.gamma, cfg_.linearize);
    t.weight = patch_weight(t.gt, cfg_.normalizer, cfg_.reweight);
    return t;
  }

  std::vector<TaskSample> next_batch(int n) {
    std::vector<TaskSample> out;
    for (int i = 0; i < n; ++i) out.push_back(next());
    return out;
  }

 private:
  PipelineConfig cfg_;
  const KernelBank* bank_;
  Rng rng_;
  std::vector<std::vector<Frame>> frames_;
};

namespace detail {

inline ParameterSet sgd_step(const ParameterSet& theta, const GradientSet& g, double alpha) {
  ParameterSet out = theta;
  for (auto& [name, t] : out.tensors) {
    const Tensor<float>& gt = g.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(t.data[i] - alpha * gt.data[i]);
  }
  return out;
}

// Outer loss and its exact gradient through the inner step.
inline PairLoss second_order_task(const GeneratorConfig& gcfg, const ParameterSet& theta,
                                  const FeatureExtractor<float>& fx, const TaskSample& task, double alpha) {
  const VarMap<float> vars = to_vars<float>(theta);
  const std::vector<ad::Var<float>> list = var_list(vars);
  auto loss_at = [&](const VarMap<float>& p, const Image& blurry) {
    return reweighted_loss(task.weight, perceptual_loss(fx, generator_forward(gcfg, p, ad::Var<float>(image_to_tensor<float>(blurry))),
                                                        ad::Var<float>(image_to_tensor<float>(task.gt))));
  };
  const ad::Var<float> inner = loss_at(vars, task.inner_blurry);
  const std::vector<ad::Var<float>> g = ad::grad(inner, list, /*create_graph=*/true);
  VarMap<float> adapted;
  std::size_t i = 0;
  for (const auto& [name, v] : vars) adapted.emplace(name, ad::sub(v, ad::scale(g[i++], static_cast<float>(alpha))));
  const ad::Var<float> outer = loss_at(adapted, task.outer_blurry);
  PairLoss out;
  out.loss = outer.item();
  out.grads = gradients(outer, vars);
  return out;
}

}  // namespace detail

// theta_i = theta - alpha * grad L(theta; inner), then the mean over tasks of
// grad_theta L(theta_i; outer) feeds one Adam step of size beta. First order
// evaluates that gradient at theta_i and applies it to theta unchanged.
// Returns the mean outer loss.
inline double maml_step(const GeneratorConfig& gcfg, ParameterSet& theta, AdamState& opt,
                        const FeatureExtractor<float>& fx, const std::vector<TaskSample>& tasks, const MetaConfig& cfg) {
  require(!tasks.empty(), ErrorKind::empty_input, "empty task batch");
  PairLoss total;
  for (const TaskSample& task : tasks) {
    PairLoss one;
    if (cfg.order == MamlOrder::first) {
      const PairLoss inner =
          pair_loss_and_grad(gcfg, to_vars<float>(theta), fx, task.gt, task.inner_blurry, task.weight);
      const ParameterSet adapted = detail::sgd_step(theta, inner.grads, cfg.alpha);
      one = pair_loss_and_grad(gcfg, to_vars<float>(adapted), fx, task.gt, task.outer_blurry, task.weight);
    } else {
      one = detail::second_order_task(gcfg, theta, fx, task, cfg.alpha);
    }
    total.loss += one.loss;
    detail::accumulate(total.grads, one.grads);
  }
  total.loss /= static_cast<double>(tasks.size());
  detail::scale_all(total.grads, 1.0 / static_cast<double>(tasks.size()));
  adam_step(theta, total.grads, opt, cfg.beta);
  require(theta.all_finite(), ErrorKind::numeric, "non-finite parameter after meta step " + std::to_string(theta.step));
  return total.loss;
}

using TaskSource = std::function<std::vector<TaskSample>()>;
using MetaObserver = std::function<void(int iteration, double outer_loss, const ParameterSet&)>;

struct MetaResult {
  ParameterSet params;
  std::vector<double> losses;
};

inline MetaResult maml_loop(const GeneratorConfig& gcfg, ParameterSet theta, const TaskSource& tasks,
                            const MetaConfig& cfg, const FeatureExtractor<float>& fx, const MetaObserver& observe = {}) {
  cfg.validate();
  AdamState opt = init_adam(theta);
  MetaResult r;
  for (int it = 0; it < cfg.meta_iterations; ++it) {
    const double loss = maml_step(gcfg, theta, opt, fx, tasks(), cfg);
    r.losses.push_back(loss);
    if (observe) observe(it + 1, loss, theta);
  }
  r.params = std::move(theta);
  return r;
}

// Starts from the same initialization `fit` would use with seed cfg.seed.
inline MetaResult maml_train(const std::vector<FrameSequence>& videos, const KernelBank& bank, const MetaConfig& cfg,
                             const PipelineConfig& pipeline, const GeneratorConfig& gcfg,
                             const FeatureExtractorConfig& xcfg, int window = 20, const MetaObserver& observe = {}) {
  cfg.validate();
  TaskSampler sampler(videos, bank, pipeline, window, mix_seed(cfg.seed, 5));
  FeatureExtractor<float> fx(xcfg);
  const ParameterSet theta = init_generator(gcfg, mix_seed(cfg.seed, 2));
  return maml_loop(gcfg, theta, [&] { return sampler.next_batch(cfg.tasks_per_batch); }, cfg, fx, observe);
}

// `fit` started from meta-learned weights with a fresh optimizer.
inline FitResult finetune(const ParameterSet& meta_params, const std::vector<Frame>& frames, const KernelBank& bank,
                          const FitConfig& cfg, PipelineConfig pipeline, const FeatureExtractorConfig& xcfg,
                          const CheckpointHook& hook = {}) {
  cfg.validate(true);
  FitResult r;
  r.state.generator_config = generator_config_of(meta_params);
  r.state.generator = meta_params;
  r.state.generator_opt = init_adam(meta_params);
  if (cfg.iterations == 0) return r;
  pipeline.seed = mix_seed(cfg.seed, 1);
  BatchStream stream(frames, pipeline, bank);
  FeatureExtractor<float> fx(xcfg);
  r.log = fit_loop(r.state, [&] { return stream.next_batch(); }, cfg, fx, hook);
  return r;
}

}  // namespace fitdeblur
