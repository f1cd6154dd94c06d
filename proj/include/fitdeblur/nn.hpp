#pragma once

// Generator (compact U-Net), frozen perceptual feature extractor, patch
// critic, and the losses that tie them together.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fitdeblur/archive.hpp"
#include "fitdeblur/autodiff.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/ops.hpp"
#include "fitdeblur/random.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur {

inline constexpr double kLeakySlope = 0.2;

struct GeneratorConfig {
  int levels = 3;
  int base_channels = 16;
  bool identity_init = true;  // carrier channels start as an exact pass-through

  void validate() const {
    require(levels >= 1, ErrorKind::config, "generator levels must be >= 1");
    require(base_channels >= 1, ErrorKind::config, "generator base_channels must be >= 1");
  }
  int divisor() const { return 1 << levels; }
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct DiscriminatorConfig {
  int base_channels = 16;
  static constexpr int kLayers = 5;

  void validate() const { require(base_channels >= 1, ErrorKind::config, "discriminator base_channels must be >= 1"); }
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

struct ConvSpec {
  std::string name;
  int in = 0;
  int out = 0;
  int k = 3;
};

// Float32 weights keyed by layer name, plus the architecture that owns them.
struct ParameterSet {
  std::string kind;  // "unet" or "patch_critic"
  int levels = 0;
  int base_channels = 0;
  std::map<std::string, Tensor<float>> tensors;
  std::int64_t step = 0;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }
  bool all_finite() const {
    for (const auto& [name, t] : tensors)
      for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
  }
  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

using GradientSet = std::map<std::string, Tensor<float>>;

template <class T>
using VarMap = std::map<std::string, ad::Var<T>>;

template <class T>
VarMap<T> to_vars(const ParameterSet& params, bool trainable = true) {
  VarMap<T> vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, ad::Var<T>(t.template cast<T>(), trainable));
  return vars;
}

template <class T>
std::vector<ad::Var<T>> var_list(const VarMap<T>& vars) {
  std::vector<ad::Var<T>> out;
  out.reserve(vars.size());
  for (const auto& [name, v] : vars) out.push_back(v);
  return out;
}

// Reverse-mode gradients of a scalar loss for every named parameter.
template <class T>
std::map<std::string, Tensor<T>> gradients(const ad::Var<T>& loss, const VarMap<T>& params) {
  require(loss.size() == 1, ErrorKind::shape, "loss must be a scalar");
  const T value = loss.item();
  if (!std::isfinite(static_cast<double>(value)))
    fail(ErrorKind::numeric, "non-finite loss (" + std::to_string(static_cast<double>(value)) + ")");
  const std::vector<ad::Var<T>> inputs = var_list(params);
  const std::vector<ad::Var<T>> g = ad::grad(loss, inputs);
  std::map<std::string, Tensor<T>> out;
  std::size_t i = 0;
  for (const auto& [name, v] : params) out.emplace(name, g[i++].value());
  return out;
}

namespace detail {

// Kaiming-uniform for leaky rectifiers; zero biases.
inline void init_layers(const std::vector<ConvSpec>& layers, std::uint64_t seed, ParameterSet& params) {
  Rng rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  for (const ConvSpec& l : layers) {
    const double bound = gain * std::sqrt(3.0 / (l.in * l.k * l.k));
    Tensor<float> w({l.out, l.in, l.k, l.k});
    for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    params.tensors[l.name + ".weight"] = std::move(w);
    params.tensors[l.name + ".bias"] = Tensor<float>({l.out}, 0.0f);
  }
}

template <class T>
ad::Var<T> conv_layer(const VarMap<T>& p, const std::string& name, const ad::Var<T>& x, int stride, int pad) {
  auto w = p.find(name + ".weight");
  auto b = p.find(name + ".bias");
  require(w != p.end() && b != p.end(), ErrorKind::shape, "missing parameters for layer '" + name + "'");
  return ad::add_channel_bias(ad::conv2d(x, w->second, stride, pad), b->second);
}

template <class T>
ad::Var<T> act(const ad::Var<T>& x) {
  return ad::leaky_relu(x, static_cast<T>(kLeakySlope));
}

}  // namespace detail

// ---- generator -------------------------------------------------------------

inline std::vector<ConvSpec> generator_layers(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<ConvSpec> layers;
  auto ch = [&](int level) { return cfg.base_channels << level; };
  int in = 3;
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    layers.push_back({p + ".conv1", in, ch(l), 3});
    layers.push_back({p + ".conv2", ch(l), ch(l), 3});
    in = ch(l);
  }
  layers.push_back({"mid.conv1", in, ch(cfg.levels), 3});
  layers.push_back({"mid.conv2", ch(cfg.levels), ch(cfg.levels), 3});
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    layers.push_back({p + ".up", ch(l + 1), ch(l), 3});
    layers.push_back({p + ".conv1", 2 * ch(l), ch(l), 3});
    layers.push_back({p + ".conv2", ch(l), ch(l), 3});
  }
  layers.push_back({"out", ch(0), 3, 1});
  return layers;
}

namespace detail {

// Rewrites output channels 0..2 of every layer as a centered unit tap from
// input channel `src + c`, so RGB travels through the network untouched.
// Decoder levels take the carrier from the skip half of the concatenation.
inline void set_carrier(ParameterSet& params, const ConvSpec& l, int src) {
  Tensor<float>& w = params.tensors.at(l.name + ".weight");
  const std::size_t per_out = static_cast<std::size_t>(l.in) * l.k * l.k;
  for (int c = 0; c < 3; ++c) {
    std::fill_n(w.data.begin() + static_cast<std::ptrdiff_t>(c * per_out), per_out, 0.0f);
    const int k = l.k / 2;
    w.data[c * per_out + (static_cast<std::size_t>(src + c) * l.k + k) * l.k + k] = 1.0f;
  }
}

}  // namespace detail

inline ParameterSet init_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  ParameterSet params;
  params.kind = "unet";
  params.levels = cfg.levels;
  params.base_channels = cfg.base_channels;
  const std::vector<ConvSpec> layers = generator_layers(cfg);
  detail::init_layers(layers, seed, params);
  if (cfg.identity_init && cfg.base_channels >= 3) {
    for (const ConvSpec& l : layers) {
      const bool dec_conv1 = l.name.rfind("dec", 0) == 0 && l.name.ends_with(".conv1");
      detail::set_carrier(params, l, dec_conv1 ? l.in / 2 : 0);
    }
  }
  return params;
}

inline GeneratorConfig generator_config_of(const ParameterSet& params) {
  require(params.kind == "unet", ErrorKind::config, "parameter set is not a generator");
  return {params.levels, params.base_channels, false};
}

// N x 3 x H x W -> N x 3 x H x W; H and W must be divisible by 2^levels.
// The output is linear (unbounded); callers clamp at inference time.
template <class T>
ad::Var<T> generator_forward(const GeneratorConfig& cfg, const VarMap<T>& p, const ad::Var<T>& x) {
  using detail::act;
  using detail::conv_layer;
  const Shape& s = x.shape();
  require(s.size() == 4 && s[1] == 3, ErrorKind::shape, "generator expects N x 3 x H x W, got " + shape_str(s));
  require(s[2] % cfg.divisor() == 0 && s[3] % cfg.divisor() == 0, ErrorKind::shape,
          "generator input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) + " is not divisible by " +
              std::to_string(cfg.divisor()));
  std::vector<ad::Var<T>> skips;
  ad::Var<T> h = x;
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string n = "enc" + std::to_string(l);
    h = act(conv_layer(p, n + ".conv1", h, 1, 1));
    h = act(conv_layer(p, n + ".conv2", h, 1, 1));
    skips.push_back(h);
    h = ad::avg_pool2(h);
  }
  h = act(conv_layer(p, "mid.conv1", h, 1, 1));
  h = act(conv_layer(p, "mid.conv2", h, 1, 1));
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const std::string n = "dec" + std::to_string(l);
    ad::Var<T> up = act(conv_layer(p, n + ".up", ad::upsample_nearest2(h), 1, 1));
    h = ad::concat_channels(up, skips[static_cast<std::size_t>(l)]);
    h = act(conv_layer(p, n + ".conv1", h, 1, 1));
    h = act(conv_layer(p, n + ".conv2", h, 1, 1));
  }
  return conv_layer(p, "out", h, 1, 0);
}

template <class T>
Tensor<T> generator_forward(const GeneratorConfig& cfg, const ParameterSet& params, const Tensor<T>& x) {
  ad::NoGradGuard no_grad;
  return generator_forward<T>(cfg, to_vars<T>(params, false), ad::Var<T>(x)).value();
}

// ---- perceptual feature extractor -------------------------------------------

enum class ExtractorMode { fixed_random, pretrained_file };

struct FeatureExtractorConfig {
  ExtractorMode mode = ExtractorMode::fixed_random;
  std::string weights_file;
  std::array<double, 5> lambdas{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  std::uint64_t seed = 20210811;
  double gain = 1.0;  // fixed-random mode: multiplier on the variance-preserving init

  void validate() const {
    require(gain > 0.0 && std::isfinite(gain), ErrorKind::config, "extractor gain must be > 0");
    bool any = false;
    for (double l : lambdas) {
      require(l >= 0.0 && std::isfinite(l), ErrorKind::config, "perceptual layer weights must be >= 0");
      any = any || l > 0.0;
    }
    require(any, ErrorKind::config, "perceptual layer weights must not all be zero");
    if (mode == ExtractorMode::pretrained_file)
      require(!weights_file.empty(), ErrorKind::config, "pretrained extractor mode needs a weights file");
  }
  friend bool operator==(const FeatureExtractorConfig&, const FeatureExtractorConfig&) = default;
};

// Five taps at scales 1, 1/2, 1/4, 1/8, 1/16. Weights are constants: no
// gradient ever reaches them.
template <class T>
class FeatureExtractor {
 public:
  static constexpr std::array<int, 5> kRandomWidths{8, 16, 32, 64, 64};

  explicit FeatureExtractor(const FeatureExtractorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.mode == ExtractorMode::fixed_random)
      build_random();
    else
      build_pretrained();
  }

  const FeatureExtractorConfig& config() const { return cfg_; }

  std::vector<ad::Var<T>> features(const ad::Var<T>& x) const {
    const Shape& s = x.shape();
    require(s.size() == 4 && s[1] == 3, ErrorKind::shape, "extractor expects N x 3 x H x W");
    require(s[2] >= 32 && s[3] >= 32, ErrorKind::shape, "extractor input must be at least 32x32");
    require(s[2] % 16 == 0 && s[3] % 16 == 0, ErrorKind::shape, "extractor input must be divisible by 16");
    ad::Var<T> h = x;
    if (normalize_) h = normalize_input(h);
    std::vector<ad::Var<T>> taps;
    for (const Step& st : steps_) {
      switch (st.kind) {
        case Step::conv:
          h = ad::leaky_relu(ad::add_channel_bias(ad::conv2d(h, st.weight, 1, 1), st.bias), slope_);
          break;
        case Step::pool: h = max_pool_ ? ad::max_pool2(h) : ad::avg_pool2(h); break;
        case Step::tap: taps.push_back(h); break;
      }
    }
    return taps;
  }

  std::vector<Tensor<T>> weights() const {
    std::vector<Tensor<T>> out;
    for (const Step& st : steps_)
      if (st.kind == Step::conv) {
        out.push_back(st.weight.value());
        out.push_back(st.bias.value());
      }
    return out;
  }

 private:
  struct Step {
    enum Kind { conv, pool, tap } kind;
    ad::Var<T> weight;
    ad::Var<T> bias;
  };

  void add_conv(Tensor<T> w, Tensor<T> b) { steps_.push_back({Step::conv, ad::Var<T>(std::move(w)), ad::Var<T>(std::move(b))}); }
  void add(typename Step::Kind k) { steps_.push_back({k, {}, {}}); }

  void build_random() {
    Rng rng(cfg_.seed);
    const double gain = cfg_.gain * std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
    int in = 3;
    for (std::size_t s = 0; s < kRandomWidths.size(); ++s) {
      if (s > 0) add(Step::pool);
      for (int j = 0; j < 2; ++j) {
        const int out = kRandomWidths[s];
        const double bound = gain * std::sqrt(3.0 / (in * 9));
        Tensor<T> w({out, in, 3, 3});
        for (T& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
        add_conv(std::move(w), Tensor<T>({out}, T(0)));
        in = out;
      }
      add(Step::tap);
    }
    slope_ = static_cast<T>(kLeakySlope);
    max_pool_ = false;
    normalize_ = false;
  }

  // VGG-19 layout up to conv5_2; taps after the rectified conv{s}_2 outputs.
  void build_pretrained() {
    NamedTensorArchive archive;
    try {
      archive = load_archive(cfg_.weights_file);
    } catch (const Error& e) {
      fail(ErrorKind::config, std::string("cannot load extractor weights: ") + e.what());
    }
    const std::array<int, 5> convs_per_stage{2, 2, 4, 4, 2};
    int in = 3;
    for (int s = 0; s < 5; ++s) {
      if (s > 0) add(Step::pool);
      for (int j = 1; j <= convs_per_stage[s]; ++j) {
        const std::string name = "conv" + std::to_string(s + 1) + "_" + std::to_string(j);
        require(archive.contains(name + ".weight") && archive.contains(name + ".bias"), ErrorKind::config,
                "extractor weights lack " + name);
        const Tensor<float>& w = archive.get(name + ".weight");
        const Tensor<float>& b = archive.get(name + ".bias");
        require(w.shape.size() == 4 && w.shape[1] == in && w.shape[2] == 3 && w.shape[3] == 3 &&
                    b.shape == Shape{w.shape[0]},
                ErrorKind::config, "extractor layer " + name + " has shape " + shape_str(w.shape));
        add_conv(w.template cast<T>(), b.template cast<T>());
        in = w.shape[0];
        if (j == 2) add(Step::tap);
      }
    }
    slope_ = T(0);
    max_pool_ = true;
    normalize_ = true;
  }

  ad::Var<T> normalize_input(const ad::Var<T>& x) const {
    static constexpr double mean[3] = {0.485, 0.456, 0.406};
    static constexpr double stdev[3] = {0.229, 0.224, 0.225};
    const Shape& s = x.shape();
    auto scale_t = std::make_shared<Tensor<T>>(s);
    Tensor<T> shift(Shape{3});
    const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
    for (int n = 0; n < s[0]; ++n)
      for (int c = 0; c < 3; ++c)
        std::fill_n(scale_t->data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(n) * 3 + c) * plane),
                    plane, static_cast<T>(1.0 / stdev[c]));
    for (int c = 0; c < 3; ++c) shift.data[c] = static_cast<T>(-mean[c] / stdev[c]);
    return ad::add_channel_bias(ad::mask_mul(x, std::shared_ptr<const Tensor<T>>(scale_t)), ad::Var<T>(shift));
  }

  FeatureExtractorConfig cfg_;
  std::vector<Step> steps_;
  T slope_ = T(0);
  bool max_pool_ = false;
  bool normalize_ = false;
};

// sum_l lambda_l * mean|phi_l(a) - phi_l(b)|
template <class T>
ad::Var<T> perceptual_loss_from_features(const std::array<double, 5>& lambdas, const std::vector<ad::Var<T>>& fa,
                                         const std::vector<ad::Var<T>>& fb) {
  require(fa.size() == 5 && fb.size() == 5, ErrorKind::shape, "perceptual loss needs five feature maps");
  ad::Var<T> total;
  for (std::size_t l = 0; l < 5; ++l) {
    ad::Var<T> term = ad::scale(ad::mean_all(ad::abs(ad::sub(fa[l], fb[l]))), static_cast<T>(lambdas[l]));
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

template <class T>
ad::Var<T> perceptual_loss(const FeatureExtractor<T>& fx, const ad::Var<T>& prediction, const ad::Var<T>& target) {
  require(prediction.shape() == target.shape(), ErrorKind::shape,
          "perceptual loss: " + shape_str(prediction.shape()) + " vs " + shape_str(target.shape()));
  return perceptual_loss_from_features(fx.config().lambdas, fx.features(prediction), fx.features(target));
}

inline double reweighted_loss(double weight, double lp) {
  require(weight >= 0.0, ErrorKind::parameter, "reweighting factor must be >= 0");
  return weight * lp;
}

template <class T>
ad::Var<T> reweighted_loss(double weight, const ad::Var<T>& lp) {
  require(weight >= 0.0, ErrorKind::parameter, "reweighting factor must be >= 0");
  return ad::scale(lp, static_cast<T>(weight));
}

// ---- patch critic ----------------------------------------------------------

inline std::vector<ConvSpec> discriminator_layers(const DiscriminatorConfig& cfg) {
  cfg.validate();
  std::vector<ConvSpec> layers;
  int in = 3;
  for (int i = 0; i < DiscriminatorConfig::kLayers; ++i) {
    const int out = cfg.base_channels * std::min(1 << i, 4);
    layers.push_back({"disc.conv" + std::to_string(i + 1), in, out, 3});
    in = out;
  }
  layers.push_back({"disc.out", in, 1, 1});
  return layers;
}

inline ParameterSet init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  ParameterSet params;
  params.kind = "patch_critic";
  params.levels = DiscriminatorConfig::kLayers;
  params.base_channels = cfg.base_channels;
  detail::init_layers(discriminator_layers(cfg), seed, params);
  return params;
}

// Five stride-2 3x3 convolutions, then a 1x1 convolution to one logit per patch.
template <class T>
ad::Var<T> discriminator_forward(const VarMap<T>& p, const ad::Var<T>& x) {
  const Shape& s = x.shape();
  require(s.size() == 4 && s[1] == 3, ErrorKind::shape, "discriminator expects N x 3 x H x W");
  require(s[2] >= 64 && s[3] >= 64, ErrorKind::shape, "discriminator input must be at least 64x64");
  ad::Var<T> h = x;
  for (int i = 1; i <= DiscriminatorConfig::kLayers; ++i)
    h = detail::act(detail::conv_layer(p, "disc.conv" + std::to_string(i), h, 2, 1));
  return detail::conv_layer(p, "disc.out", h, 1, 0);
}

// Per-sample critic value: mean of the logit map.
template <class T>
ad::Var<T> critic_score(const VarMap<T>& p, const ad::Var<T>& x) {
  ad::Var<T> logits = discriminator_forward(p, x);
  const T per = static_cast<T>(logits.size() / static_cast<std::size_t>(logits.shape()[0]));
  return ad::scale(ad::sum_per_sample(logits), T(1) / per);
}

template <class T>
struct AdversarialLosses {
  ad::Var<T> d_loss;
  ad::Var<T> g_loss;
  double penalty = 0.0;
};

// d_loss = E[D(fake)] - E[D(real)] + lambda * E[(|grad D(x_hat)| - 1)^2]
// g_loss = -E[D(fake)]
// d_loss sees `fake` detached; g_loss keeps its graph.
template <class T>
AdversarialLosses<T> wgan_gp_losses(const VarMap<T>& d_params, const ad::Var<T>& real, const ad::Var<T>& fake,
                                    double gp_lambda, Rng& rng) {
  require(real.shape() == fake.shape(), ErrorKind::shape,
          "wgan-gp: " + shape_str(real.shape()) + " vs " + shape_str(fake.shape()));
  const Shape& s = real.shape();
  const int n = s[0];
  const std::size_t per = real.size() / static_cast<std::size_t>(n);

  Tensor<T> mixed(s);
  for (int i = 0; i < n; ++i) {
    const T eps = static_cast<T>(rng.uniform());
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t k = i * per + j;
      mixed.data[k] = eps * real.value().data[k] + (T(1) - eps) * fake.value().data[k];
    }
  }
  ad::Var<T> x_hat(std::move(mixed), true);
  ad::Var<T> score_sum = ad::sum_all(critic_score(d_params, x_hat));
  ad::Var<T> gx = ad::grad(score_sum, {x_hat}, /*create_graph=*/true)[0];
  ad::Var<T> norms = ad::sqrt(ad::add_scalar(ad::sum_per_sample(ad::square(gx)), static_cast<T>(1e-12)));
  ad::Var<T> penalty = ad::mean_all(ad::square(ad::add_scalar(norms, T(-1))));

  ad::Var<T> d_fake = ad::mean_all(critic_score(d_params, fake.detach()));
  ad::Var<T> d_real = ad::mean_all(critic_score(d_params, real.detach()));
  AdversarialLosses<T> out;
  out.penalty = static_cast<double>(penalty.item());
  out.d_loss = ad::add(ad::sub(d_fake, d_real), ad::scale(penalty, static_cast<T>(gp_lambda)));
  out.g_loss = ad::neg(ad::mean_all(critic_score(d_params, fake)));
  return out;
}

}  // namespace fitdeblur
