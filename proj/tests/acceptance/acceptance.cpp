// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "../oracles.hpp"
#include "fitdeblur/commands.hpp"

using namespace fitdeblur;
namespace fs = std::filesystem;
using V = ad::Var<double>;
using Vs = std::vector<V>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path g_work;

RunConfig desk() { return load_config(FITDEBLUR_DESK_INI); }

// ---------------------------------------------------------------------------

Outcome frame_selection_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  int mismatches = 0, ties = 0;
  for (int v = 0; v < 100; ++v) {
    const int len = 1 + static_cast<int>(rng.index(100));
    const int window = 1 + static_cast<int>(rng.index(25));
    FrameSequence video;
    for (int i = 0; i < len; ++i) {
      if (i > 0 && rng.uniform() < 0.15) {
        // exact duplicates force ties inside a window
        video.push_back(video[rng.index(video.size())]);
        ++ties;
        continue;
      }
      Image f = oracle::noise_image(12, 10, rng);
      const float amp = static_cast<float>(0.05 + rng.uniform());
      for (float& x : f.data) x *= amp;
      video.push_back(std::move(f));
    }
    std::vector<double> scores;
    for (const Frame& f : video) scores.push_back(oracle::laplacian_variance(f));
    if (select_sharp_frames(video, window).indices != oracle::brute_force_selection(scores, window)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0,
          fmt("100 videos, %d duplicated frames, %d mismatches, %.2f s", ties, mismatches, secs)};
}

Outcome kernel_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  double worst_cell = 0.0, worst_mass = 0.0;
  bool rot_ok = true, mirror_ok = true;
  for (int i = 0; i < 50; ++i) {
    const int p = 2 * (2 + static_cast<int>(rng.index(19))) + 1;  // odd, 5..41
    const double l = 1.0 + rng.uniform() * (p - 2);
    const double o = rng.uniform() * 180.0;
    const BlurKernel k = symmetric_kernel({l, o}, p);
    const std::vector<double> ref = oracle::line_integral_kernel(l, o, p);
    double mass = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      worst_cell = std::max(worst_cell, std::abs(k.weights[j] - ref[j]));
      mass += k.weights[j];
    }
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) rot_ok &= k(r, c) == k(p - 1 - r, p - 1 - c);
  }
  for (int i = 0; i < 50; ++i) {
    const int p = i % 2 ? 31 : 21;
    const auto [a, b] = mirrored_pair(p, rng);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) mirror_ok &= b(r, c) == a(r, p - 1 - c);
  }
  const double secs = seconds_since(t0);
  return {worst_cell <= 0.02 && worst_mass <= 1e-9 && rot_ok && mirror_ok && secs < 60.0,
          fmt("max cell error %.4f, max mass error %.2e, rot180 %s, mirror %s, %.2f s", worst_cell, worst_mass,
              rot_ok ? "exact" : "BROKEN", mirror_ok ? "exact" : "BROKEN", secs)};
}

Outcome gamma_roundtrip() {
  Image grid(1, 10001, 1);
  for (int i = 0; i <= 10000; ++i) grid.data[i] = static_cast<float>(i / 10000.0);
  const Image back = regamma(degamma(grid, 2.2), 2.2);
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) worst = std::max(worst, double(std::abs(back.data[i] - grid.data[i])));
  return {worst <= 1e-6, fmt("max |regamma(degamma(x)) - x| = %.3e over 10001 points", worst)};
}

// ---------------------------------------------------------------------------

V contract(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum_all(ad::mul(y, V(oracle::random_tensor(y.shape(), rng))));
}

Tensor<double> away_from_zero(Shape s, Rng& rng) {
  Tensor<double> t = oracle::random_tensor(std::move(s), rng);
  for (double& v : t.data) v = (v < 0 ? -1 : 1) * (0.1 + std::abs(v));
  return t;
}

template <class Build>
double check_params(const ParameterSet& p, Build build) {
  std::vector<std::string> names;
  std::vector<Tensor<double>> inputs;
  for (const auto& [name, t] : p.tensors) {
    names.push_back(name);
    inputs.push_back(t.template cast<double>());
  }
  auto f = [&](const Vs& v) {
    VarMap<double> m;
    for (std::size_t i = 0; i < v.size(); ++i) m.emplace(names[i], v[i]);
    return build(m);
  };
  return oracle::gradcheck(f, inputs);
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> results;
  auto run = [&](const std::string& name, double err) { results.emplace_back(name, err); };

  Rng rng(1);
  const Shape s{2, 3, 4, 5};
  const auto a = away_from_zero(s, rng), b = away_from_zero(s, rng);
  using oracle::gradcheck;
  run("add", gradcheck([](const Vs& v) { return contract(ad::add(v[0], v[1]), 1); }, {a, b}));
  run("sub", gradcheck([](const Vs& v) { return contract(ad::sub(v[0], v[1]), 2); }, {a, b}));
  run("mul", gradcheck([](const Vs& v) { return contract(ad::mul(v[0], v[1]), 3); }, {a, b}));
  run("scale", gradcheck([](const Vs& v) { return contract(ad::scale(v[0], 1.7), 4); }, {a}));
  run("neg", gradcheck([](const Vs& v) { return contract(ad::neg(v[0]), 5); }, {a}));
  run("add_scalar", gradcheck([](const Vs& v) { return contract(ad::add_scalar(v[0], 0.3), 6); }, {a}));
  run("leaky_relu", gradcheck([](const Vs& v) { return contract(ad::leaky_relu(v[0], 0.2), 7); }, {a}));
  run("abs", gradcheck([](const Vs& v) { return contract(ad::abs(v[0]), 8); }, {a}));
  run("square", gradcheck([](const Vs& v) { return contract(ad::square(v[0]), 9); }, {a}));
  run("reciprocal", gradcheck([](const Vs& v) { return contract(ad::reciprocal(v[0]), 10); }, {a}));
  run("sqrt", gradcheck([](const Vs& v) { return contract(ad::sqrt(ad::abs(v[0])), 11); }, {a}));
  auto mask = std::make_shared<const Tensor<double>>(oracle::random_tensor(s, rng, 0, 1));
  run("mask_mul", gradcheck([&](const Vs& v) { return contract(ad::mask_mul(v[0], mask), 12); }, {a}));

  const auto x = oracle::random_tensor({2, 3, 4, 4}, rng);
  run("sum_all", gradcheck([](const Vs& v) { return ad::sum_all(ad::square(v[0])); }, {x}));
  run("mean_all", gradcheck([](const Vs& v) { return ad::mean_all(ad::square(v[0])); }, {x}));
  run("expand_scalar", gradcheck([](const Vs& v) { return contract(ad::expand_scalar(v[0], {2, 3}), 30); },
                                 {oracle::random_tensor({1}, rng)}));
  run("sum_per_sample", gradcheck([](const Vs& v) { return contract(ad::sum_per_sample(v[0]), 13); }, {x}));
  run("broadcast_per_sample",
      gradcheck([](const Vs& v) { return contract(ad::broadcast_per_sample(v[0], {2, 3, 2, 2}), 31); },
                {oracle::random_tensor({2}, rng)}));
  run("reduce_channels", gradcheck([](const Vs& v) { return contract(ad::reduce_channels(v[0]), 14); }, {x}));
  run("broadcast_channels",
      gradcheck([](const Vs& v) { return contract(ad::broadcast_channels(v[0], {2, 3, 2, 2}), 32); },
                {oracle::random_tensor({3}, rng)}));
  run("add_channel_bias", gradcheck([](const Vs& v) { return contract(ad::add_channel_bias(v[0], v[1]), 15); },
                                    {x, oracle::random_tensor({3}, rng)}));

  const auto cx = oracle::random_tensor({2, 3, 7, 6}, rng), cw = oracle::random_tensor({4, 3, 3, 3}, rng);
  run("conv2d", gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 1, 1), 16); }, {cx, cw}));
  run("conv2d stride 2", gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 2, 1), 17); }, {cx, cw}));
  run("conv2d 1x1", gradcheck([](const Vs& v) { return contract(ad::conv2d(v[0], v[1], 1, 0), 18); },
                              {cx, oracle::random_tensor({2, 3, 1, 1}, rng)}));
  {
    // differentiating through an input gradient exercises the conv backward ops
    const auto sx = oracle::random_tensor({1, 2, 5, 5}, rng), sw = oracle::random_tensor({3, 2, 3, 3}, rng);
    const Tensor<double> offset = oracle::random_tensor(sx.shape, rng);
    run("conv2d second order", gradcheck(
                                   [&](const Vs& v) {
                                     V xi(offset, true);
                                     V y = ad::conv2d(ad::add(xi, v[0]), v[1], 2, 1);
                                     V gx = ad::grad(contract(ad::square(y), 19), {xi}, true)[0];
                                     return ad::sum_all(ad::square(gx));
                                   },
                                   {sx, sw}));
  }

  const auto ra = oracle::random_tensor({2, 3, 4, 6}, rng), rb = oracle::random_tensor({2, 2, 4, 6}, rng);
  run("avg_pool2", gradcheck([](const Vs& v) { return contract(ad::avg_pool2(v[0]), 20); }, {ra}));
  run("max_pool2", gradcheck([](const Vs& v) { return contract(ad::max_pool2(v[0]), 21); }, {ra}));
  run("upsample_nearest2", gradcheck([](const Vs& v) { return contract(ad::upsample_nearest2(v[0]), 22); }, {ra}));
  run("concat_channels", gradcheck([](const Vs& v) { return contract(ad::concat_channels(v[0], v[1]), 23); }, {ra, rb}));
  run("slice_channels", gradcheck([](const Vs& v) { return contract(ad::slice_channels(v[0], 1, 2), 24); }, {ra}));
  run("pad_channels", gradcheck([](const Vs& v) { return contract(ad::pad_channels(v[0], 1, 5), 25); }, {ra}));

  {
    const FeatureExtractor<double> fx(FeatureExtractorConfig{});
    const auto pa = oracle::random_tensor({1, 3, 32, 32}, rng, 0, 1), pb = oracle::random_tensor({1, 3, 32, 32}, rng, 0, 1);
    run("perceptual_loss", gradcheck([&](const Vs& v) { return perceptual_loss(fx, v[0], V(pb)); }, {pa}));
  }
  {
    DiscriminatorConfig dc;
    dc.base_channels = 2;
    const auto real = oracle::random_tensor({1, 3, 64, 64}, rng, 0, 1), fake = oracle::random_tensor({1, 3, 64, 64}, rng, 0, 1);
    run("wgan_gp critic", check_params(init_discriminator(dc, 9), [&](const VarMap<double>& m) {
          Rng eps(11);
          return wgan_gp_losses(m, V(real), V(fake), 10.0, eps).d_loss;
        }));
  }

  const GeneratorConfig g{2, 4, false};
  const ParameterSet gp = init_generator(g, 7);
  const Tensor<double> in = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  // steps much above 1e-6 cross leaky-ReLU and max-pool kinks somewhere in the net
  run("tiny generator", check_params(gp, [&](const VarMap<double>& m) { return contract(generator_forward(g, m, V(in)), 26); }));

  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& [name, err] : results) {
    if (err > worst) worst = err, worst_name = name;
    if (!(err <= 1e-3)) failed += " " + name;
  }
  const double secs = seconds_since(t0);
  std::string detail = fmt("%zu checks, generator has %zu params, worst %.2e (%s), %.1f s", results.size(), gp.count(),
                           worst, worst_name.c_str(), secs);
  if (!failed.empty()) detail += "; over tolerance:" + failed;
  return {failed.empty() && gp.count() <= 10000 && secs < 300.0, detail};
}

// ---------------------------------------------------------------------------

struct OverfitRun {
  double loss_ratio = 0.0, blurry_psnr = 0.0, out_psnr = 0.0, secs = 0.0;
};

OverfitRun overfit(bool identity_init) {
  const Image sharp = test_card(64, 64, 7);
  KernelBank bank;
  bank.kernels.push_back(symmetric_kernel({9.0, 30.0}, 21));
  PipelineConfig pc;
  pc.patch_size = 64;
  const TrainPair pair = make_pair_with_kernel(sharp, bank, 0, pc);

  const GeneratorConfig g{2, 8, identity_init};
  FitState st = fresh_fit_state(g, 1, false);
  const FeatureExtractor<float> fx(FeatureExtractorConfig{});
  FitConfig fc;
  fc.iterations = 2000;
  fc.lr_generator = 5e-5;
  const FitLog log = fit_loop(st, [&] { return std::vector<TrainPair>{pair}; }, fc, fx);
  const Image out = clamp01(tensor_to_image(generator_forward<float>(g, st.generator, image_to_tensor<float>(pair.blurry))));
  OverfitRun r;
  r.loss_ratio = log.records.back().loss / log.records.front().loss;
  r.blurry_psnr = psnr(pair.blurry, sharp);
  r.out_psnr = psnr(out, sharp);
  r.secs = log.records.back().seconds;
  return r;
}

Outcome overfit_one_patch() {
  const OverfitRun r = overfit(true);
  const OverfitRun plain = overfit(false);
  const bool pass = r.loss_ratio <= 0.10 && r.out_psnr >= r.blurry_psnr + 3.0 && r.secs <= 600.0;
  return {pass, fmt("loss ratio %.3f (need <= 0.10), PSNR %.2f -> %.2f dB (need +3), %.0f s; "
                    "without identity init: ratio %.3f, PSNR %.2f dB",
                    r.loss_ratio, r.blurry_psnr, r.out_psnr, r.secs, plain.loss_ratio, plain.out_psnr)};
}

// ---------------------------------------------------------------------------

struct PipelineRun {
  double blurry_psnr = 0, out_psnr = 0, blurry_perc = 0, out_perc = 0, blurry_ssim = 0, out_ssim = 0, warp = 0;
  double smoothed_100 = 0, smoothed_final = 0, secs = 0;
};

const fs::path& desk_scene() {
  static const fs::path dir = [] {
    const fs::path d = g_work / "scene";
    if (!fs::exists(d / frame_name(39))) {
      fs::remove_all(d);
      cmd_scene(d, 40, 192, 256, 0, 2, 11);
    }
    return d;
  }();
  return dir;
}

PipelineRun end_to_end(const std::string& name, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = g_work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path blurry = dir / "blurry", manifest = dir / "manifest.csv", ckpt = dir / "fit.nta";
  cmd_synth(desk_scene(), cfg, blurry, manifest);
  const FitResult fit = cmd_fit(blurry, cfg, ckpt);
  cmd_deblur(blurry, ckpt, dir / "deblurred", cfg.inference);

  EvalCommandOptions opt;
  opt.reference_dir = desk_scene();
  opt.manifest = manifest;
  const MetricReport before = cmd_eval(blurry, opt, dir / "blurry_report.csv", cfg);
  const MetricReport after = cmd_eval(dir / "deblurred", opt, dir / "report.csv", cfg);

  PipelineRun r;
  r.blurry_psnr = mean_of(before.psnrs(true));
  r.out_psnr = mean_of(after.psnrs(true));
  r.blurry_perc = mean_of(before.perceptuals(true));
  r.out_perc = mean_of(after.perceptuals(true));
  r.blurry_ssim = mean_of(before.ssims(true));
  r.out_ssim = mean_of(after.ssims(true));
  r.warp = after.warp_error;
  const std::vector<double> sm = fit.log.smoothed(100);
  r.smoothed_100 = sm.size() >= 100 ? sm[99] : std::nan("");
  r.smoothed_final = sm.back();
  r.secs = seconds_since(t0);
  return r;
}

std::string describe(const PipelineRun& r) {
  return fmt("blurred frames: PSNR %.3f -> %.3f dB, perceptual %.4f -> %.4f, SSIM %.4f -> %.4f; "
             "smoothed loss %.4f at 100 -> %.4f final; E_warp %.5f; %.0f s",
             r.blurry_psnr, r.out_psnr, r.blurry_perc, r.out_perc, r.blurry_ssim, r.out_ssim, r.smoothed_100,
             r.smoothed_final, r.warp, r.secs);
}

Outcome desk_pipeline() {
  const PipelineRun r = end_to_end("desk", desk());
  const bool pass = r.out_psnr > r.blurry_psnr && r.out_perc < r.blurry_perc && r.smoothed_final < r.smoothed_100 &&
                    r.secs <= 3600.0;
  return {pass, describe(r)};
}

// ---------------------------------------------------------------------------

constexpr std::size_t kSmooth = 100;

// First iteration whose full trailing window averages at or below target;
// shorter windows at the start are single-batch noise.
int first_reaching(const std::vector<double>& smoothed, double target) {
  for (std::size_t i = kSmooth - 1; i < smoothed.size(); ++i)
    if (smoothed[i] <= target) return static_cast<int>(i) + 1;
  return static_cast<int>(smoothed.size()) + 1;
}

struct Paired {
  double meta = 0, random = 0;
  std::string per_seed;
};

// Meta-train, then fine-tune from the meta weights and fit from scratch with
// the same seed: both runs start from the same draw and see the same batches.
Paired paired_runs(const std::vector<FrameSequence>& videos, const std::vector<Frame>& sharp, const KernelBank& bank,
                   const RunConfig& cfg) {
  std::vector<double> meta_iters, random_iters;
  Paired p;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    MetaConfig mc = cfg.meta;
    mc.seed = seed;
    const MetaResult meta = maml_train(videos, bank, mc, cfg.pipeline, cfg.generator, cfg.extractor, cfg.window);
    FitConfig fc = cfg.fit;
    fc.iterations = 2000;
    fc.seed = seed;
    const FitResult random = fit(sharp, bank, fc, cfg.pipeline, cfg.generator, cfg.extractor);
    const FitResult tuned = finetune(meta.params, sharp, bank, fc, cfg.pipeline, cfg.extractor);
    const std::vector<double> rs = random.log.smoothed(kSmooth), ts = tuned.log.smoothed(kSmooth);
    const double target = rs.back();
    random_iters.push_back(first_reaching(rs, target));
    meta_iters.push_back(first_reaching(ts, target));
    p.per_seed += fmt("%s%d vs %d (target %.4f)", seed > 1 ? ", " : "", int(meta_iters.back()),
                      int(random_iters.back()), target);
  }
  p.meta = median3(meta_iters);
  p.random = median3(random_iters);
  return p;
}

Outcome maml_adaptation() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = desk();
  cfg.generator = {2, 8, true};
  cfg.pipeline.patch_size = 64;
  cfg.meta.meta_iterations = 500;
  cfg.meta.order = MamlOrder::first;
  const KernelBank bank = build_bank(cfg);

  const fs::path dir = g_work / "maml";
  fs::remove_all(dir);
  std::vector<FrameSequence> videos;
  for (int v = 0; v < 4; ++v) {
    const fs::path sharp = dir / fmt("sharp%d", v), blurry = dir / fmt("blurry%d", v);
    cmd_scene(sharp, 40, 96, 128, v % 2, 1 + v, 300 + v);
    cmd_synth(sharp, cfg, blurry, dir / fmt("manifest%d.csv", v));
    videos.push_back(load_frames(blurry));
  }
  const FrameSequence held_out = videos.back();
  videos.pop_back();
  std::vector<Frame> sharp;
  for (int i : select_sharp_frames(held_out, cfg.window).indices) sharp.push_back(held_out[static_cast<std::size_t>(i)]);

  const Paired shipped = paired_runs(videos, sharp, bank, cfg);
  RunConfig plain_cfg = cfg;
  plain_cfg.generator.identity_init = false;
  const Paired literal = paired_runs(videos, sharp, bank, plain_cfg);

  // degenerate contracts on a short recorded task stream
  const FeatureExtractor<float> fx(cfg.extractor);
  TaskSampler sampler(videos, bank, cfg.pipeline, cfg.window, 99);
  std::vector<std::vector<TaskSample>> stream;
  for (int i = 0; i < 5; ++i) stream.push_back(sampler.next_batch(2));
  MetaConfig zero = cfg.meta;
  zero.alpha = 0.0;
  zero.beta = 1e-3;
  zero.meta_iterations = 5;
  std::size_t k = 0;
  const MetaResult m0 = maml_loop(cfg.generator, init_generator(cfg.generator, 4), [&] { return stream[k++]; }, zero, fx);
  FitState st;
  st.generator_config = cfg.generator;
  st.generator = init_generator(cfg.generator, 4);
  st.generator_opt = init_adam(st.generator);
  FitConfig plain;
  plain.iterations = 5;
  plain.lr_generator = zero.beta;
  std::size_t j = 0;
  fit_loop(st, [&] {
    std::vector<TrainPair> batch;
    for (const TaskSample& t : stream[j]) batch.push_back({t.gt, t.outer_blurry, t.weight, -1, {}});
    ++j;
    return batch;
  }, plain, fx);
  const bool alpha_ok = m0.params == st.generator;

  MetaConfig frozen = cfg.meta;
  frozen.beta = 0.0;
  frozen.alpha = 1e-2;
  frozen.meta_iterations = 3;
  frozen.seed = 8;
  const MetaResult mb = maml_train(videos, bank, frozen, cfg.pipeline, cfg.generator, cfg.extractor, cfg.window);
  const bool beta_ok = mb.params.tensors == init_generator(cfg.generator, mix_seed(8, 2)).tensors;

  return {shipped.meta < shipped.random && alpha_ok && beta_ok,
          fmt("median iterations to the random start's 2000-iteration loss: meta %.0f vs random %.0f [", shipped.meta,
              shipped.random) +
              shipped.per_seed +
              fmt("]; without identity init: %.0f vs %.0f [", literal.meta, literal.random) + literal.per_seed +
              fmt("]; alpha=0 %s, beta=0 %s; %.0f s", alpha_ok ? "bit-equal" : "DIFFERS", beta_ok ? "unchanged" : "CHANGED",
                  seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome temporal_metrics() {
  const FrameSequence still(6, test_card(64, 80, 5));
  const double e_static = warping_error(still).value;
  const std::vector<FlowField> zero(5, FlowField(64, 80));
  const double e_static_zero = warping_error(still, &zero).value;

  const FrameSequence pan = pan_sequence(6, 64, 80, 0, 2, 6);
  // frame t+1 starts 2 px further right, so content moves 2 px left
  const std::vector<FlowField> fwd(5, FlowField(64, 80, -2.0f, 0.0f)), bwd(5, FlowField(64, 80, 2.0f, 0.0f));
  const double e_pan = warping_error(pan, &fwd, &bwd).value;

  const FrameSequence shift = pan_sequence(2, 96, 128, 0, -3, 1);
  const FlowField flow = estimate_flow(shift[0], shift[1]);
  int good = 0, total = 0;
  for (int y = 16; y < 80; ++y)
    for (int x = 16; x < 112; ++x) {
      ++total;
      good += std::abs(flow.dx(y, x) - 3.0f) <= 0.5f && std::abs(flow.dy(y, x)) <= 0.5f;
    }
  const double frac = double(good) / total;
  return {e_static == 0.0 && e_static_zero == 0.0 && e_pan <= 1e-4 && frac >= 0.9,
          fmt("static E_warp %g (estimated flow) and %g (zero flow), 2-px pan %.2e, 3-px shift recovered on %.1f%%",
              e_static, e_static_zero, e_pan, 100 * frac)};
}

Outcome determinism_and_persistence() {
  const fs::path dir = g_work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = desk();
  cfg.generator = {2, 8, true};
  cfg.pipeline.patch_size = 64;
  cfg.fit.iterations = 25;
  cfg.fit.seed = 9;
  cmd_synth(desk_scene(), cfg, dir / "blurry", dir / "manifest.csv");
  cmd_fit(dir / "blurry", cfg, dir / "a.nta");
  cmd_fit(dir / "blurry", cfg, dir / "b.nta");
  cfg.fit.adversarial = true;
  cmd_fit(dir / "blurry", cfg, dir / "c.nta");
  cmd_fit(dir / "blurry", cfg, dir / "d.nta");
  const bool same = slurp(dir / "a.nta") == slurp(dir / "b.nta");
  const bool same_adv = slurp(dir / "c.nta") == slurp(dir / "d.nta");

  bool roundtrip = true;
  for (const char* f : {"a.nta", "c.nta"}) {
    const std::string bytes = slurp(dir / f);
    roundtrip &= serialize_archive(load_archive(dir / f)) == bytes;
    save_checkpoint(load_checkpoint(dir / f), dir / "again.nta");
    roundtrip &= slurp(dir / "again.nta") == bytes;
  }
  NamedTensorArchive odd;
  Tensor<float> t({5});
  t.data = {-0.0f, 1e-45f, std::numeric_limits<float>::max(), std::nanf(""), -3.5f};
  odd.put("odd", t);
  save_archive(odd, dir / "odd.nta");
  const Tensor<float> back = load_archive(dir / "odd.nta").get("odd");
  roundtrip &= std::memcmp(back.data.data(), t.data.data(), sizeof(float) * 5) == 0;

  return {same && same_adv && roundtrip,
          fmt("repeated fit %s, with critic %s, archive/checkpoint roundtrip %s", same ? "bit-identical" : "DIFFERS",
              same_adv ? "bit-identical" : "DIFFERS", roundtrip ? "bit-exact" : "NOT bit-exact")};
}

Outcome ablation_hooks() {
  struct Setting {
    std::string name;
    std::string override_;
  };
  const std::vector<Setting> settings = {
      {"family_symmetric", "blur_synthesis.family=symmetric"},
      {"family_asymmetric", "blur_synthesis.family=asymmetric"},
      {"family_simulated", "blur_synthesis.family=simulated"},
      {"reweight_off", "patch_pipeline.reweight=false"},
      {"degamma_off", "patch_pipeline.linearize=false"},
  };
  bool ok = true;
  std::string detail;
  for (const Setting& s : settings) {
    RunConfig cfg = desk();
    apply_override(cfg, s.override_);
    apply_override(cfg, "training.iterations=500");
    try {
      const PipelineRun r = end_to_end("ablation_" + s.name, cfg);
      const bool fine = r.smoothed_final < r.smoothed_100 && std::isfinite(r.out_psnr);
      ok &= fine;
      detail += fmt("\n    %-18s PSNR %.3f -> %.3f dB, perceptual %.4f -> %.4f, smoothed loss %.4f -> %.4f%s",
                    s.name.c_str(), r.blurry_psnr, r.out_psnr, r.blurry_perc, r.out_perc, r.smoothed_100,
                    r.smoothed_final, fine ? "" : "  (loss did not decrease)");
    } catch (const std::exception& e) {
      ok = false;
      detail += "\n    " + s.name + " failed: " + e.what();
    }
  }
  return {ok, "all settings selectable from config and run end to end at 500 iterations:" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "fitdeblur_acceptance").string();
  app.add_option("--only", only, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--workdir", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"frame selection oracle", frame_selection_oracle},
      {"kernel oracle", kernel_oracle},
      {"gamma roundtrip", gamma_roundtrip},
      {"gradient checks", gradient_checks},
      {"overfit one patch", overfit_one_patch},
      {"desk end-to-end", desk_pipeline},
      {"meta-init adaptation", maml_adaptation},
      {"temporal metrics", temporal_metrics},
      {"determinism and persistence", determinism_and_persistence},
      {"ablation hooks", ablation_hooks},
  };
  const std::set<int> chosen(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "C" << n << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures ? 1 : 0;
}
