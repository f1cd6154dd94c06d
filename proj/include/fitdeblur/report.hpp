#pragma once

// Per-frame and per-pair evaluation of a video against an optional reference.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fitdeblur/flow.hpp"
#include "fitdeblur/metrics.hpp"
#include "fitdeblur/nn.hpp"

namespace fitdeblur {

struct FrameMetrics {
  int index = 0;
  std::optional<bool> blurred;  // from a synthesis manifest, when one is given
  double psnr = 0.0;            // capped
  double ssim = 0.0;
  double perceptual = 0.0;
};

struct PairMetrics {
  int index = 0;  // pair (index, index + 1)
  double warp_error = 0.0;
};

struct MetricReport {
  std::map<std::string, std::string> provenance;
  std::vector<FrameMetrics> frames;
  std::vector<PairMetrics> pairs;
  double warp_error = 0.0;

  template <class F>
  std::vector<double> column(F f, std::optional<bool> blurred = std::nullopt) const {
    std::vector<double> out;
    for (const FrameMetrics& m : frames)
      if (!blurred || (m.blurred && *m.blurred == *blurred)) out.push_back(f(m));
    return out;
  }
  std::vector<double> psnrs(std::optional<bool> blurred = std::nullopt) const {
    return column([](const FrameMetrics& m) { return m.psnr; }, blurred);
  }
  std::vector<double> ssims(std::optional<bool> blurred = std::nullopt) const {
    return column([](const FrameMetrics& m) { return m.ssim; }, blurred);
  }
  std::vector<double> perceptuals(std::optional<bool> blurred = std::nullopt) const {
    return column([](const FrameMetrics& m) { return m.perceptual; }, blurred);
  }
};

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct EvalInputs {
  const FrameSequence* reference = nullptr;
  const std::vector<FlowField>* forward = nullptr;
  const std::vector<FlowField>* backward = nullptr;
  const std::vector<bool>* blurred = nullptr;
};

inline MetricReport evaluate_video(const FrameSequence& video, const EvalInputs& in, const FeatureExtractor<float>& fx,
                                   const FlowConfig& flow_cfg = {}, double consistency_px = 1.0) {
  require(!video.empty(), ErrorKind::empty_input, "nothing to evaluate");
  MetricReport r;
  if (in.reference) {
    require(in.reference->size() == video.size(), ErrorKind::shape,
            "reference has " + std::to_string(in.reference->size()) + " frames, output has " + std::to_string(video.size()));
    if (in.blurred) require(in.blurred->size() == video.size(), ErrorKind::shape, "manifest does not match the frame count");
    for (std::size_t i = 0; i < video.size(); ++i) {
      FrameMetrics m;
      m.index = static_cast<int>(i);
      if (in.blurred) m.blurred = (*in.blurred)[i];
      m.psnr = cap_psnr(psnr(video[i], (*in.reference)[i]));
      m.ssim = ssim(video[i], (*in.reference)[i]);
      m.perceptual = perceptual_distance(fx, video[i], (*in.reference)[i]);
      r.frames.push_back(m);
    }
  }
  if (video.size() >= 2) {
    std::vector<FlowField> fwd, bwd;
    const std::vector<FlowField>* f = in.forward;
    const std::vector<FlowField>* b = in.backward;
    if (!f) {
      for (std::size_t t = 0; t + 1 < video.size(); ++t) {
        fwd.push_back(estimate_flow(video[t], video[t + 1], flow_cfg));
        bwd.push_back(estimate_flow(video[t + 1], video[t], flow_cfg));
      }
      f = &fwd;
      b = &bwd;
    }
    const WarpErrorResult w = warping_error(video, f, b, consistency_px);
    for (std::size_t t = 0; t < w.per_pair.size(); ++t) r.pairs.push_back({static_cast<int>(t), w.per_pair[t]});
    r.warp_error = w.value;
  }
  return r;
}

inline void write_report_csv(std::ostream& os, const MetricReport& r) {
  for (const auto& [k, v] : r.provenance) os << "# " << k << '=' << v << '\n';
  os << "kind,index,blurred,psnr,ssim,perceptual,warp_error\n" << std::setprecision(9);
  auto num = [&](double v) {
    if (!std::isnan(v)) os << v;
  };
  for (const FrameMetrics& m : r.frames) {
    os << "frame," << m.index << ',';
    if (m.blurred) os << (*m.blurred ? 1 : 0);
    os << ',' << m.psnr << ',' << m.ssim << ',' << m.perceptual << ",\n";
  }
  for (const PairMetrics& p : r.pairs) {
    os << "pair," << p.index << ",,,,,";
    num(p.warp_error);
    os << '\n';
  }
  auto footer = [&](const char* name, std::optional<bool> subset, auto agg) {
    if (r.frames.empty() && subset) return;
    os << name << ",,,";
    num(agg(r.psnrs(subset)));
    os << ',';
    num(agg(r.ssims(subset)));
    os << ',';
    num(agg(r.perceptuals(subset)));
    os << ',';
    if (!subset) {
      std::vector<double> w;
      for (const PairMetrics& p : r.pairs)
        if (!std::isnan(p.warp_error)) w.push_back(p.warp_error);
      num(agg(w));
    }
    os << '\n';
  };
  footer("mean", std::nullopt, mean_of);
  footer("median", std::nullopt, median_of);
  const bool labelled = std::any_of(r.frames.begin(), r.frames.end(), [](const FrameMetrics& m) { return m.blurred.has_value(); });
  if (labelled) {
    footer("mean_blurred", true, mean_of);
    footer("mean_kept", false, mean_of);
  }
}

}  // namespace fitdeblur
