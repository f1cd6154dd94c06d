#pragma once

// Weighted sharp/blurry training pairs cropped from selected frames.

#include <cstdint>
#include <iostream>
#include <vector>

#include "fitdeblur/blur.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/frame_selection.hpp"
#include "fitdeblur/image.hpp"
#include "fitdeblur/random.hpp"

namespace fitdeblur {

struct PipelineConfig {
  int patch_size = 256;
  int batch_size = 4;
  double normalizer = 100.0;  // N in the M_VL / N weight
  double gamma = 2.2;
  bool linearize = true;  // blur in degamma'd space
  bool reweight = true;   // false: every pair gets weight 1
  std::uint64_t seed = 0;

  void validate() const {
    require(patch_size >= 1, ErrorKind::config, "patch_size must be >= 1");
    require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
    require(normalizer > 0.0, ErrorKind::config, "normalizer must be > 0");
    require(gamma > 0.0, ErrorKind::config, "gamma must be > 0");
  }
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct PatchOrigin {
  int frame = 0;
  int y = 0;
  int x = 0;
  int kernel_id = -1;
};

struct TrainPair {
  Image sharp;
  Image blurry;
  double weight = 0.0;
  int kernel_id = -1;
  PatchOrigin origin;
};

struct CroppedPatch {
  Image patch;
  int y = 0;
  int x = 0;
};

// Uniform axis-aligned crop; no flips or rotations.
inline CroppedPatch sample_patch(const Frame& frame, int size, Rng& rng) {
  require(frame.height >= size && frame.width >= size, ErrorKind::degenerate_input,
          "frame is smaller than the patch size");
  const int y = static_cast<int>(rng.index(static_cast<std::size_t>(frame.height - size + 1)));
  const int x = static_cast<int>(rng.index(static_cast<std::size_t>(frame.width - size + 1)));
  return {crop(frame, y, x, size, size), y, x};
}

inline double patch_weight(const Image& sharp, double normalizer, bool reweight) {
  return reweight ? sharpness_score(sharp).value / normalizer : 1.0;
}

inline TrainPair make_pair_with_kernel(Image sharp, const KernelBank& bank, int kernel_id, const PipelineConfig& cfg) {
  TrainPair pair;
  pair.blurry = apply_blur(sharp, bank.kernels.at(static_cast<std::size_t>(kernel_id)), cfg.gamma, cfg.linearize);
  pair.weight = patch_weight(sharp, cfg.normalizer, cfg.reweight);
  pair.kernel_id = kernel_id;
  pair.sharp = std::move(sharp);
  return pair;
}

inline TrainPair make_pair(Image patch, const KernelBank& bank, const PipelineConfig& cfg, Rng& rng) {
  require(!bank.empty(), ErrorKind::empty_bank, "cannot draw a kernel from an empty bank");
  const int id = static_cast<int>(rng.index(bank.size()));
  return make_pair_with_kernel(std::move(patch), bank, id, cfg);
}

inline TrainPair make_pair(Image patch, const KernelBank& bank, double gamma, double normalizer, Rng& rng) {
  PipelineConfig cfg;
  cfg.gamma = gamma;
  cfg.normalizer = normalizer;
  return make_pair(std::move(patch), bank, cfg, rng);
}

// Endless, seeded stream of pair batches drawn from a fixed frame set.
class BatchStream {
 public:
  BatchStream(std::vector<Frame> frames, PipelineConfig cfg, const KernelBank& bank)
      : cfg_(cfg), bank_(&bank), rng_(cfg.seed) {
    cfg_.validate();
    require(!bank.empty(), ErrorKind::empty_bank, "cannot build pairs from an empty bank");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const Frame& f = frames[i];
      if (f.height < cfg_.patch_size || f.width < cfg_.patch_size) {
        std::cerr << "warning: skipping frame " << i << " (" << f.height << "x" << f.width
                  << ") smaller than the " << cfg_.patch_size << " px patch\n";
        continue;
      }
      frames_.push_back(f);
      source_index_.push_back(static_cast<int>(i));
    }
    require(!frames_.empty(), ErrorKind::empty_input, "no frame is large enough for the patch size");
    for (const BlurKernel& k : bank.kernels)
      require(k.size <= cfg_.patch_size, ErrorKind::config, "patch_size must be >= the largest kernel size");
  }

  TrainPair next_pair() {
    const std::size_t f = rng_.index(frames_.size());
    CroppedPatch cp = sample_patch(frames_[f], cfg_.patch_size, rng_);
    TrainPair pair = make_pair(std::move(cp.patch), *bank_, cfg_, rng_);
    pair.origin = {source_index_[f], cp.y, cp.x, pair.kernel_id};
    return pair;
  }

  std::vector<TrainPair> next_batch() {
    std::vector<TrainPair> batch;
    batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
    for (int i = 0; i < cfg_.batch_size; ++i) batch.push_back(next_pair());
    return batch;
  }

  // Rebuilds a pair from its provenance; bit-identical to the emitted one.
  TrainPair regenerate(const PatchOrigin& origin) const {
    std::size_t local = 0;
    while (local < source_index_.size() && source_index_[local] != origin.frame) ++local;
    require(local < source_index_.size(), ErrorKind::parameter, "unknown frame in pair provenance");
    Image sharp = crop(frames_[local], origin.y, origin.x, cfg_.patch_size, cfg_.patch_size);
    TrainPair pair = make_pair_with_kernel(std::move(sharp), *bank_, origin.kernel_id, cfg_);
    pair.origin = origin;
    return pair;
  }

  const PipelineConfig& config() const { return cfg_; }
  std::size_t usable_frames() const { return frames_.size(); }

 private:
  PipelineConfig cfg_;
  const KernelBank* bank_;
  Rng rng_;
  std::vector<Frame> frames_;
  std::vector<int> source_index_;
};

}  // namespace fitdeblur
