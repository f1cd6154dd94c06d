#pragma once

// Command implementations behind the fitdeblur tool, plus the bank, flow and
// manifest file formats. Each command is deterministic given its inputs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fitdeblur/archive.hpp"
#include "fitdeblur/blur.hpp"
#include "fitdeblur/checkpoint.hpp"
#include "fitdeblur/config.hpp"
#include "fitdeblur/flow.hpp"
#include "fitdeblur/frame_selection.hpp"
#include "fitdeblur/inference.hpp"
#include "fitdeblur/meta.hpp"
#include "fitdeblur/png_io.hpp"
#include "fitdeblur/report.hpp"
#include "fitdeblur/scene.hpp"
#include "fitdeblur/training.hpp"

namespace fitdeblur {

namespace fs = std::filesystem;

// ---- kernel bank archive ----

inline NamedTensorArchive bank_to_archive(const KernelBank& bank) {
  NamedTensorArchive a;
  a.metadata["type"] = "kernel_bank";
  a.metadata["seed"] = bank.seed;
  a.metadata["family"] = to_string(bank.family);
  a.metadata["counts"] = bank.counts;
  std::size_t k = 0;
  for (std::size_t g = 0; g < kBankSizes.size(); ++g) {
    const int p = kBankSizes[g], n = bank.counts[g];
    Tensor<float> t({n, p, p});
    for (int i = 0; i < n; ++i, ++k)
      for (int j = 0; j < p * p; ++j)
        t.data[static_cast<std::size_t>(i) * p * p + j] = static_cast<float>(bank.kernels[k].weights[j]);
    a.put("k" + std::to_string(p), std::move(t));
  }
  return a;
}

// Float storage loses the exact unit mass, so weights are renormalized in
// double on load. Motion parameters are not stored.
inline KernelBank bank_from_archive(const NamedTensorArchive& a) {
  require(a.metadata.value("type", "") == "kernel_bank", ErrorKind::corrupt_file, "archive is not a kernel bank");
  KernelBank bank;
  try {
    bank.seed = a.metadata.at("seed").get<std::uint64_t>();
    bank.family = parse_kernel_family(a.metadata.at("family").get<std::string>());
    bank.counts = a.metadata.at("counts").get<std::array<int, 3>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_file, std::string("bad kernel bank header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::corrupt_file, std::string("bad kernel bank header: ") + e.what());
  }
  for (std::size_t g = 0; g < kBankSizes.size(); ++g) {
    const int p = kBankSizes[g], n = bank.counts[g];
    const Tensor<float>& t = a.get("k" + std::to_string(p));
    require(t.shape == std::vector<int>{n, p, p}, ErrorKind::corrupt_file,
            "kernel group k" + std::to_string(p) + " does not match its declared count");
    for (int i = 0; i < n; ++i) {
      BlurKernel kern;
      kern.size = p;
      kern.family = bank.family;
      kern.weights.resize(static_cast<std::size_t>(p) * p);
      double sum = 0.0;
      for (int j = 0; j < p * p; ++j) {
        const double w = t.data[static_cast<std::size_t>(i) * p * p + j];
        require(std::isfinite(w) && w >= 0.0, ErrorKind::corrupt_file, "negative or non-finite kernel weight");
        kern.weights[j] = w;
        sum += w;
      }
      require(sum > 0.0, ErrorKind::corrupt_file, "kernel with zero mass");
      for (double& w : kern.weights) w /= sum;
      bank.kernels.push_back(std::move(kern));
    }
  }
  require(!bank.empty(), ErrorKind::empty_bank, "kernel bank archive holds no kernels");
  return bank;
}

inline void save_bank(const KernelBank& bank, const fs::path& path) { save_archive(bank_to_archive(bank), path); }
inline KernelBank load_bank(const fs::path& path) { return bank_from_archive(load_archive(path)); }

// ---- flow files: a directory holding fwd_NNNNNN.nta (t -> t+1) and,
// optionally, bwd_NNNNNN.nta (t+1 -> t), one `flow` tensor each ----

struct FlowSet {
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;  // empty or one per forward flow
};

inline fs::path flow_file(const fs::path& dir, const char* kind, std::size_t t) {
  std::ostringstream os;
  os << kind << '_' << std::setw(6) << std::setfill('0') << t << ".nta";
  return dir / os.str();
}

inline void save_flow(const FlowField& f, const fs::path& path) {
  NamedTensorArchive a;
  a.metadata["type"] = "flow";
  a.put("flow", flow_to_tensor(f));
  save_archive(a, path);
}

inline FlowField load_flow(const fs::path& path) { return flow_from_tensor(load_archive(path).get("flow")); }

inline void save_flows(const FlowSet& flows, const fs::path& dir) {
  require(flows.backward.empty() || flows.backward.size() == flows.forward.size(), ErrorKind::shape,
          "backward flows must match forward flows");
  fs::create_directories(dir);
  for (std::size_t t = 0; t < flows.forward.size(); ++t) {
    save_flow(flows.forward[t], flow_file(dir, "fwd", t));
    if (!flows.backward.empty()) save_flow(flows.backward[t], flow_file(dir, "bwd", t));
  }
}

// Reads fwd_000000, fwd_000001, ... until the first gap. Backward flows are
// used only if present for every pair.
inline FlowSet load_flows(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::io, dir.string() + " is not a flow directory");
  FlowSet f;
  for (std::size_t t = 0; fs::exists(flow_file(dir, "fwd", t)); ++t) f.forward.push_back(load_flow(flow_file(dir, "fwd", t)));
  require(!f.forward.empty(), ErrorKind::empty_input, dir.string() + " holds no forward flows");
  bool all = true;
  for (std::size_t t = 0; t < f.forward.size() && all; ++t) all = fs::exists(flow_file(dir, "bwd", t));
  if (all)
    for (std::size_t t = 0; t < f.forward.size(); ++t) f.backward.push_back(load_flow(flow_file(dir, "bwd", t)));
  return f;
}

// ---- synthesis manifest ----

struct ManifestRow {
  int frame = 0;
  bool kept = false;
  int kernel_id = -1;  // -1 for kept frames
  int kernel_size = 0;
};

inline void write_manifest(std::ostream& os, const std::vector<ManifestRow>& rows, const KernelBank& bank) {
  os << "# family=" << to_string(bank.family) << " bank_seed=" << bank.seed << " counts=" << bank.counts[0] << ','
     << bank.counts[1] << ',' << bank.counts[2] << '\n';
  os << "frame,kept,kernel_id,kernel_size,length,orientation\n" << std::setprecision(9);
  for (const ManifestRow& r : rows) {
    os << r.frame << ',' << (r.kept ? 1 : 0) << ',' << r.kernel_id << ',' << r.kernel_size << ',';
    if (r.kernel_id >= 0 && bank.kernels[r.kernel_id].motion)
      os << bank.kernels[r.kernel_id].motion->length << ',' << bank.kernels[r.kernel_id].motion->orientation;
    else
      os << ',';
    os << '\n';
  }
}

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      require(line.rfind("frame,kept,", 0) == 0, ErrorKind::io, "manifest header missing in " + path.string());
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cell[4];
    for (std::string& c : cell) std::getline(ls, c, ',');
    try {
      rows.push_back({std::stoi(cell[0]), cell[1] == "1", std::stoi(cell[2]), std::stoi(cell[3])});
    } catch (const std::exception&) {
      fail(ErrorKind::io, "malformed manifest row '" + line + "'");
    }
  }
  require(header, ErrorKind::io, "empty manifest " + path.string());
  return rows;
}

// ---- commands ----

inline std::vector<SharpnessRow> cmd_score(const fs::path& in_dir, const fs::path& out_csv, int window = 20) {
  const FrameSequence video = load_frames(in_dir);
  const std::vector<SharpnessRow> rows = sharpness_report(video, window);
  std::ofstream os(out_csv);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + out_csv.string());
  write_sharpness_csv(os, rows);
  return rows;
}

struct KernelSummary {
  int size = 0;
  int count = 0;
  double max_mass_error = 0.0;      // max |sum - 1|
  double max_symmetry_error = 0.0;  // max |k - rot180(k)|
};

inline std::vector<KernelSummary> summarize_bank(const KernelBank& bank) {
  std::vector<KernelSummary> out;
  std::size_t k = 0;
  for (std::size_t g = 0; g < kBankSizes.size(); ++g) {
    KernelSummary s;
    s.size = kBankSizes[g];
    s.count = bank.counts[g];
    for (int i = 0; i < s.count; ++i, ++k) {
      const BlurKernel& kern = bank.kernels[k];
      double sum = 0.0;
      for (double w : kern.weights) sum += w;
      s.max_mass_error = std::max(s.max_mass_error, std::abs(sum - 1.0));
      const int p = kern.size;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          s.max_symmetry_error = std::max(s.max_symmetry_error, std::abs(kern(r, c) - kern(p - 1 - r, p - 1 - c)));
    }
    out.push_back(s);
  }
  return out;
}

inline std::vector<KernelSummary> cmd_kernels(const RunConfig& cfg, const fs::path& out_file, std::ostream* report = nullptr) {
  const KernelBank bank = build_bank(cfg);
  save_bank(bank, out_file);
  const std::vector<KernelSummary> summary = summarize_bank(bank);
  if (report) {
    *report << "size,count,max_mass_error,max_symmetry_error\n";
    for (const KernelSummary& s : summary)
      *report << s.size << ',' << s.count << ',' << s.max_mass_error << ',' << s.max_symmetry_error << '\n';
  }
  return summary;
}

// Keeps the frames selection would pick and blurs every other frame with a
// bank kernel drawn from a stream seeded by the bank seed.
inline std::vector<ManifestRow> cmd_synth(const fs::path& in_dir, const RunConfig& cfg, const fs::path& out_dir,
                                          const fs::path& manifest) {
  const FrameSequence video = load_frames(in_dir);
  const KernelBank bank = build_bank(cfg);
  const SelectionResult sel = select_sharp_frames(video, cfg.window);
  std::vector<bool> kept(video.size(), false);
  for (int i : sel.indices) kept[static_cast<std::size_t>(i)] = true;

  // a delta kernel would leave a "blurred" frame sharp
  std::vector<int> blurring;
  for (std::size_t k = 0; k < bank.size(); ++k)
    if (!is_delta(bank.kernels[k])) blurring.push_back(static_cast<int>(k));
  require(!blurring.empty(), ErrorKind::empty_bank, "every bank kernel is a delta; nothing to blur frames with");

  DirectoryLock lock(out_dir);
  Rng rng(mix_seed(cfg.bank_seed, 6));
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < video.size(); ++i) {
    ManifestRow r;
    r.frame = static_cast<int>(i);
    r.kept = kept[i];
    Frame out = video[i];
    if (!r.kept) {
      r.kernel_id = blurring[rng.index(blurring.size())];
      r.kernel_size = bank.kernels[r.kernel_id].size;
      out = clamp01(apply_blur(video[i], bank.kernels[r.kernel_id], cfg.pipeline.gamma, cfg.pipeline.linearize));
    }
    save_png(out, out_dir / frame_name(r.frame));
    rows.push_back(r);
  }
  std::ofstream os(manifest);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + manifest.string());
  write_manifest(os, rows, bank);
  return rows;
}

struct FitCommandOptions {
  std::optional<fs::path> resume;   // continue from this checkpoint
  std::optional<fs::path> log_csv;  // per-iteration loss log
  std::ostream* progress = nullptr;
  int progress_every = 100;
};

// Selects sharp frames, fits, and writes the checkpoint at every cadence point
// and at the end. On a numeric failure the file keeps the last good state.
// Resuming from a meta-learned checkpoint is per-video fine-tuning.
inline FitResult cmd_fit(const fs::path& in_dir, const RunConfig& cfg, const fs::path& out_checkpoint,
                         const FitCommandOptions& opt = {}) {
  cfg.validate();
  const FrameSequence video = load_frames(in_dir);
  std::vector<Frame> sharp;
  for (int i : select_sharp_frames(video, cfg.window).indices) sharp.push_back(video[static_cast<std::size_t>(i)]);
  const KernelBank bank = build_bank(cfg);
  FeatureExtractor<float> fx(cfg.extractor);

  FitResult r;
  if (opt.resume) {
    const Checkpoint c = load_checkpoint(*opt.resume);
    r.state = fit_state_from(c);
  } else {
    r.state = fresh_fit_state(cfg.generator, cfg.fit.seed, cfg.fit.adversarial);
  }
  PipelineConfig pipeline = cfg.pipeline;
  // a resumed run continues with a distinct but reproducible pair stream
  pipeline.seed = mix_seed(cfg.fit.seed, 1 + static_cast<std::uint64_t>(r.state.generator.step));
  BatchStream stream(sharp, pipeline, bank);

  auto hook = [&](const FitState& s) { save_checkpoint(s.checkpoint(), out_checkpoint); };
  auto next = [&] {
    std::vector<TrainPair> b = stream.next_batch();
    if (opt.progress && opt.progress_every > 0) {
      const std::int64_t step = r.state.generator.step;
      if (step > 0 && step % opt.progress_every == 0)
        *opt.progress << "step " << step << '\n' << std::flush;
    }
    return b;
  };
  r.log = fit_loop(r.state, next, cfg.fit, fx, hook);
  if (opt.log_csv) {
    std::ofstream os(*opt.log_csv);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + opt.log_csv->string());
    r.log.write_csv(os);
  }
  return r;
}

inline MetaResult cmd_meta(const std::vector<fs::path>& in_dirs, const RunConfig& cfg, const fs::path& out_checkpoint,
                           std::ostream* progress = nullptr) {
  cfg.validate();
  require(!in_dirs.empty(), ErrorKind::empty_input, "meta-training needs at least one video directory");
  std::vector<FrameSequence> videos;
  for (const fs::path& d : in_dirs) videos.push_back(load_frames(d));
  const KernelBank bank = build_bank(cfg);
  auto observe = [&](int it, double loss, const ParameterSet&) {
    if (progress && it % 50 == 0) *progress << "meta step " << it << " loss " << loss << '\n' << std::flush;
  };
  MetaResult r = maml_train(videos, bank, cfg.meta, cfg.pipeline, cfg.generator, cfg.extractor, cfg.window, observe);
  Checkpoint c;
  c.generator = r.params;
  c.generator_opt = init_adam(r.params);
  c.meta = true;
  save_checkpoint(c, out_checkpoint);
  return r;
}

// Frames keep their file names, so gaps in the input numbering survive.
inline FrameSequence cmd_deblur(const fs::path& in_dir, const fs::path& checkpoint, const fs::path& out_dir,
                                const InferenceOptions& opt = {}) {
  const Checkpoint c = load_checkpoint(checkpoint);
  const GeneratorConfig gcfg = generator_config_of(c.generator);
  const std::vector<fs::path> files = list_frames(in_dir);
  require(!files.empty(), ErrorKind::io, "no frame_%06d.png files in " + in_dir.string());
  DirectoryLock lock(out_dir);
  FrameSequence out;
  for (const fs::path& f : files) {
    try {
      out.push_back(deblur_frame(gcfg, c.generator, load_png(f), opt));
    } catch (const Error& e) {
      fail(e.kind(), f.filename().string() + ": " + e.what());
    }
    save_png(out.back(), out_dir / f.filename());
  }
  return out;
}

inline FlowSet cmd_flow(const fs::path& in_dir, const RunConfig& cfg, const fs::path& out_dir) {
  const FrameSequence video = load_frames(in_dir);
  FlowSet f;
  for (std::size_t t = 0; t + 1 < video.size(); ++t) {
    f.forward.push_back(estimate_flow(video[t], video[t + 1], cfg.flow));
    f.backward.push_back(estimate_flow(video[t + 1], video[t], cfg.flow));
  }
  save_flows(f, out_dir);
  return f;
}

struct EvalCommandOptions {
  std::optional<fs::path> reference_dir;
  std::optional<fs::path> flows;
  std::optional<fs::path> manifest;
};

inline MetricReport cmd_eval(const fs::path& out_dir, const EvalCommandOptions& opt, const fs::path& report_csv,
                             const RunConfig& cfg = {}) {
  const FrameSequence video = load_frames(out_dir);
  std::optional<FrameSequence> reference;
  if (opt.reference_dir) reference = load_frames(*opt.reference_dir);
  std::optional<FlowSet> flows;
  if (opt.flows) flows = load_flows(*opt.flows);
  std::optional<std::vector<bool>> blurred;
  if (opt.manifest) {
    blurred.emplace();
    for (const ManifestRow& r : read_manifest(*opt.manifest)) blurred->push_back(!r.kept);
  }

  EvalInputs in;
  if (reference) in.reference = &*reference;
  if (flows) {
    in.forward = &flows->forward;
    if (!flows->backward.empty()) in.backward = &flows->backward;
  }
  if (blurred) in.blurred = &*blurred;
  FeatureExtractorConfig xcfg = cfg.extractor;
  const FeatureExtractor<float> fx(xcfg);
  MetricReport r = evaluate_video(video, in, fx, cfg.flow, cfg.consistency_px);
  r.provenance["output"] = out_dir.string();
  r.provenance["reference"] = opt.reference_dir ? opt.reference_dir->string() : "none";
  r.provenance["flows"] = opt.flows ? opt.flows->string() : "estimated";
  if (opt.manifest) r.provenance["manifest"] = opt.manifest->string();

  std::ofstream os(report_csv);
  require(static_cast<bool>(os), ErrorKind::io, "cannot write " + report_csv.string());
  write_report_csv(os, r);
  return r;
}

// Writes a procedural sharp pan video.
inline FrameSequence cmd_scene(const fs::path& out_dir, int frames, int height, int width, int dy, int dx,
                               std::uint64_t seed) {
  const FrameSequence video = pan_sequence(frames, height, width, dy, dx, seed);
  DirectoryLock lock(out_dir);
  save_frames(video, out_dir);
  return video;
}

}  // namespace fitdeblur
