// fitdeblur: per-video deblurring from a video's own sharp frames.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 io, 4 numeric.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fitdeblur/commands.hpp"

namespace fs = std::filesystem;
using namespace fitdeblur;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::parameter:
    case ErrorKind::empty_bank: return 2;
    case ErrorKind::numeric: return 4;
    default: return 3;
  }
}

struct ConfigArgs {
  std::optional<std::string> path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "INI configuration file");
    cmd->add_option("--override", overrides, "section.key=value, applied after the file")->allow_extra_args(false);
  }

  RunConfig load() const {
    RunConfig cfg = path ? load_config(*path) : RunConfig{};
    for (const std::string& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit a deblurring network to one video's own sharp frames"};
  app.require_subcommand(1);

  std::string in_dir, out_dir, out_file, checkpoint;
  std::optional<std::string> manifest, reference, flows, resume, log_csv;
  std::vector<std::string> in_dirs;
  int window = 20;
  bool quiet = false;

  auto* score = app.add_subcommand("score", "sharpness report of a frame directory");
  score->add_option("in_dir", in_dir)->required();
  score->add_option("out_csv", out_file)->required();
  score->add_option("-w,--window", window, "selection window")->check(CLI::PositiveNumber);

  ConfigArgs kc;
  auto* kernels = app.add_subcommand("kernels", "build and save the kernel bank");
  kc.attach(kernels);
  kernels->add_option("out_file", out_file)->required();

  ConfigArgs sc;
  auto* synth = app.add_subcommand("synth", "blur all but the selected sharp frames");
  sc.attach(synth);
  synth->add_option("in_dir", in_dir)->required();
  synth->add_option("out_dir", out_dir)->required();
  synth->add_option("manifest", manifest)->required();

  ConfigArgs fc;
  auto* fitc = app.add_subcommand("fit", "fit a generator to one video");
  fc.attach(fitc);
  fitc->add_option("in_dir", in_dir)->required();
  fitc->add_option("out_checkpoint", out_file)->required();
  fitc->add_option("--resume", resume, "continue from a checkpoint (a meta checkpoint fine-tunes it)");
  fitc->add_option("--log", log_csv, "per-iteration loss CSV");
  fitc->add_flag("-q,--quiet", quiet);

  ConfigArgs mc;
  auto* meta = app.add_subcommand("meta", "meta-learn an initialization over several videos");
  mc.attach(meta);
  meta->add_option("out_checkpoint", out_file)->required();
  meta->add_option("in_dirs", in_dirs)->required();
  meta->add_flag("-q,--quiet", quiet);

  ConfigArgs dc;
  auto* deblur = app.add_subcommand("deblur", "apply a fitted generator to every frame");
  dc.attach(deblur);
  deblur->add_option("in_dir", in_dir)->required();
  deblur->add_option("checkpoint", checkpoint)->required();
  deblur->add_option("out_dir", out_dir)->required();

  ConfigArgs ec;
  auto* eval = app.add_subcommand("eval", "PSNR, SSIM, perceptual distance and warping error");
  ec.attach(eval);
  eval->add_option("out_dir", out_dir)->required();
  eval->add_option("report_csv", out_file)->required();
  eval->add_option("--reference", reference, "sharp reference frames");
  eval->add_option("--flows", flows, "flow directory from the flow command (estimated when absent)");
  eval->add_option("--manifest", manifest, "synthesis manifest for blurred/kept labels");

  ConfigArgs flc;
  auto* flow = app.add_subcommand("flow", "estimate forward and backward flows");
  flc.attach(flow);
  flow->add_option("in_dir", in_dir)->required();
  flow->add_option("out_dir", out_dir)->required();

  int frames = 40, height = 192, width = 256, dy = 0, dx = 2;
  std::uint64_t seed = 0;
  auto* scene = app.add_subcommand("scene", "write a procedural sharp pan video");
  scene->add_option("out_dir", out_dir)->required();
  scene->add_option("--frames", frames)->check(CLI::NonNegativeNumber);
  scene->add_option("--height", height)->check(CLI::PositiveNumber);
  scene->add_option("--width", width)->check(CLI::PositiveNumber);
  scene->add_option("--dy", dy);
  scene->add_option("--dx", dx);
  scene->add_option("--seed", seed);

  ConfigArgs pc;
  auto* dump = app.add_subcommand("config", "print the effective configuration");
  pc.attach(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*score) {
      const auto rows = cmd_score(in_dir, out_file, window);
      std::cout << rows.size() << " frames scored\n";
    } else if (*kernels) {
      cmd_kernels(kc.load(), out_file, &std::cout);
    } else if (*synth) {
      const auto rows = cmd_synth(in_dir, sc.load(), out_dir, *manifest);
      int kept = 0;
      for (const auto& r : rows) kept += r.kept;
      std::cout << rows.size() << " frames, " << kept << " kept sharp\n";
    } else if (*fitc) {
      FitCommandOptions opt;
      if (resume) opt.resume = *resume;
      if (log_csv) opt.log_csv = *log_csv;
      if (!quiet) opt.progress = &std::cerr;
      const FitResult r = cmd_fit(in_dir, fc.load(), out_file, opt);
      if (!r.log.records.empty()) std::cout << "final loss " << r.log.records.back().loss << '\n';
    } else if (*meta) {
      std::vector<fs::path> dirs(in_dirs.begin(), in_dirs.end());
      cmd_meta(dirs, mc.load(), out_file, quiet ? nullptr : &std::cerr);
    } else if (*deblur) {
      const RunConfig cfg = dc.load();
      const auto out = cmd_deblur(in_dir, checkpoint, out_dir, cfg.inference);
      std::cout << out.size() << " frames written\n";
    } else if (*eval) {
      EvalCommandOptions opt;
      if (reference) opt.reference_dir = *reference;
      if (flows) opt.flows = *flows;
      if (manifest) opt.manifest = *manifest;
      const MetricReport r = cmd_eval(out_dir, opt, out_file, ec.load());
      std::cout << "warping error " << r.warp_error;
      if (!r.frames.empty()) std::cout << ", mean psnr " << mean_of(r.psnrs()) << ", mean ssim " << mean_of(r.ssims());
      std::cout << '\n';
    } else if (*flow) {
      const FlowSet f = cmd_flow(in_dir, flc.load(), out_dir);
      std::cout << f.forward.size() << " frame pairs\n";
    } else if (*scene) {
      cmd_scene(out_dir, frames, height, width, dy, dx, seed);
    } else if (*dump) {
      std::cout << dump_config(pc.load());
    }
  } catch (const Error& e) {
    std::cerr << "fitdeblur: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "fitdeblur: i/o error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
