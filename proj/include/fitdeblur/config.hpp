#pragma once

// Run configuration: an INI file whose sections mirror the modules.
//
//   [frame_selection]  window
//   [blur_synthesis]   family, n21, n31, n41, gamma, seed
//   [patch_pipeline]   patch_size, batch_size, normalizer, linearize, reweight
//   [nnet]             levels, base_channels, identity_init, extractor_mode,
//                      extractor_weights, extractor_seed, extractor_gain, lambdas
//   [training]         iterations, lr_generator, lr_discriminator, adversarial,
//                      adversarial_weight, gp_lambda, checkpoint_every, seed
//   [meta_init]        alpha, beta, meta_iterations, tasks_per_batch, order, seed
//   [inference]        tiled, tile, overlap
//   [metrics]          flow_levels, flow_block, flow_radius, consistency_px
//
// Unknown sections or keys are rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "fitdeblur/blur.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/flow.hpp"
#include "fitdeblur/inference.hpp"
#include "fitdeblur/meta.hpp"
#include "fitdeblur/nn.hpp"
#include "fitdeblur/patches.hpp"
#include "fitdeblur/training.hpp"

namespace fitdeblur {

struct RunConfig {
  int window = 20;
  KernelFamily family = KernelFamily::symmetric_linear;
  std::array<int, 3> counts{4000, 2000, 4000};
  std::uint64_t bank_seed = 0;
  PipelineConfig pipeline;
  GeneratorConfig generator;
  FeatureExtractorConfig extractor;
  FitConfig fit;
  MetaConfig meta;
  InferenceOptions inference;
  FlowConfig flow;
  double consistency_px = 1.0;

  void validate() const {
    require(window >= 1, ErrorKind::config, "frame_selection.window must be >= 1");
    for (int c : counts) require(c >= 0, ErrorKind::config, "kernel counts must be >= 0");
    require(counts[0] + counts[1] + counts[2] > 0, ErrorKind::config, "kernel counts must not all be zero");
    pipeline.validate();
    generator.validate();
    extractor.validate();
    fit.validate();
    meta.validate();
    inference.validate();
    require(flow.levels >= 1 && flow.block >= 1 && flow.radius >= 0, ErrorKind::config, "bad flow settings");
    require(consistency_px > 0.0, ErrorKind::config, "metrics.consistency_px must be > 0");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  std::istringstream is(s);
  T v{};
  is >> v;
  require(!is.fail() && (is >> std::ws).eof(), ErrorKind::config, key + ": cannot parse '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  fail(ErrorKind::config, key + ": expected a boolean, got '" + s + "'");
}

struct Field {
  std::string key;  // section.name
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto integer = [&](std::string key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
                   [member, key](RunConfig& c, const std::string& s) {
                     member(c) = parse_number<std::remove_reference_t<decltype(member(c))>>(key, s);
                   }});
    };
    auto real = [&](std::string key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return fmt_double(member(const_cast<RunConfig&>(c))); },
                   [member, key](RunConfig& c, const std::string& s) { member(c) = parse_number<double>(key, s); }});
    };
    auto boolean = [&](std::string key, auto member) {
      f.push_back({key, [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                   [member, key](RunConfig& c, const std::string& s) { member(c) = parse_bool(key, s); }});
    };

    integer("frame_selection.window", [](RunConfig& c) -> int& { return c.window; });
    f.push_back({"blur_synthesis.family", [](const RunConfig& c) { return std::string(to_string(c.family)); },
                 [](RunConfig& c, const std::string& s) {
                   try {
                     c.family = parse_kernel_family(s);
                   } catch (const Error& e) {
                     fail(ErrorKind::config, e.what());
                   }
                 }});
    integer("blur_synthesis.n21", [](RunConfig& c) -> int& { return c.counts[0]; });
    integer("blur_synthesis.n31", [](RunConfig& c) -> int& { return c.counts[1]; });
    integer("blur_synthesis.n41", [](RunConfig& c) -> int& { return c.counts[2]; });
    real("blur_synthesis.gamma", [](RunConfig& c) -> double& { return c.pipeline.gamma; });
    integer("blur_synthesis.seed", [](RunConfig& c) -> std::uint64_t& { return c.bank_seed; });

    integer("patch_pipeline.patch_size", [](RunConfig& c) -> int& { return c.pipeline.patch_size; });
    integer("patch_pipeline.batch_size", [](RunConfig& c) -> int& { return c.pipeline.batch_size; });
    real("patch_pipeline.normalizer", [](RunConfig& c) -> double& { return c.pipeline.normalizer; });
    boolean("patch_pipeline.linearize", [](RunConfig& c) -> bool& { return c.pipeline.linearize; });
    boolean("patch_pipeline.reweight", [](RunConfig& c) -> bool& { return c.pipeline.reweight; });

    integer("nnet.levels", [](RunConfig& c) -> int& { return c.generator.levels; });
    integer("nnet.base_channels", [](RunConfig& c) -> int& { return c.generator.base_channels; });
    boolean("nnet.identity_init", [](RunConfig& c) -> bool& { return c.generator.identity_init; });
    f.push_back({"nnet.extractor_mode",
                 [](const RunConfig& c) {
                   return std::string(c.extractor.mode == ExtractorMode::fixed_random ? "fixed-random" : "pretrained-file");
                 },
                 [](RunConfig& c, const std::string& s) {
                   if (s == "fixed-random")
                     c.extractor.mode = ExtractorMode::fixed_random;
                   else if (s == "pretrained-file")
                     c.extractor.mode = ExtractorMode::pretrained_file;
                   else
                     fail(ErrorKind::config, "nnet.extractor_mode: expected fixed-random or pretrained-file, got '" + s + "'");
                 }});
    f.push_back({"nnet.extractor_weights", [](const RunConfig& c) { return c.extractor.weights_file; },
                 [](RunConfig& c, const std::string& s) { c.extractor.weights_file = s; }});
    integer("nnet.extractor_seed", [](RunConfig& c) -> std::uint64_t& { return c.extractor.seed; });
    real("nnet.extractor_gain", [](RunConfig& c) -> double& { return c.extractor.gain; });
    f.push_back({"nnet.lambdas",
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < 5; ++i) out += (i ? "," : "") + fmt_double(c.extractor.lambdas[i]);
                   return out;
                 },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<std::string> parts;
                   std::stringstream ss(s);
                   for (std::string part; std::getline(ss, part, ',');) parts.push_back(part);
                   require(parts.size() == 5, ErrorKind::config, "nnet.lambdas needs exactly 5 comma-separated values");
                   for (std::size_t i = 0; i < 5; ++i) c.extractor.lambdas[i] = parse_number<double>("nnet.lambdas", parts[i]);
                 }});

    integer("training.iterations", [](RunConfig& c) -> int& { return c.fit.iterations; });
    real("training.lr_generator", [](RunConfig& c) -> double& { return c.fit.lr_generator; });
    real("training.lr_discriminator", [](RunConfig& c) -> double& { return c.fit.lr_discriminator; });
    boolean("training.adversarial", [](RunConfig& c) -> bool& { return c.fit.adversarial; });
    real("training.adversarial_weight", [](RunConfig& c) -> double& { return c.fit.adversarial_weight; });
    real("training.gp_lambda", [](RunConfig& c) -> double& { return c.fit.gp_lambda; });
    integer("training.checkpoint_every", [](RunConfig& c) -> int& { return c.fit.checkpoint_every; });
    integer("training.seed", [](RunConfig& c) -> std::uint64_t& { return c.fit.seed; });

    real("meta_init.alpha", [](RunConfig& c) -> double& { return c.meta.alpha; });
    real("meta_init.beta", [](RunConfig& c) -> double& { return c.meta.beta; });
    integer("meta_init.meta_iterations", [](RunConfig& c) -> int& { return c.meta.meta_iterations; });
    integer("meta_init.tasks_per_batch", [](RunConfig& c) -> int& { return c.meta.tasks_per_batch; });
    f.push_back({"meta_init.order", [](const RunConfig& c) { return std::string(to_string(c.meta.order)); },
                 [](RunConfig& c, const std::string& s) { c.meta.order = parse_maml_order(s); }});
    integer("meta_init.seed", [](RunConfig& c) -> std::uint64_t& { return c.meta.seed; });

    boolean("inference.tiled", [](RunConfig& c) -> bool& { return c.inference.tiled; });
    integer("inference.tile", [](RunConfig& c) -> int& { return c.inference.tile; });
    integer("inference.overlap", [](RunConfig& c) -> int& { return c.inference.overlap; });

    integer("metrics.flow_levels", [](RunConfig& c) -> int& { return c.flow.levels; });
    integer("metrics.flow_block", [](RunConfig& c) -> int& { return c.flow.block; });
    integer("metrics.flow_radius", [](RunConfig& c) -> int& { return c.flow.radius; });
    real("metrics.consistency_px", [](RunConfig& c) -> double& { return c.consistency_px; });
    return f;
  }();
  return table;
}

inline const Field& field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  fail(ErrorKind::config, "unknown configuration key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Applies one `section.key=value` assignment.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::config, "override must look like section.key=value: '" + assignment + "'");
  detail::field(detail::trim(assignment.substr(0, eq))).set(cfg, detail::trim(assignment.substr(eq + 1)));
}

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::config, std::string("malformed configuration: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, entries] : tree) {
    require(!entries.empty() || entries.data().empty(), ErrorKind::config, "key '" + section + "' outside any section");
    for (const auto& [key, value] : entries) detail::field(section + "." + key).set(cfg, detail::trim(value.data()));
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open configuration " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string dump_config(const RunConfig& cfg) {
  std::string out, section;
  for (const detail::Field& f : detail::fields()) {
    const std::string s = f.key.substr(0, f.key.find('.'));
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += f.key.substr(f.key.find('.') + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline KernelBank build_bank(const RunConfig& cfg) { return build_bank(cfg.counts, cfg.bank_seed, cfg.family); }

}  // namespace fitdeblur
