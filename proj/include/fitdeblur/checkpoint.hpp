#pragma once

// Generator (+ optional critic) weights and optimizer moments in one archive.

#include <filesystem>
#include <optional>
#include <string>

#include "fitdeblur/adam.hpp"
#include "fitdeblur/archive.hpp"
#include "fitdeblur/error.hpp"
#include "fitdeblur/nn.hpp"

namespace fitdeblur {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet generator;
  AdamState generator_opt;
  std::optional<ParameterSet> discriminator;
  std::optional<AdamState> discriminator_opt;
  bool meta = false;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_group(NamedTensorArchive& a, const std::string& prefix, const std::map<std::string, Tensor<float>>& ts) {
  for (const auto& [name, t] : ts) a.put(prefix + name, t);
}

inline std::map<std::string, Tensor<float>> take_group(const NamedTensorArchive& a, const std::string& prefix) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [name, t] : a.tensors)
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), t);
  return out;
}

inline nlohmann::json describe(const ParameterSet& p) {
  return {{"kind", p.kind}, {"levels", p.levels}, {"base_channels", p.base_channels}, {"step", p.step}};
}

inline nlohmann::json describe(const AdamState& s) {
  return {{"t", s.t}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}};
}

inline void restore(const nlohmann::json& j, ParameterSet& p) {
  p.kind = j.at("kind").get<std::string>();
  p.levels = j.at("levels").get<int>();
  p.base_channels = j.at("base_channels").get<int>();
  p.step = j.at("step").get<std::int64_t>();
}

inline void restore(const nlohmann::json& j, AdamState& s) {
  s.t = j.at("t").get<std::int64_t>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
}

inline void check_against(const ParameterSet& p, const std::vector<ConvSpec>& layers) {
  require(p.tensors.size() == 2 * layers.size(), ErrorKind::corrupt_file, "checkpoint tensor count does not match its architecture");
  for (const ConvSpec& l : layers) {
    auto w = p.tensors.find(l.name + ".weight");
    auto b = p.tensors.find(l.name + ".bias");
    require(w != p.tensors.end() && b != p.tensors.end(), ErrorKind::corrupt_file, "checkpoint lacks layer " + l.name);
    require(w->second.shape == Shape{l.out, l.in, l.k, l.k} && b->second.shape == Shape{l.out}, ErrorKind::corrupt_file,
            "checkpoint layer " + l.name + " has the wrong shape");
  }
}

inline void check_moments(const ParameterSet& p, const AdamState& s) {
  for (const auto& [name, t] : p.tensors) {
    auto m = s.m.find(name);
    auto v = s.v.find(name);
    require(m != s.m.end() && v != s.v.end() && m->second.shape == t.shape && v->second.shape == t.shape,
            ErrorKind::corrupt_file, "optimizer moments do not match parameter '" + name + "'");
  }
}

}  // namespace detail

inline NamedTensorArchive checkpoint_to_archive(const Checkpoint& c) {
  NamedTensorArchive a;
  a.metadata = {{"type", "checkpoint"},
                {"checkpoint_version", kCheckpointVersion},
                {"meta", c.meta},
                {"generator", detail::describe(c.generator)},
                {"generator_opt", detail::describe(c.generator_opt)}};
  detail::put_group(a, "gen/", c.generator.tensors);
  detail::put_group(a, "gen_adam_m/", c.generator_opt.m);
  detail::put_group(a, "gen_adam_v/", c.generator_opt.v);
  if (c.discriminator) {
    a.metadata["discriminator"] = detail::describe(*c.discriminator);
    detail::put_group(a, "disc/", c.discriminator->tensors);
    if (c.discriminator_opt) {
      a.metadata["discriminator_opt"] = detail::describe(*c.discriminator_opt);
      detail::put_group(a, "disc_adam_m/", c.discriminator_opt->m);
      detail::put_group(a, "disc_adam_v/", c.discriminator_opt->v);
    }
  }
  return a;
}

inline Checkpoint checkpoint_from_archive(const NamedTensorArchive& a) {
  const nlohmann::json& md = a.metadata;
  require(md.is_object() && md.value("type", "") == "checkpoint", ErrorKind::corrupt_file, "archive is not a checkpoint");
  require(md.value("checkpoint_version", -1) == kCheckpointVersion, ErrorKind::version_mismatch,
          "checkpoint version " + md.value("checkpoint_version", nlohmann::json()).dump() + ", expected " +
              std::to_string(kCheckpointVersion));
  Checkpoint c;
  try {
    c.meta = md.value("meta", false);
    detail::restore(md.at("generator"), c.generator);
    detail::restore(md.at("generator_opt"), c.generator_opt);
    c.generator.tensors = detail::take_group(a, "gen/");
    c.generator_opt.m = detail::take_group(a, "gen_adam_m/");
    c.generator_opt.v = detail::take_group(a, "gen_adam_v/");
    if (md.contains("discriminator")) {
      ParameterSet d;
      detail::restore(md.at("discriminator"), d);
      d.tensors = detail::take_group(a, "disc/");
      c.discriminator = std::move(d);
      if (md.contains("discriminator_opt")) {
        AdamState s;
        detail::restore(md.at("discriminator_opt"), s);
        s.m = detail::take_group(a, "disc_adam_m/");
        s.v = detail::take_group(a, "disc_adam_v/");
        c.discriminator_opt = std::move(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_file, std::string("malformed checkpoint metadata: ") + e.what());
  }
  require(c.generator.kind == "unet", ErrorKind::corrupt_file, "checkpoint generator has unknown kind");
  detail::check_against(c.generator, generator_layers(generator_config_of(c.generator)));
  detail::check_moments(c.generator, c.generator_opt);
  if (c.discriminator) {
    detail::check_against(*c.discriminator, discriminator_layers({c.discriminator->base_channels}));
    if (c.discriminator_opt) detail::check_moments(*c.discriminator, *c.discriminator_opt);
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  save_archive(checkpoint_to_archive(c), path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_archive(load_archive(path)); }

}  // namespace fitdeblur
