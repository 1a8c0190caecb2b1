// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/accounting.hpp"

#include <array>
#include <set>

#include "arcl/errors.hpp"

namespace arcl::accounting {
namespace {

constexpr std::array kMethods = {Method::adapter, Method::vpt_shallow, Method::vpt_deep,
                                 Method::lora,    Method::ssf,         Method::arc,
                                 Method::arc_att};

Count knob(const std::optional<Count>& v, const char* name, Method m) {
  if (!v) {
    throw ConfigError("method " + std::string(to_string(m)) + " needs --" + name);
  }
  if (*v <= 0) throw ConfigError(std::string(name) + " must be positive");
  return *v;
}

void unused(const std::optional<Count>& v, const char* name, Method m) {
  if (v) {
    throw ConfigError("method " + std::string(to_string(m)) + " does not take --" + name);
  }
}

void check_shape(Count dim, Count layers) {
  if (dim <= 0 || layers <= 0) throw ConfigError("D and L must be positive");
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::adapter: return "adapter";
    case Method::vpt_shallow: return "vpt_shallow";
    case Method::vpt_deep: return "vpt_deep";
    case Method::lora: return "lora";
    case Method::ssf: return "ssf";
    case Method::arc: return "arc";
    case Method::arc_att: return "arc_att";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string accepted;
  for (Method m : kMethods) {
    if (to_string(m) == name) return m;
    accepted += (accepted.empty() ? "" : ", ") + std::string(to_string(m));
  }
  throw ConfigError("unknown method '" + std::string(name) + "' (expected one of: " +
                    accepted + ")");
}

void MethodSpec::validate() const {
  auto require = [this](const std::optional<Count>& v, const char* name, bool used) {
    if (used) {
      knob(v, name, method);
    } else {
      unused(v, name, method);
    }
  };
  require(bottleneck, "Dprime",
          method == Method::adapter || method == Method::arc || method == Method::arc_att ||
              method == Method::lora);
  require(prompts, "m", method == Method::vpt_shallow || method == Method::vpt_deep);
  require(attn_matrices, "w", method == Method::lora);
  require(operations, "o", method == Method::ssf);
}

Count count_finetune(const MethodSpec& spec, Count dim, Count layers) {
  check_shape(dim, layers);
  spec.validate();
  const Count d = dim;
  const Count l = layers;
  switch (spec.method) {
    case Method::adapter: return 2 * d * *spec.bottleneck * l;
    case Method::vpt_shallow: return *spec.prompts * d;
    case Method::vpt_deep: return *spec.prompts * d * l;
    case Method::lora: return 2 * *spec.attn_matrices * d * *spec.bottleneck * l;
    case Method::ssf: return 2 * *spec.operations * d * l;
    case Method::arc: return 2 * (d * *spec.bottleneck + (*spec.bottleneck + d) * l);
    case Method::arc_att: return d * *spec.bottleneck + (*spec.bottleneck + d) * l;
  }
  return 0;
}

Count count_inference(const MethodSpec& spec, Count dim, Count layers) {
  switch (spec.method) {
    case Method::adapter:
    case Method::vpt_shallow:
    case Method::vpt_deep:
      return count_finetune(spec, dim, layers);
    case Method::lora:
    case Method::ssf:
    case Method::arc:
    case Method::arc_att:
      check_shape(dim, layers);
      spec.validate();
      return 0;
  }
  return 0;
}

Count head_count(Count dim, Count classes) { return dim * classes + classes; }

Count count_arc_config(const ArcConfig& config, const BackboneConfig& backbone) {
  config.validate(backbone);
  const Count d = backbone.embed_dim;
  const Count r = config.bottleneck;
  const Count inserted = static_cast<Count>(config.resolved_layers(backbone).size());
  const Count sites = static_cast<Count>(config.positions.size());
  if (config.variant == Variant::full_rank) return d * d * inserted * sites;

  std::set<Group> groups;
  for (Site s : config.positions) groups.insert(group_of(s, config.sharing));
  const Count per_group = d * r * (has_independent_up(config.sharing) ? 2 : 1);
  const Count copies = shares_across_layers(config.sharing) ? 1 : inserted;
  const Count projections = static_cast<Count>(groups.size()) * per_group * copies;
  const Count per_site = (r + d) * inserted * sites;
  return projections + per_site;
}

std::vector<BackboneShape> standard_backbones() {
  return {{"ViT-B", 768, 12}, {"ViT-L", 1024, 24}, {"ViT-H", 1280, 32}};
}

std::vector<ScalingRow> scaling_table(const MethodSpec& spec,
                                      const std::vector<BackboneShape>& shapes) {
  std::vector<ScalingRow> rows;
  for (const auto& s : shapes) {
    rows.push_back({s.name, s.dim, s.layers, count_finetune(spec, s.dim, s.layers),
                    count_inference(spec, s.dim, s.layers)});
  }
  return rows;
}

std::vector<ScalingRow> scaling_table(const MethodSpec& spec, Count dim, Count first,
                                      Count last) {
  if (first < 1 || last < first) throw ConfigError("layer range must satisfy 1 <= first <= last");
  std::vector<ScalingRow> rows;
  for (Count l = first; l <= last; ++l) {
    rows.push_back({"L=" + std::to_string(l), dim, l, count_finetune(spec, dim, l),
                    count_inference(spec, dim, l)});
  }
  return rows;
}

}  // namespace arcl::accounting
