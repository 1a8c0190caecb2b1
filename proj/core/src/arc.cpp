// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/arc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "arcl/detail/graph.hpp"
#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"

namespace arcl {
namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view name, const std::array<E, N>& values, const char* what) {
  std::string accepted;
  for (E v : values) {
    if (to_string(v) == name) return v;
    accepted += (accepted.empty() ? "" : ", ") + std::string(to_string(v));
  }
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(name) +
                    "' (expected one of: " + accepted + ")");
}

constexpr std::array kSites = {Site::before_mha, Site::after_mha, Site::before_ffn,
                               Site::after_ffn};
constexpr std::array kSharings = {Sharing::intra_inter, Sharing::intra_inter_star,
                                  Sharing::non_intra_inter, Sharing::non_intra_non_inter};

}  // namespace

std::string_view to_string(Site s) {
  switch (s) {
    case Site::before_mha: return "before_mha";
    case Site::after_mha: return "after_mha";
    case Site::before_ffn: return "before_ffn";
    case Site::after_ffn: return "after_ffn";
  }
  return "?";
}

std::string_view to_string(Sharing s) {
  switch (s) {
    case Sharing::intra_inter: return "intra_inter";
    case Sharing::intra_inter_star: return "intra_inter_star";
    case Sharing::non_intra_inter: return "non_intra_inter";
    case Sharing::non_intra_non_inter: return "non_intra_non_inter";
  }
  return "?";
}

std::string_view to_string(Form f) { return f == Form::sequential ? "sequential" : "parallel"; }

std::string_view to_string(Variant v) {
  return v == Variant::bottleneck ? "bottleneck" : "full_rank";
}

std::string_view to_string(Group g) {
  switch (g) {
    case Group::mha: return "mha";
    case Group::ffn: return "ffn";
    case Group::shared: return "shared";
  }
  return "?";
}

Site parse_site(std::string_view name) { return parse_enum(name, kSites, "position"); }
Sharing parse_sharing(std::string_view name) { return parse_enum(name, kSharings, "sharing"); }
Form parse_form(std::string_view name) {
  return parse_enum(name, std::array{Form::sequential, Form::parallel}, "form");
}
Variant parse_variant(std::string_view name) {
  return parse_enum(name, std::array{Variant::bottleneck, Variant::full_rank}, "variant");
}

bool is_before(Site s) { return s == Site::before_mha || s == Site::before_ffn; }

Group group_of(Site s, Sharing sharing) {
  if (sharing == Sharing::intra_inter_star) return Group::shared;
  return (s == Site::before_mha || s == Site::after_mha) ? Group::mha : Group::ffn;
}

bool shares_across_layers(Sharing s) { return s != Sharing::non_intra_non_inter; }

bool has_independent_up(Sharing s) {
  return s == Sharing::non_intra_inter || s == Sharing::non_intra_non_inter;
}

std::vector<int> ArcConfig::resolved_layers(const BackboneConfig& backbone) const {
  std::vector<int> out;
  if (insertion_layers.empty()) {
    for (int l = 1; l <= backbone.layers; ++l) out.push_back(l);
    return out;
  }
  out = insertion_layers;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void ArcConfig::validate(const BackboneConfig& backbone) const {
  backbone.validate();
  if (bottleneck <= 0) throw ConfigError("arc.bottleneck must be positive");
  if (variant == Variant::bottleneck && bottleneck > backbone.embed_dim) {
    throw ConfigError("arc.bottleneck (" + std::to_string(bottleneck) +
                      ") exceeds backbone.embed_dim (" + std::to_string(backbone.embed_dim) + ")");
  }
  if (positions.empty()) throw ConfigError("arc.positions must not be empty");
  if (std::set<Site>(positions.begin(), positions.end()).size() != positions.size()) {
    throw ConfigError("arc.positions contains duplicates");
  }
  for (int l : insertion_layers) {
    if (l < 1 || l > backbone.layers) {
      throw ConfigError("arc.insertion_layers entry " + std::to_string(l) + " outside 1.." +
                        std::to_string(backbone.layers));
    }
  }
  if (std::set<int>(insertion_layers.begin(), insertion_layers.end()).size() !=
      insertion_layers.size()) {
    throw ConfigError("arc.insertion_layers contains duplicates");
  }
  if (resolved_layers(backbone).empty()) throw ConfigError("arc.insertion_layers resolves to no layer");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("arc.dropout_rate must lie in [0, 1)");
  }
  if (form == Form::parallel) {
    for (Site s : positions) {
      if (!is_before(s)) {
        throw ConfigError("arc.form 'parallel' cannot be combined with position '" +
                          std::string(to_string(s)) + "'");
      }
    }
  }
}

const Hook* HookTable::find(int layer, Site site) const {
  for (const auto& h : entries) {
    if (h.layer == layer && h.site == site) return &h;
  }
  return nullptr;
}

HookTable resolve_hooks(const ArcConfig& config, const BackboneConfig& backbone) {
  config.validate(backbone);
  std::vector<Site> sites = config.positions;
  std::sort(sites.begin(), sites.end());
  HookTable table;
  for (int l : config.resolved_layers(backbone)) {
    for (Site s : sites) table.entries.push_back({l, s, group_of(s, config.sharing), config.form});
  }
  return table;
}

AdapterBank::AdapterBank(ArcConfig config, BackboneConfig backbone)
    : config_(std::move(config)), backbone_(backbone), hooks_(resolve_hooks(config_, backbone_)) {
  const auto d = static_cast<std::size_t>(backbone_.embed_dim);
  const auto r = static_cast<std::size_t>(config_.bottleneck);
  for (const auto& h : hooks_.entries) {
    if (config_.variant == Variant::full_rank) {
      tensors_.try_emplace(delta_name(h.layer, h.site), d, d);
      continue;
    }
    tensors_.try_emplace(down_name(h.layer, h.site), d, r);
    if (has_independent_up(config_.sharing)) tensors_.try_emplace(up_name(h.layer, h.site), r, d);
    tensors_.try_emplace(coef_name(h.layer, h.site), 1, r);
    tensors_.try_emplace(bias_name(h.layer, h.site), 1, d);
  }
}

std::string AdapterBank::down_name(int layer, Site site) const {
  std::string name = "arc." + std::string(to_string(group_of(site, config_.sharing))) + ".down";
  if (!shares_across_layers(config_.sharing)) name += "." + std::to_string(layer);
  return name;
}

std::string AdapterBank::up_name(int layer, Site site) const {
  if (!has_independent_up(config_.sharing)) return {};
  std::string name = "arc." + std::string(to_string(group_of(site, config_.sharing))) + ".up";
  if (!shares_across_layers(config_.sharing)) name += "." + std::to_string(layer);
  return name;
}

std::string AdapterBank::coef_name(int layer, Site site) {
  return "arc." + std::to_string(layer) + "." + std::string(to_string(site)) + ".coef";
}

std::string AdapterBank::bias_name(int layer, Site site) {
  return "arc." + std::to_string(layer) + "." + std::string(to_string(site)) + ".bias";
}

std::string AdapterBank::delta_name(int layer, Site site) {
  return "arc." + std::to_string(layer) + "." + std::string(to_string(site)) + ".delta";
}

const Hook& AdapterBank::require_hook(int layer, Site site) const {
  const Hook* h = hooks_.find(layer, site);
  if (h == nullptr) {
    throw ContractError("no adapter at layer " + std::to_string(layer) + ", site " +
                        std::string(to_string(site)));
  }
  return *h;
}

Matrix& AdapterBank::tensor(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("adapter bank has no tensor '" + name + "'");
  return it->second;
}

const Matrix& AdapterBank::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ContractError("adapter bank has no tensor '" + name + "'");
  return it->second;
}

const Matrix& AdapterBank::down(int layer, Site site) const {
  require_hook(layer, site);
  return tensor(down_name(layer, site));
}

const Matrix* AdapterBank::up(int layer, Site site) const {
  require_hook(layer, site);
  if (!has_independent_up(config_.sharing)) return nullptr;
  return &tensor(up_name(layer, site));
}

const Matrix& AdapterBank::coef(int layer, Site site) const {
  require_hook(layer, site);
  return tensor(coef_name(layer, site));
}

const Matrix& AdapterBank::bias(int layer, Site site) const {
  require_hook(layer, site);
  return tensor(bias_name(layer, site));
}

const Matrix& AdapterBank::delta(int layer, Site site) const {
  require_hook(layer, site);
  return tensor(delta_name(layer, site));
}

Matrix AdapterBank::adaptation_matrix(int layer, Site site) const {
  if (config_.variant == Variant::full_rank) return delta(layer, site);
  const Matrix& w_down = down(layer, site);
  const Matrix* w_up = up(layer, site);
  const Matrix scaled = kernel::scale_cols(w_down, coef(layer, site).data());
  return kernel::matmul(scaled, w_up != nullptr ? *w_up : kernel::transpose(w_down));
}

Matrix AdapterBank::adaptation_bias(int layer, Site site) const {
  if (config_.variant == Variant::full_rank) {
    require_hook(layer, site);
    return Matrix(1, static_cast<std::size_t>(backbone_.embed_dim));
  }
  return bias(layer, site);
}

std::size_t AdapterBank::trainable_parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, m] : tensors_) total += m.size();
  return total;
}

AdapterBank init_bank(const ArcConfig& config, const BackboneConfig& backbone, Rng& rng) {
  AdapterBank bank(config, backbone);
  if (config.variant == Variant::full_rank) return bank;
  const double down_std = 1.0 / std::sqrt(static_cast<double>(backbone.embed_dim));
  const double up_std = 1.0 / std::sqrt(static_cast<double>(config.bottleneck));
  for (auto& [name, m] : bank.tensors()) {
    if (name.ends_with(".down") || name.find(".down.") != std::string::npos) {
      for (auto& x : m.data()) x = rng.normal(0.0, down_std);
    } else if (name.ends_with(".up") || name.find(".up.") != std::string::npos) {
      for (auto& x : m.data()) x = rng.normal(0.0, up_std);
    }
  }
  return bank;
}

Matrix arc_forward(const Matrix& x, const AdapterBank& bank, int layer, Site site, Mode mode,
                   Rng* rng) {
  const Hook* h = bank.hook(layer, site);
  if (h == nullptr) {
    throw ContractError("arc_forward: layer " + std::to_string(layer) + " site " +
                        std::string(to_string(site)) + " carries no adapter");
  }
  if (x.cols() != static_cast<std::size_t>(bank.backbone().embed_dim)) {
    throw DimensionError("arc_forward: input " + x.shape_string() + " has wrong width");
  }
  detail::PlainOps ops;
  if (h->form == Form::parallel) return detail::arc_delta(ops, x, bank, layer, site, mode, rng);
  return detail::arc_sequential(ops, x, bank, layer, site, mode, rng);
}

Matrix arc_hidden(const Matrix& x, const AdapterBank& bank, int layer, Site site, Mode mode,
                  Rng* rng) {
  if (bank.config().variant == Variant::full_rank) {
    throw ContractError("arc_hidden: the full-rank variant has no bottleneck features");
  }
  detail::PlainOps ops;
  return detail::arc_hidden(ops, x, bank, layer, site, mode, rng);
}

}  // namespace arcl
