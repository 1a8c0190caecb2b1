// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcl/matrix.hpp"
#include "arcl/rng.hpp"
#include "arcl/vit.hpp"

namespace arcl {

/// Where an adapter sits inside an encoder layer.
///
/// before_mha rewrites the LN1 output ahead of Q/K/V, after_mha rewrites the
/// attention block output (after W_o, before the residual add), before_ffn
/// rewrites the LN2 output, after_ffn rewrites the FFN output before its
/// residual add.
enum class Site { before_mha, after_mha, before_ffn, after_ffn };

enum class Sharing {
  intra_inter,          // W_up = W_downᵀ, one W_down per group for all layers
  intra_inter_star,     // as above, MHA and FFN groups merged into one
  non_intra_inter,      // independent W_up, shared across layers
  non_intra_non_inter,  // independent W_down and W_up per layer
};

enum class Form { sequential, parallel };
enum class Variant { bottleneck, full_rank };
enum class Group { mha, ffn, shared };

std::string_view to_string(Site s);
std::string_view to_string(Sharing s);
std::string_view to_string(Form f);
std::string_view to_string(Variant v);
std::string_view to_string(Group g);
/// Inverse of to_string; throw ConfigError listing the accepted names.
Site parse_site(std::string_view name);
Sharing parse_sharing(std::string_view name);
Form parse_form(std::string_view name);
Variant parse_variant(std::string_view name);

bool is_before(Site s);
Group group_of(Site s, Sharing sharing);
bool shares_across_layers(Sharing s);
bool has_independent_up(Sharing s);

struct ArcConfig {
  int bottleneck = 50;
  std::vector<Site> positions = {Site::before_mha, Site::before_ffn};
  Sharing sharing = Sharing::intra_inter;
  /// 1-based layer numbers; empty means every layer.
  std::vector<int> insertion_layers;
  Form form = Form::sequential;
  double dropout_rate = 0.1;
  Variant variant = Variant::bottleneck;

  /// Sorted, de-duplicated layer numbers the adapters apply to.
  std::vector<int> resolved_layers(const BackboneConfig& backbone) const;
  /// Throws ConfigError on any invalid field or combination.
  void validate(const BackboneConfig& backbone) const;
};

struct Hook {
  int layer = 0;  // 1-based
  Site site = Site::before_mha;
  Group group = Group::mha;
  Form form = Form::sequential;
};

struct HookTable {
  std::vector<Hook> entries;  // ordered by (layer, site)

  const Hook* find(int layer, Site site) const;
  std::size_t size() const { return entries.size(); }
};

/// Maps every (layer, site) that carries an adapter. The parallel form is
/// only defined for before_* sites; combining it with after_* throws
/// ConfigError.
HookTable resolve_hooks(const ArcConfig& config, const BackboneConfig& backbone);

/// Trainable ARC parameters, stored as named tensors.
///
/// Tensor names:
///   arc.<group>.down[.<layer>]   D x D'   (per layer only when non-inter)
///   arc.<group>.up[.<layer>]     D' x D   (non-intra only)
///   arc.<layer>.<site>.coef      1 x D'   diagonal of C
///   arc.<layer>.<site>.bias      1 x D
///   arc.<layer>.<site>.delta     D x D    (full_rank variant only)
/// Under intra sharing no up tensor exists; the up-projection is the
/// transpose of the down tensor at every use.
class AdapterBank {
 public:
  /// All tensors present with correct shapes and zero values.
  AdapterBank(ArcConfig config, BackboneConfig backbone);

  const ArcConfig& config() const { return config_; }
  const BackboneConfig& backbone() const { return backbone_; }
  const HookTable& hooks() const { return hooks_; }
  const Hook* hook(int layer, Site site) const { return hooks_.find(layer, site); }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  std::string down_name(int layer, Site site) const;
  /// Empty under intra sharing.
  std::string up_name(int layer, Site site) const;
  static std::string coef_name(int layer, Site site);
  static std::string bias_name(int layer, Site site);
  static std::string delta_name(int layer, Site site);

  const Matrix& down(int layer, Site site) const;
  /// nullptr when the up-projection is the transposed down-projection.
  const Matrix* up(int layer, Site site) const;
  const Matrix& coef(int layer, Site site) const;
  const Matrix& bias(int layer, Site site) const;
  const Matrix& delta(int layer, Site site) const;

  /// The D x D linear part A of the adapter at (layer, site):
  /// W_down diag(c) W_up, or ΔW for the full-rank variant.
  Matrix adaptation_matrix(int layer, Site site) const;
  /// 1 x D bias added after the up-projection (zero for full rank).
  Matrix adaptation_bias(int layer, Site site) const;

  std::map<std::string, Matrix>& tensors() { return tensors_; }
  const std::map<std::string, Matrix>& tensors() const { return tensors_; }
  Matrix& tensor(const std::string& name);
  const Matrix& tensor(const std::string& name) const;

  /// Number of scalars held across all tensors.
  std::size_t trainable_parameter_count() const;

 private:
  const Hook& require_hook(int layer, Site site) const;

  ArcConfig config_;
  BackboneConfig backbone_;
  HookTable hooks_;
  Mode mode_ = Mode::eval;
  std::map<std::string, Matrix> tensors_;
};

/// Fresh bank: W_down ~ N(0, 1/D), independent W_up ~ N(0, 1/D'), every
/// coefficient, bias and ΔW zero. The resulting adapters are exact
/// identity maps.
AdapterBank init_bank(const ArcConfig& config, const BackboneConfig& backbone, Rng& rng);

/// Adapter at (layer, site) applied to x ((N+1) x D).
///
/// Sequential: x W_down diag(c) W_up + 1 bᵀ + x. Parallel: the same without
/// the identity term. Full rank: x ΔW + x. In train mode with a positive
/// dropout rate the D'-dimensional hidden features are dropped (inverted
/// scaling) before the up-projection; `rng` is then required. Throws
/// ContractError when (layer, site) carries no adapter.
Matrix arc_forward(const Matrix& x, const AdapterBank& bank, int layer, Site site,
                   Mode mode = Mode::eval, Rng* rng = nullptr);

/// The hidden features x W_down diag(c), after dropout in train mode.
Matrix arc_hidden(const Matrix& x, const AdapterBank& bank, int layer, Site site,
                  Mode mode = Mode::eval, Rng* rng = nullptr);

}  // namespace arcl
