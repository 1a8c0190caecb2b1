// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "arcl/errors.hpp"
#include "arcl/rng.hpp"

namespace arcl::cli {
namespace {

using nlohmann::json;

using Setter = std::function<void(const json&, const std::string&)>;

[[noreturn]] void type_error(const std::string& key, const char* want) {
  throw ConfigError("config key '" + key + "' must be " + want);
}

Setter int_field(int& dst) {
  return [&dst](const json& v, const std::string& key) {
    if (!v.is_number_integer()) type_error(key, "an integer");
    const auto x = v.get<long long>();
    if (x < -(1LL << 31) || x >= (1LL << 31)) type_error(key, "a 32-bit integer");
    dst = static_cast<int>(x);
  };
}

Setter real_field(double& dst) {
  return [&dst](const json& v, const std::string& key) {
    if (!v.is_number()) type_error(key, "a number");
    dst = v.get<double>();
  };
}

Setter u64_field(std::uint64_t& dst) {
  return [&dst](const json& v, const std::string& key) {
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    dst = v.get<std::uint64_t>();
  };
}

Setter string_field(std::string& dst) {
  return [&dst](const json& v, const std::string& key) {
    if (!v.is_string()) type_error(key, "a string");
    dst = v.get<std::string>();
  };
}

template <class E>
Setter enum_field(E& dst, E (*parse)(std::string_view)) {
  return [&dst, parse](const json& v, const std::string& key) {
    if (!v.is_string()) type_error(key, "a string");
    try {
      dst = parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  };
}

void apply_section(const json& section, const std::string& prefix,
                   const std::map<std::string, Setter>& fields) {
  if (!section.is_object()) type_error(prefix, "an object");
  for (const auto& [key, value] : section.items()) {
    const std::string dotted = prefix + "." + key;
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + dotted + "'");
    it->second(value, dotted);
  }
}

json positions_json(const std::vector<Site>& sites) {
  json out = json::array();
  for (Site s : sites) out.push_back(std::string(to_string(s)));
  return out;
}

json to_json_value(const RunConfig& c) {
  const auto& b = c.backbone;
  const auto& a = c.arc;
  const auto& t = c.train;
  const auto& k = c.task;
  return json{
      {"backbone",
       {{"image_size", b.image_size},
        {"patch_size", b.patch_size},
        {"channels", b.channels},
        {"embed_dim", b.embed_dim},
        {"layers", b.layers},
        {"heads", b.heads},
        {"mlp_ratio", b.mlp_ratio},
        {"classes", b.classes},
        {"ln_eps", b.ln_eps}}},
      {"arc",
       {{"bottleneck", a.bottleneck},
        {"positions", positions_json(a.positions)},
        {"sharing", std::string(to_string(a.sharing))},
        {"insertion_layers", a.insertion_layers},
        {"form", std::string(to_string(a.form))},
        {"dropout_rate", a.dropout_rate},
        {"variant", std::string(to_string(a.variant))}}},
      {"train",
       {{"lr", t.lr},
        {"weight_decay", t.weight_decay},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"warmup_epochs", t.warmup_epochs},
        {"schedule", std::string(to_string(t.schedule))},
        {"optimizer", "adamw"}}},
      {"task",
       {{"noise", k.noise},
        {"contrast", k.contrast},
        {"background", k.background},
        {"train_samples", k.train_samples},
        {"eval_samples", k.eval_samples}}},
      {"io", {{"out_dir", c.out_dir}, {"seed", c.seed}}},
  };
}

}  // namespace

BackboneConfig RunConfig::desk_backbone() {
  BackboneConfig b;
  b.image_size = 16;
  b.patch_size = 4;
  b.channels = 3;
  b.embed_dim = 64;
  b.layers = 4;
  b.heads = 4;
  b.mlp_ratio = 4;
  b.classes = 4;
  return b;
}

void RunConfig::validate() const {
  backbone.validate();
  arc.validate(backbone);
  train.validate();
  task.validate();
  if (task.classes != backbone.classes) {
    throw ConfigError("task classes must equal backbone.classes");
  }
  if (out_dir.empty()) throw ConfigError("io.out_dir must not be empty");
}

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  std::string optimizer = "adamw";
  std::vector<Site> positions = c.arc.positions;
  std::vector<int> layers;

  const std::map<std::string, std::function<void(const json&)>> sections = {
      {"backbone",
       [&](const json& s) {
         auto& b = c.backbone;
         apply_section(s, "backbone",
                       {{"image_size", int_field(b.image_size)},
                        {"patch_size", int_field(b.patch_size)},
                        {"channels", int_field(b.channels)},
                        {"embed_dim", int_field(b.embed_dim)},
                        {"layers", int_field(b.layers)},
                        {"heads", int_field(b.heads)},
                        {"mlp_ratio", int_field(b.mlp_ratio)},
                        {"classes", int_field(b.classes)},
                        {"ln_eps", real_field(b.ln_eps)}});
       }},
      {"arc",
       [&](const json& s) {
         auto& a = c.arc;
         auto list_of_sites = [&](const json& v, const std::string& key) {
           if (!v.is_array()) type_error(key, "an array of position names");
           positions.clear();
           Site site{};
           for (const auto& e : v) {
             enum_field(site, parse_site)(e, key);
             positions.push_back(site);
           }
         };
         auto list_of_layers = [&](const json& v, const std::string& key) {
           if (!v.is_array()) type_error(key, "an array of layer numbers");
           layers.clear();
           for (const auto& e : v) {
             int l = 0;
             int_field(l)(e, key);
             layers.push_back(l);
           }
         };
         apply_section(s, "arc",
                       {{"bottleneck", int_field(a.bottleneck)},
                        {"positions", list_of_sites},
                        {"sharing", enum_field(a.sharing, parse_sharing)},
                        {"insertion_layers", list_of_layers},
                        {"form", enum_field(a.form, parse_form)},
                        {"dropout_rate", real_field(a.dropout_rate)},
                        {"variant", enum_field(a.variant, parse_variant)}});
       }},
      {"train",
       [&](const json& s) {
         auto& t = c.train;
         apply_section(s, "train",
                       {{"lr", real_field(t.lr)},
                        {"weight_decay", real_field(t.weight_decay)},
                        {"batch_size", int_field(t.batch_size)},
                        {"epochs", int_field(t.epochs)},
                        {"warmup_epochs", int_field(t.warmup_epochs)},
                        {"schedule", enum_field(t.schedule, parse_schedule)},
                        {"optimizer", string_field(optimizer)}});
       }},
      {"task",
       [&](const json& s) {
         auto& k = c.task;
         apply_section(s, "task",
                       {{"noise", real_field(k.noise)},
                        {"contrast", real_field(k.contrast)},
                        {"background", real_field(k.background)},
                        {"train_samples", int_field(k.train_samples)},
                        {"eval_samples", int_field(k.eval_samples)}});
       }},
      {"io",
       [&](const json& s) {
         apply_section(s, "io", {{"out_dir", string_field(c.out_dir)}, {"seed", u64_field(c.seed)}});
       }},
  };
  for (const auto& [name, section] : doc.items()) {
    auto it = sections.find(name);
    if (it == sections.end()) throw ConfigError("unknown config key '" + name + "'");
    it->second(section);
  }
  if (optimizer != "adamw") {
    throw ConfigError("config key 'train.optimizer': only 'adamw' is supported");
  }
  c.arc.positions = positions;
  c.arc.insertion_layers = layers;
  c.task.classes = c.backbone.classes;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string to_json(const RunConfig& config, int indent) {
  return to_json_value(config).dump(indent);
}

Digest config_digest(const RunConfig& config) {
  // where the outputs land does not change the run
  RunConfig run = config;
  run.out_dir.clear();
  return sha256(to_json(run, -1));
}

RunSeeds derive_seeds(std::uint64_t seed) {
  const Rng root(seed);
  auto draw = [&root](std::uint64_t stream) { return root.fork(stream).next_u64(); };
  return {draw(1), draw(2), draw(3), draw(4), draw(5)};
}

}  // namespace arcl::cli
