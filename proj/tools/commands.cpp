// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "arcl/accounting.hpp"
#include "arcl/analysis.hpp"
#include "arcl/autodiff.hpp"
#include "arcl/checkpoint.hpp"
#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"
#include "arcl/reparam.hpp"
#include "arcl/trainer.hpp"
#include "run_config.hpp"

namespace arcl::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigName = "effective_config.json";
constexpr const char* kCheckpointName = "checkpoint.arcl";

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

RunConfig config_for(const fs::path& checkpoint, const std::optional<fs::path>& explicit_path) {
  const fs::path path = explicit_path ? *explicit_path : checkpoint.parent_path() / kConfigName;
  if (!fs::exists(path)) {
    throw ConfigError("no config for '" + checkpoint.string() + "': pass --config or place " +
                      kConfigName + " next to it");
  }
  return load_run_config(path);
}

LoadedModel open_model(const fs::path& checkpoint, const RunConfig& cfg) {
  return restore(load_checkpoint(checkpoint), cfg.backbone, cfg.arc, config_digest(cfg));
}

std::string fixed(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(args.config);
    if (args.out_dir) cfg.out_dir = args.out_dir->string();
    cfg.validate();
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_text(dir / kConfigName, to_json(cfg) + "\n");

    const RunSeeds seeds = derive_seeds(cfg.seed);
    Rng backbone_rng(seeds.backbone);
    BackboneWeights weights = init_backbone(cfg.backbone, backbone_rng);
    Rng task_rng(seeds.task);
    const Dataset data = make_task(cfg.task, cfg.backbone, task_rng);
    Rng adapter_rng(seeds.adapters);
    AdapterBank bank = init_bank(cfg.arc, cfg.backbone, adapter_rng);
    TrainConfig tc = cfg.train;
    tc.seed = seeds.train;

    const TrainResult result = train(weights, &bank, data, tc);
    save_checkpoint(make_checkpoint(weights, &bank, config_digest(cfg)), dir / kCheckpointName);
    {
      std::ofstream csv(dir / "loss.csv", std::ios::trunc);
      write_loss_csv(result.curve, csv);
    }
    const double eval_acc = accuracy(weights, &bank, data.eval_images, data.eval_labels);
    out << "steps           " << result.curve.size() << '\n'
        << "first_loss      " << fixed(result.curve.front().loss, 6) << '\n'
        << "final_loss      " << fixed(result.curve.back().loss, 6) << '\n'
        << "train_accuracy  " << fixed(result.train_accuracy, 4) << '\n'
        << "eval_accuracy   " << fixed(eval_acc, 4) << '\n'
        << "trainable       " << bank.trainable_parameter_count() << '\n'
        << "frozen_checksum " << result.checksum_after << '\n'
        << "checkpoint      " << (dir / kCheckpointName).string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_fuse(const FuseArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    if (ckpt.fused) throw Error("'" + args.checkpoint.string() + "' is already fused");
    const RunConfig cfg = config_for(args.checkpoint, args.config);
    const LoadedModel model = restore(ckpt, cfg.backbone, cfg.arc, config_digest(cfg));
    FusedWeights fused = fuse(model.weights, *model.bank);
    fused.provenance.source_checkpoint = args.checkpoint.string();
    fused.provenance.config_digest = to_hex(ckpt.config_digest);
    Rng rng(derive_seeds(cfg.seed).probe);
    fused.provenance.max_verified_deviation = verify_fusion(model.weights, *model.bank, fused, 8, rng);

    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    save_checkpoint(make_fused_checkpoint(fused, ckpt.config_digest), args.out);
    const fs::path echo = args.out.parent_path() / kConfigName;
    if (!fs::exists(echo)) {
      write_text(echo, to_json(cfg) + "\n");
    } else if (config_digest(load_run_config(echo)) != ckpt.config_digest) {
      err << "warning: " << echo.string() << " describes a different run\n";
    }
    out << "source          " << fused.provenance.source_checkpoint << '\n'
        << "config_digest   " << fused.provenance.config_digest << '\n'
        << "max_deviation   " << sci(*fused.provenance.max_verified_deviation) << '\n'
        << "fused           " << args.out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.trials < 1) throw ConfigError("--trials must be at least 1");
    const Checkpoint source = load_checkpoint(args.checkpoint);
    const Checkpoint fused = load_checkpoint(args.fused);
    if (source.fused) throw Error("'" + args.checkpoint.string() + "' is fused; pass the adapted checkpoint");
    if (!fused.fused) throw Error("'" + args.fused.string() + "' carries no fused flag");
    if (source.config_digest != fused.config_digest) {
      throw Error("checkpoints come from different configs");
    }
    const RunConfig cfg = config_for(args.checkpoint, args.config);
    const Digest digest = config_digest(cfg);
    const LoadedModel adapted = restore(source, cfg.backbone, cfg.arc, digest);
    const LoadedModel plain = restore(fused, cfg.backbone, cfg.arc, digest);

    Rng rng(derive_seeds(cfg.seed).probe);
    double worst = 0.0;
    for (int t = 0; t < args.trials; ++t) {
      const Image img = random_image(cfg.backbone, rng);
      worst = std::max(worst, kernel::max_abs_diff(adapted.forward(img), plain.forward(img)));
    }
    const bool pass = worst <= kFusionTolerance;
    out << "trials          " << args.trials << '\n'
        << "max_deviation   " << sci(worst) << '\n'
        << "tolerance       " << sci(kFusionTolerance) << '\n'
        << "result          " << (pass ? "PASS" : "FAIL") << '\n';
    return static_cast<int>(pass ? kOk : kFailure);
  });
}

int cmd_count(const CountArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    accounting::MethodSpec spec;
    spec.method = accounting::parse_method(args.method);
    spec.bottleneck = args.bottleneck;
    spec.prompts = args.prompts;
    spec.attn_matrices = args.attn_matrices;
    spec.operations = args.operations;
    spec.validate();

    std::vector<accounting::ScalingRow> rows;
    if (!args.sweep) {
      if (args.dim < 1 || args.layers < 1) throw ConfigError("--D and --L must be positive");
      rows.push_back({std::string(accounting::to_string(spec.method)), args.dim, args.layers,
                      accounting::count_finetune(spec, args.dim, args.layers),
                      accounting::count_inference(spec, args.dim, args.layers)});
    } else if (*args.sweep == "layers") {
      if (args.dim < 1 || args.layers < 1) throw ConfigError("--D and --L must be positive");
      rows = accounting::scaling_table(spec, args.dim, 1, args.layers);
    } else if (*args.sweep == "backbones") {
      rows = accounting::scaling_table(spec, accounting::standard_backbones());
    } else {
      throw ConfigError("--sweep must be 'layers' or 'backbones'");
    }

    out << std::left << std::setw(10) << "method" << std::setw(10) << "label" << std::right
        << std::setw(7) << "D" << std::setw(5) << "L" << std::setw(14) << "finetune"
        << std::setw(14) << "inference" << '\n';
    for (const auto& r : rows) {
      out << std::left << std::setw(10) << accounting::to_string(spec.method) << std::setw(10)
          << r.label << std::right << std::setw(7) << r.dim << std::setw(5) << r.layers
          << std::setw(14) << r.finetune << std::setw(14) << r.inference << '\n';
    }
    if (args.csv) {
      std::ofstream csv(*args.csv, std::ios::trunc);
      if (!csv) throw Error("cannot write '" + args.csv->string() + "'");
      csv << "method,label,D,L,finetune,inference\n";
      for (const auto& r : rows) {
        csv << accounting::to_string(spec.method) << ',' << r.label << ',' << r.dim << ','
            << r.layers << ',' << r.finetune << ',' << r.inference << '\n';
      }
    }
    return static_cast<int>(kOk);
  });
}

int cmd_spectrum(const SpectrumArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.bins < 1) throw ConfigError("--bins must be at least 1");
    const RunConfig cfg = config_for(args.checkpoint, args.config);
    const LoadedModel model = open_model(args.checkpoint, cfg);
    if (!model.bank) throw Error("fused checkpoints carry no adaptation matrices to analyse");
    const analysis::RankSweep sweep = analysis::rank_sweep(*model.bank, args.bins, args.tau);

    fs::create_directories(args.out_dir);
    for (const auto& r : sweep.reports) {
      const std::string name = "spectrum_l" + std::to_string(r.layer) + "_" + r.group + "_" +
                               std::string(to_string(r.site)) + ".csv";
      std::ofstream csv(args.out_dir / name, std::ios::trunc);
      analysis::write_histogram_csv(r, csv);
    }
    {
      std::ofstream csv(args.out_dir / "summary.csv", std::ios::trunc);
      analysis::write_summary_csv(sweep, csv);
    }
    out << std::left << std::setw(7) << "layer" << std::setw(7) << "group" << std::setw(12)
        << "site" << std::right << std::setw(10) << "eff_rank" << std::setw(12) << "s_max"
        << std::setw(14) << "top10_energy" << '\n';
    for (const auto& r : sweep.reports) {
      const double s_max = r.singular_values.empty() ? 0.0 : r.singular_values.front();
      out << std::left << std::setw(7) << r.layer << std::setw(7) << r.group << std::setw(12)
          << to_string(r.site) << std::right << std::setw(10) << r.effective_rank_at(sweep.tau)
          << std::setw(12) << sci(s_max) << std::setw(14) << fixed(r.top_decile_energy(), 4)
          << '\n';
    }
    out << "median_effective_rank " << sweep.median_effective_rank << " (tau " << sweep.tau
        << ", D " << cfg.backbone.embed_dim << ")\n";
    return static_cast<int>(kOk);
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!(args.tol > 0.0) || !(args.step > 0.0)) throw ConfigError("--tol and --step must be positive");
    const RunConfig cfg = load_run_config(args.config);

    // Toy instantiation: the config's adapter layout on a D=16, L<=3 backbone.
    BackboneConfig toy;
    toy.layers = std::clamp(cfg.backbone.layers, 1, 3);
    ArcConfig arc = cfg.arc;
    arc.bottleneck = std::min(arc.bottleneck, 4);
    std::erase_if(arc.insertion_layers, [&](int l) { return l > toy.layers; });
    arc.validate(toy);

    const RunSeeds seeds = derive_seeds(cfg.seed);
    Rng rng(seeds.probe);
    BackboneWeights weights = init_backbone(toy, rng);
    AdapterBank bank = init_bank(arc, toy, rng);
    for (auto& [name, m] : bank.tensors()) {
      if (name.ends_with(".coef") || name.ends_with(".bias") || name.ends_with(".delta")) {
        for (double& x : m.data()) x = rng.normal(0.0, 0.3);
      }
    }
    const std::vector<Image> images = {random_image(toy, rng), random_image(toy, rng)};
    const std::vector<int> labels = {0, 1};

    std::map<std::string, Matrix*> params;
    for (auto& [name, m] : bank.tensors()) params.emplace(name, &m);
    params.emplace("head.w", &weights.head_w);
    params.emplace("head.b", &weights.head_b);
    auto build = [&](autodiff::Tape& tape) {
      for (const auto& [name, m] : params) tape.parameter(name, *m, true);
      const autodiff::Var logits = vit::forward_batch(tape, images, weights, &bank, Mode::eval);
      return tape.cross_entropy(logits, labels);
    };
    const autodiff::GradcheckReport report = autodiff::gradcheck(build, params, args.step, args.tol);

    out << std::left << std::setw(28) << "parameter" << std::right << std::setw(14)
        << "max_rel_error" << '\n';
    for (const auto& [name, e] : report.per_param) {
      out << std::left << std::setw(28) << name << std::right << std::setw(14) << sci(e) << '\n';
    }
    out << "entries " << report.entries_checked << ", worst " << sci(report.max_rel_error)
        << " at " << report.worst_param << "[" << report.worst_index << "], tol "
        << sci(report.tol) << ": " << (report.passed ? "PASS" : "FAIL") << '\n';
    return static_cast<int>(report.passed ? kOk : kFailure);
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ARC adapter toolkit: train, fuse, verify, count, spectrum, gradcheck"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Fine-tune ARC adapters on a synthetic task");
  train->add_option("--config", train_args.config, "Run config (JSON)")->required();
  train->add_option("--out", train_args.out_dir, "Output directory (overrides io.out_dir)");

  FuseArgs fuse_args;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fold adapters into the backbone weights");
  fuse_cmd->add_option("--checkpoint", fuse_args.checkpoint, "Adapted checkpoint")->required();
  fuse_cmd->add_option("--out", fuse_args.out, "Fused checkpoint path")->required();
  fuse_cmd->add_option("--config", fuse_args.config, "Run config (default: next to checkpoint)");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Compare adapted and fused logits");
  verify->add_option("--checkpoint", verify_args.checkpoint, "Adapted checkpoint")->required();
  verify->add_option("--fused", verify_args.fused, "Fused checkpoint")->required();
  verify->add_option("--trials", verify_args.trials, "Random images to compare");
  verify->add_option("--config", verify_args.config, "Run config (default: next to checkpoint)");

  CountArgs count_args;
  auto* count = app.add_subcommand("count", "Trainable-parameter counts per method");
  count->add_option("--method", count_args.method,
                    "adapter|vpt_shallow|vpt_deep|lora|ssf|arc|arc_att")->required();
  count->add_option("--D", count_args.dim, "Embedding width");
  count->add_option("--L", count_args.layers, "Encoder layers");
  count->add_option("--Dprime", count_args.bottleneck, "Bottleneck width");
  count->add_option("--m", count_args.prompts, "Prompt tokens (vpt)");
  count->add_option("--w", count_args.attn_matrices, "Adapted attention matrices (lora)");
  count->add_option("--o", count_args.operations, "Modulated operations (ssf)");
  count->add_option("--sweep", count_args.sweep, "layers|backbones");
  count->add_option("--csv", count_args.csv, "Also write the table as CSV");

  SpectrumArgs spectrum_args;
  auto* spectrum = app.add_subcommand("spectrum", "Singular-value spectra of adaptation matrices");
  spectrum->add_option("--checkpoint", spectrum_args.checkpoint, "Adapted checkpoint")->required();
  spectrum->add_option("--bins", spectrum_args.bins, "Histogram bins");
  spectrum->add_option("--out", spectrum_args.out_dir, "Output directory")->required();
  spectrum->add_option("--tau", spectrum_args.tau, "Relative threshold for effective rank");
  spectrum->add_option("--config", spectrum_args.config, "Run config (default: next to checkpoint)");

  GradcheckArgs gradcheck_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of ARC gradients");
  gradcheck->add_option("--config", gradcheck_args.config, "Run config (JSON)")->required();
  gradcheck->add_option("--tol", gradcheck_args.tol, "Max relative error");
  gradcheck->add_option("--step", gradcheck_args.step, "Finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  if (*train) return cmd_train(train_args, out, err);
  if (*fuse_cmd) return cmd_fuse(fuse_args, out, err);
  if (*verify) return cmd_verify(verify_args, out, err);
  if (*count) return cmd_count(count_args, out, err);
  if (*spectrum) return cmd_spectrum(spectrum_args, out, err);
  return cmd_gradcheck(gradcheck_args, out, err);
}

}  // namespace arcl::cli
