// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Reference values are computed here from
// scalar loops (tests/support/oracle.hpp) or from closed forms, never from
// the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "arcl/accounting.hpp"
#include "arcl/arc.hpp"
#include "arcl/autodiff.hpp"
#include "arcl/checkpoint.hpp"
#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"
#include "arcl/reparam.hpp"
#include "arcl/trainer.hpp"
#include "arcl/vit.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

namespace {

using namespace arcl;
namespace acc = arcl::accounting;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// 1. fused vs unfused logits
Verdict fusion_equivalence() {
  const BackboneConfig b = fixtures::toy_backbone();
  Rng rng(1001);
  const BackboneWeights w = init_backbone(b, rng);
  std::vector<Image> images;
  for (int i = 0; i < 32; ++i) images.push_back(random_image(b, rng));

  Verdict v;
  int checked = 0, rejected = 0;
  double worst = 0.0;
  for (Site site : fixtures::kAllSites)
    for (Form form : {Form::sequential, Form::parallel})
      for (Sharing sharing : fixtures::kAllSharings) {
        ArcConfig c;
        c.bottleneck = 4;
        c.positions = {site};
        c.form = form;
        c.sharing = sharing;
        if (form == Form::parallel && !is_before(site)) {
          // the parallel branch only exists for before_* sites
          try {
            c.validate(b);
            v.pass = false;
          } catch (const ConfigError&) {
            ++rejected;
          }
          continue;
        }
        AdapterBank bank = init_bank(c, b, rng);
        fixtures::randomize(bank, rng);
        const FusedWeights f = fuse(w, bank);
        const Matrix adapted = vit::forward_batch(images, w, &bank);
        const Matrix plain = vit::forward_batch(images, f.weights);
        double dev = kernel::max_abs_diff(adapted, plain);
        // the adapted path itself must agree with the scalar reference
        for (std::size_t i = 0; i < 4; ++i) {
          const double ref = oracle::max_abs_diff(oracle::forward(images[i], w, &bank),
                                                  kernel::slice_rows(adapted, i, 1));
          if (ref > 1e-9) v.pass = false;
        }
        worst = std::max(worst, dev);
        ++checked;
      }
  v.pass = v.pass && worst <= kFusionTolerance && checked == 24 && rejected == 8;
  v.detail = std::to_string(checked) + " combos x 32 images, max |dlogit| " + sci(worst) +
             " (tol 1e-10); " + std::to_string(rejected) +
             " parallel+after_* combos rejected as invalid config";
  return v;
}

// 2. closed-form counts and the bottleneck ablation totals
Verdict parameter_counts() {
  acc::MethodSpec arc;
  arc.method = acc::Method::arc;
  const std::vector<std::pair<long, long>> want = {
      {10, 34032}, {50, 96432}, {100, 174432}, {200, 330432}};
  // mean head over the 19 VTAB-1k tasks
  const std::vector<long> classes = {100, 102, 47, 102, 37, 10, 397, 2, 10, 45,
                                     5,   8,   6,  6,   4,  16, 16,  18, 9};
  double head = 0.0;
  for (long k : classes) head += static_cast<double>(768 * k + k);
  head /= static_cast<double>(classes.size());
  const std::map<long, double> reported = {{10, 0.07}, {50, 0.13}, {100, 0.21}, {200, 0.36}};

  Verdict v;
  std::ostringstream d;
  for (const auto& [r, n] : want) {
    arc.bottleneck = r;
    // two groups: D*D' projection + L*(D'+D) coefficients and biases each
    const long by_hand = 2 * (768 * r + 12 * (r + 768));
    const long got = acc::count_finetune(arc, 768, 12);
    const double total = (static_cast<double>(got) + head) / 1e6;
    const double cut = std::floor(total * 100.0) / 100.0;
    const bool ok = got == n && by_hand == n && cut == reported.at(r) &&
                    std::abs(total - reported.at(r)) < 0.01;
    v.pass = v.pass && ok;
    d << "D'=" << r << ":" << got << "(+head " << std::fixed;
    d.precision(4);
    d << total << "M) ";
  }
  arc.bottleneck = 50;
  const long large = acc::count_finetune(arc, 1024, 24);
  v.pass = v.pass && large == 153952 && std::abs(head / 1e6 - 0.04) < 0.005;
  d << "ViT-L:" << large;
  v.detail = d.str();
  return v;
}

// 3. bank census vs formula over the grid
Verdict census() {
  Verdict v;
  std::size_t n = 0;
  for (const BackboneConfig& b : {fixtures::toy_backbone(), [] {
         BackboneConfig big;
         big.embed_dim = 64;
         big.heads = 4;
         big.layers = 5;
         return big;
       }()}) {
    for (const ArcConfig& c : fixtures::config_grid(b)) {
      const AdapterBank bank(c, b);
      if (static_cast<acc::Count>(bank.trainable_parameter_count()) != acc::count_arc_config(c, b)) {
        v.pass = false;
      }
      ++n;
    }
  }
  v.detail = std::to_string(n) + " configs, census == formula";
  if (!v.pass) v.detail = "census/formula mismatch within " + std::to_string(n) + " configs";
  return v;
}

// 4. finite differences over every adapter tensor
Verdict gradients() {
  const BackboneConfig b = fixtures::toy_backbone();
  Verdict v;
  double worst = 0.0;
  std::size_t entries = 0;
  std::string where;
  auto check = [&](ArcConfig c) {
    Rng rng(1004);
    BackboneWeights w = init_backbone(b, rng);
    AdapterBank bank = init_bank(c, b, rng);
    fixtures::randomize(bank, rng);
    const std::vector<Image> images = {random_image(b, rng), random_image(b, rng)};
    const std::vector<int> labels = {1, 3};
    std::map<std::string, Matrix*> params;
    for (auto& [name, m] : bank.tensors()) params.emplace(name, &m);
    params.emplace("head.w", &w.head_w);
    params.emplace("head.b", &w.head_b);
    auto build = [&](autodiff::Tape& tape) {
      for (const auto& [name, m] : params) tape.parameter(name, *m, true);
      return tape.cross_entropy(vit::forward_batch(tape, images, w, &bank), labels);
    };
    const autodiff::GradcheckReport r = autodiff::gradcheck(build, params, 1e-5, 1e-5);
    entries += r.entries_checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      const std::string kind = c.variant == Variant::full_rank
                                   ? std::string("full_rank")
                                   : std::string(to_string(c.sharing)) + "/" + std::string(to_string(c.form));
      where = kind + "/" + r.worst_param;
    }
    v.pass = v.pass && r.passed;
  };
  for (Sharing s : fixtures::kAllSharings) {
    ArcConfig seq;
    seq.bottleneck = 4;
    seq.sharing = s;
    seq.positions = {Site::before_mha, Site::after_mha, Site::before_ffn, Site::after_ffn};
    check(seq);
    ArcConfig par = seq;
    par.form = Form::parallel;
    par.positions = {Site::before_mha, Site::before_ffn};
    check(par);
  }
  ArcConfig full;
  full.variant = Variant::full_rank;
  full.positions = {Site::before_mha, Site::after_ffn};
  check(full);
  v.detail = std::to_string(entries) + " entries, max rel err " + sci(worst) + " at " + where +
             " (tol 1e-5, h 1e-5)";
  return v;
}

// 5. frozen backbone across 100 steps
Verdict frozen_backbone() {
  fixtures::TrainingFixture f = fixtures::training_fixture();
  f.train.epochs = 25;
  f.arc.dropout_rate = 0.1;
  const BackboneWeights before = f.weights;
  AdapterBank bank = f.fresh_bank();
  const TrainResult r = train(f.weights, &bank, f.data, f.train);
  Verdict v;
  const auto a = before.named_tensors();
  const auto c = f.weights.named_tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (BackboneWeights::is_head(a[i].first)) continue;
    const auto& x = a[i].second->data();
    const auto& y = c[i].second->data();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) v.pass = false;
  }
  v.pass = v.pass && r.curve.size() == 100 && r.checksum_before == r.checksum_after &&
           r.checksum_before == frozen_checksum(before);
  v.detail = std::to_string(r.curve.size()) + " steps, sha256 " + r.checksum_after.substr(0, 16) +
             "... unchanged, all non-head tensors bit-identical";
  return v;
}

// 6. fresh adapters are exact identities
Verdict identity_at_init() {
  Verdict v;
  std::size_t n = 0;
  const BackboneConfig b = fixtures::toy_backbone();
  Rng rng(1006);
  const BackboneWeights w = init_backbone(b, rng);
  std::vector<Image> images;
  for (int i = 0; i < 4; ++i) images.push_back(random_image(b, rng));
  const Matrix plain = vit::forward_batch(images, w);
  for (const ArcConfig& c : fixtures::config_grid(b)) {
    const AdapterBank bank = init_bank(c, b, rng);
    if (!(vit::forward_batch(images, w, &bank) == plain)) v.pass = false;
    ++n;
  }
  v.detail = std::to_string(n) + " configs, logits bitwise equal to the plain backbone";
  return v;
}

// 7. separable task: ARC reaches 100%, the head-only probe does not
Verdict training_sanity(std::string& note) {
  fixtures::TrainingFixture f = fixtures::training_fixture();
  BackboneWeights probe_w = f.weights;
  AdapterBank bank = f.fresh_bank();
  const TrainResult arc = train(f.weights, &bank, f.data, f.train);
  const TrainResult probe = train(probe_w, nullptr, f.data, f.train);
  Verdict v;
  v.pass = arc.curve.size() == 500 && arc.train_accuracy == 1.0 &&
           probe.train_accuracy < arc.train_accuracy;
  std::ostringstream d;
  d << "seed " << f.seed << ", " << arc.curve.size() << " steps: ARC acc "
    << arc.train_accuracy << ", probe acc " << probe.train_accuracy;
  v.detail = d.str();

  // informational: how often the ordering holds across seeds
  int arc_full = 0, ordered = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    fixtures::TrainingFixture g = fixtures::training_fixture(static_cast<std::uint64_t>(s));
    BackboneWeights pw = g.weights;
    AdapterBank gb = g.fresh_bank();
    const double a = train(g.weights, &gb, g.data, g.train).train_accuracy;
    const double p = train(pw, nullptr, g.data, g.train).train_accuracy;
    arc_full += a == 1.0;
    ordered += p < a;
  }
  std::ostringstream o;
  o << "seeds 0-" << seeds - 1 << ": ARC 100% on " << arc_full << "/" << seeds
    << ", probe strictly lower on " << ordered << "/" << seeds;
  note = o.str();
  return v;
}

// 8. SVD against its definition
Verdict svd_correctness() {
  Verdict v;
  Rng rng(1008);
  double rec = 0.0, orth = 0.0, planted = 0.0;
  bool sorted = true;
  auto ortho_err = [](const Matrix& q) {
    const auto rows = oracle::rows_of(q);
    const auto gram = oracle::matmul(oracle::transpose(rows), rows);
    double e = 0.0;
    for (std::size_t i = 0; i < gram.size(); ++i)
      for (std::size_t j = 0; j < gram.size(); ++j)
        e = std::max(e, std::abs(gram[i][j] - (i == j ? 1.0 : 0.0)));
    return e;
  };
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + rng.below(32), c = 1 + rng.below(32);
    const double scale = std::pow(10.0, rng.normal());
    Matrix a(r, c);
    for (double& x : a.data()) x = scale * rng.normal();
    const kernel::Svd d = kernel::svd(a);
    auto us = oracle::rows_of(d.u);
    for (auto& row : us)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] *= d.s[j];
    double amax = 0.0;
    for (double x : a.data()) amax = std::max(amax, std::abs(x));
    rec = std::max(rec, oracle::max_abs_diff(oracle::matmul(us, oracle::transpose(oracle::rows_of(d.v))), a) / amax);
    orth = std::max({orth, ortho_err(d.u), ortho_err(d.v)});
    for (std::size_t i = 1; i < d.s.size(); ++i) sorted = sorted && d.s[i - 1] >= d.s[i];
  }
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(31), rank = 1 + rng.below(n);
    auto draw = [&rng] { return rng.normal(); };
    auto u = oracle::random_orthonormal(n, rank, draw);
    const auto q = oracle::random_orthonormal(n, rank, draw);
    std::vector<double> s(rank);
    for (double& x : s) x = 0.1 + 9.9 * rng.uniform();
    std::sort(s.rbegin(), s.rend());
    for (auto& row : u)
      for (std::size_t j = 0; j < rank; ++j) row[j] *= s[j];
    const kernel::Svd d = kernel::svd(oracle::matrix_of(oracle::matmul(u, oracle::transpose(q))));
    for (std::size_t i = 0; i < n; ++i)
      planted = std::max(planted, std::abs(d.s[i] - (i < rank ? s[i] : 0.0)));
  }
  v.pass = rec <= 1e-8 && orth <= 1e-10 && sorted && planted <= 1e-8;
  v.detail = "200 random: recon " + sci(rec) + "*max|a|, orth " + sci(orth) +
             (sorted ? ", descending" : ", NOT descending") + "; 50 planted: max err " + sci(planted);
  return v;
}

// 9. per-layer marginal cost
Verdict layer_scaling() {
  Verdict v;
  std::size_t n = 0;
  for (acc::Count d : {16, 64, 384, 768, 1024, 1280})
    for (acc::Count r : {1, 4, 10, 50, 100, 200})
      for (acc::Count l = 1; l <= 48; ++l) {
        acc::MethodSpec arc;
        arc.method = acc::Method::arc;
        arc.bottleneck = r;
        acc::MethodSpec adapter = arc;
        adapter.method = acc::Method::adapter;
        const bool ok =
            acc::count_finetune(arc, d, l + 1) - acc::count_finetune(arc, d, l) == 2 * (r + d) &&
            acc::count_finetune(adapter, d, l + 1) - acc::count_finetune(adapter, d, l) == 2 * d * r;
        v.pass = v.pass && ok;
        ++n;
      }
  // the same slope measured on real banks
  BackboneConfig b;
  b.embed_dim = 32;
  b.heads = 2;
  ArcConfig c;
  c.bottleneck = 6;
  std::vector<std::size_t> census;
  for (int l = 1; l <= 6; ++l) {
    b.layers = l;
    census.push_back(AdapterBank(c, b).trainable_parameter_count());
  }
  for (std::size_t i = 1; i < census.size(); ++i) v.pass = v.pass && census[i] - census[i - 1] == 2 * (6 + 32);
  v.detail = std::to_string(n) + " (D, D', L) triples: arc slope 2(D'+D), adapter slope 2DD'; bank census slope 76 at D=32 D'=6";
  return v;
}

// 10. checkpoint persistence
Verdict checkpoint_round_trip() {
  Verdict v;
  const BackboneConfig b = fixtures::toy_backbone();
  Rng rng(1010);
  ArcConfig c;
  c.bottleneck = 4;
  BackboneWeights w = init_backbone(b, rng);
  AdapterBank bank = init_bank(c, b, rng);
  fixtures::randomize(bank, rng);
  const Checkpoint ckpt = make_checkpoint(w, &bank, sha256("acceptance"));
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("arcl_accept_" + std::to_string(::getpid()) + ".arcl");
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  const auto bytes = encode(ckpt);
  std::filesystem::remove(path);
  v.pass = back == ckpt && encode(back) == bytes;
  const LoadedModel m = restore(back, b, c, sha256("acceptance"));
  const Image img = random_image(b, rng);
  v.pass = v.pass && m.forward(img) == vit::forward(img, w, &bank);

  // every strict prefix is refused: by the parser, or (between entries) by the configs
  std::size_t format_errors = 0, config_errors = 0;
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    try {
      const Checkpoint partial = decode(std::span(bytes.data(), len));
      restore(partial, b, c);
      v.pass = false;
    } catch (const FormatError& e) {
      if (e.offset() > len) v.pass = false;
      ++format_errors;
    } catch (const ConfigError&) {
      ++config_errors;
    }
  }
  // header corruptions
  int corrupt = 0;
  for (std::size_t at : {std::size_t{0}, std::size_t{4}, std::size_t{8}}) {
    auto bad = bytes;
    bad[at] ^= 0x5a;
    try {
      decode(bad);
      v.pass = false;
    } catch (const FormatError&) {
      ++corrupt;
    }
  }
  v.detail = std::to_string(bytes.size()) + " bytes round-trip bitwise; " +
             std::to_string(format_errors + config_errors) + " truncations refused (" +
             std::to_string(format_errors) + " format, " + std::to_string(config_errors) +
             " missing-tensor); " + std::to_string(corrupt) + "/3 header corruptions refused";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  std::string sweep_note;
  const std::vector<Criterion> criteria = {
      {1, "fusion equivalence", fusion_equivalence},
      {2, "parameter-count reproduction", parameter_counts},
      {3, "census-formula agreement", census},
      {4, "gradient correctness", gradients},
      {5, "frozen-backbone contract", frozen_backbone},
      {6, "identity at init", identity_at_init},
      {7, "training sanity", [&] { return training_sanity(sweep_note); }},
      {8, "SVD correctness", svd_correctness},
      {9, "ARC layer scaling", layer_scaling},
      {10, "checkpoint round-trip", checkpoint_round_trip},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %-30s %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), secs);
    if (c.id == 7 && !sweep_note.empty()) std::printf("       info: %s\n", sweep_note.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
