// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace arcl::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // I/O, format, or a failed verification
  kConfigError = 2,   // invalid or unknown config content
  kNumericalAbort = 3,
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out_dir;
};

struct FuseArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
};

struct VerifyArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path fused;
  int trials = 32;
  std::optional<std::filesystem::path> config;
};

struct CountArgs {
  std::string method;
  long long dim = 0;
  long long layers = 0;
  std::optional<long long> bottleneck;
  std::optional<long long> prompts;
  std::optional<long long> attn_matrices;
  std::optional<long long> operations;
  std::optional<std::string> sweep;  // "layers" | "backbones"
  std::optional<std::filesystem::path> csv;
};

struct SpectrumArgs {
  std::filesystem::path checkpoint;
  int bins = 50;
  std::filesystem::path out_dir;
  double tau = 0.01;
  std::optional<std::filesystem::path> config;
};

struct GradcheckArgs {
  std::filesystem::path config;
  double tol = 1e-5;
  double step = 1e-5;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_fuse(const FuseArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err);
int cmd_count(const CountArgs& args, std::ostream& out, std::ostream& err);
int cmd_spectrum(const SpectrumArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace arcl::cli
