// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace actrec::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kDiverged = 4,
  kIo = 5,
};

struct Hooks {
  /// Replaces the finetune/extract/classify/evaluate pipeline that `sweep`
  /// runs for each candidate size.
  std::function<double(int)> sweep_evaluator;
};

/// Runs `actrec <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks = {});

}  // namespace actrec::cli
