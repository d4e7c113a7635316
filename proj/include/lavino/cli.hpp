// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lavino/operators.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace lavino::cli {

enum ExitCode : int
{
  kOk = 0,
  kValidation = 1,
  kRuntime = 2,
  kVerifyFailed = 3,
};

/// Sidecar written next to every measurement; enough to rebuild the operator exactly.
struct MeasurementMeta
{
  std::string operator_spec;
  Shape input_shape{};
  Shape output_shape{};
  double sigma_n = 0.0;
  std::uint64_t seed = 0;
  std::string problem;
};

std::string format_meta(MeasurementMeta const &m);
MeasurementMeta parse_meta(std::string const &text);

/// measurement.vten -> measurement.meta
std::filesystem::path meta_path(std::filesystem::path const &measurement);

/// "T,H,W,C" or "(T,H,W,C)".
Shape parse_shape(std::string const &text);

/* Entry point behind the lavino executable. args excludes the program name.
 * Returns one of ExitCode.
 */
int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err);

} // namespace lavino::cli
