#pragma once

#include <functional>
#include <string>
#include <vector>

#include "segforge/gradcheck.hpp"

SEGFORGE_NAMESPACE_BEGIN

/// One named gradient check over toy shapes: a primitive op, a composite
/// block, or a whole toy network.
struct GradCheckCase {
  std::string name;
  std::string kind;  // "op" | "block" | "model"
  std::function<GradCheckReport(const GradCheckOptions&)> run;
};

/// Every differentiable op and block, then the two toy networks. Inputs are
/// drawn away from the kinks of relu and maxpool so central differences are
/// meaningful.
std::vector<GradCheckCase> gradcheck_cases();

struct GradCheckResult {
  std::string name;
  std::string kind;
  GradCheckReport report;
  double seconds = 0;
};

/// Runs the cases selected by filter: "all", or a comma-separated list of
/// case names. An unknown name is a ConfigError.
std::vector<GradCheckResult> run_gradcheck_suite(const std::string& filter, const GradCheckOptions& options);

/// Coordinates sampled per parameter tensor in the network cases, on top of a
/// directional derivative that covers all coordinates.
inline constexpr std::size_t kModelCoordinatesPerTensor = 40;

SEGFORGE_NAMESPACE_END
