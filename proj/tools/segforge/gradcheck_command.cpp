// Compiled against the double-precision core.
#include <cstdio>
#include <limits>

#include "commands.hpp"
#include "segforge/gradcheck_suite.hpp"

namespace segforge::cli {

int cmd_gradcheck(const GradcheckArgs& args) {
  static_assert(kDoublePrecision, "gradient checks run in double precision");
  if (args.list) {
    for (const auto& c : gradcheck_cases()) std::printf("%-18s %s\n", c.name.c_str(), c.kind.c_str());
    return 0;
  }
  GradCheckOptions options;
  options.tolerance = args.tolerance;
  const auto results = run_gradcheck_suite(args.ops, options);

  bool ok = true;
  if (args.csv) std::printf("name,kind,max_rel_error,coordinates,retried,passed,worst\n");
  for (const auto& r : results) {
    const auto& rep = r.report;
    ok = ok && rep.passed;
    std::string worst = rep.worst_tensor;
    if (rep.worst_index != std::numeric_limits<std::size_t>::max()) worst += "[" + std::to_string(rep.worst_index) + "]";
    if (args.csv) {
      std::printf("%s,%s,%.3e,%zu,%zu,%d,%s\n", r.name.c_str(), r.kind.c_str(), rep.max_relative_error,
                  rep.coordinates_checked, rep.coordinates_retried, rep.passed ? 1 : 0, worst.c_str());
    } else {
      std::printf("%-18s %-5s %-4s max rel err %.3e over %6zu coords  worst %s  (%.1fs)\n", r.name.c_str(),
                  r.kind.c_str(), rep.passed ? "ok" : "FAIL", rep.max_relative_error, rep.coordinates_checked,
                  worst.c_str(), r.seconds);
    }
  }
  for (const auto& r : results) {
    if (!r.report.passed) {
      std::fprintf(stderr, "gradient check failed: %s at %s[%zu] (analytic %.9g, numeric %.9g)\n", r.name.c_str(),
                   r.report.worst_tensor.c_str(), r.report.worst_index, r.report.analytic, r.report.numeric);
    }
  }
  return ok ? 0 : 1;
}

}  // namespace segforge::cli
