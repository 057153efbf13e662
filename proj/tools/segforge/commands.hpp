#pragma once

#include <optional>
#include <string>
#include <vector>

#include <cstddef>
#include <cstdint>

// Argument bundles for the commands. Nothing here depends on the numeric
// precision: the gradcheck command is compiled against the f64 core.
namespace segforge::cli {

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::size_t synth_count = 0;
  std::size_t synth_size = 0;  // 0: the model input size
  std::uint64_t seed = 0;
  std::string config;          // resolved run config, to rebuild a split
  std::string split = "all";   // all | train | val | test
  double threshold = 0.5;
};

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
  double threshold = 0.5;
  bool prob = false;
};

struct SynthArgs {
  std::size_t n = 0;
  std::size_t size = 256;
  std::uint64_t seed = 0;
  std::string out;
};

struct GradcheckArgs {
  double tolerance = 1e-4;
  std::string ops = "all";
  bool csv = false;
  bool list = false;
};

int cmd_eval(const EvalArgs& args);
int cmd_predict(const PredictArgs& args);
int cmd_synth(const SynthArgs& args);
/// Runs in double precision; lives in its own translation unit.
int cmd_gradcheck(const GradcheckArgs& args);

}  // namespace segforge::cli
