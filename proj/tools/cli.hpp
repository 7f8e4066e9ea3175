#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dataset.hpp"
#include "tokenbinder/model.hpp"

namespace tokenbinder::cli {

enum class Verb { train, eval, query, gradcheck, ablate };
std::string_view to_string(Verb verb);

struct Override {
  std::string key;
  std::vector<std::string> values;  // more than one only for ablate sweeps
};

struct Command {
  Verb verb = Verb::train;
  std::optional<std::filesystem::path> config_path;
  std::vector<Override> overrides;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

// UsageError naming the offending argument. Override keys are checked against
// the config registry; config files must exist.
Command parse_args(int argc, const char* const* argv);

// Config file (or defaults) with single-valued overrides, --seed and
// --deterministic applied, then validated.
RunConfig resolve_config(const Command& cmd);

// Runs the verb, writing artifacts under cmd.out_dir. Returns the process exit
// status: 0 when every requested check passed.
int execute(const Command& cmd, std::ostream& out, std::ostream& err);

// Parses and executes; usage and runtime errors become messages on `err` and
// a nonzero status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Pieces shared with tests.
PairedDataset training_data(const RunConfig& config);
PairedDataset evaluation_data(const RunConfig& config);
Model load_or_initialize(const RunConfig& config);

struct AblationRow {
  std::string axis;
  std::string value;
  RunConfig config;
};
// Component rows (cumulative toggles) when no override has several values,
// otherwise one row per value of each multi-valued override, one axis at a
// time with the others at their configured values.
std::vector<AblationRow> ablation_rows(const Command& cmd, const RunConfig& base);

// Gradient suite on a toy configuration derived from `base` (C=8, B=2, k=3).
struct GradcheckLine {
  std::string name;
  double max_rel_error = 0.0;
};
std::vector<GradcheckLine> run_gradient_suite(const RunConfig& base);
inline constexpr double kGradcheckTolerance = 1e-4;

}  // namespace tokenbinder::cli
