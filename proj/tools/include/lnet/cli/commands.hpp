#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnet/ingestion.hpp"

namespace lnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad invocation or input the user must fix; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthOptions {
  std::optional<std::filesystem::path> config;
  int n = 100;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct TrainOptions {
  std::filesystem::path config;
};

struct EvalOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::string split = "test";
  /// Scores the ground truth against itself instead of a model.
  bool oracle = false;
  std::optional<std::filesystem::path> report;
};

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path out;
  /// Pads to a square multiple of 32 instead of refusing other sizes.
  bool pad = false;
};

// Each command returns an exit code and reports errors on `err`.
int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictOptions& opt, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Deterministic 70/10/20 assignment: ids are ordered by a seeded hash and the
/// first round(0.7 n) go to train, the next round(0.1 n) to val.
std::vector<std::string> assign_splits(const std::vector<std::string>& image_ids, std::uint64_t seed);

/// Loads every record of `split` from a manifest.
std::vector<Sample> load_split(const std::vector<DatasetRecord>& records, const std::string& split);

}  // namespace lnet::cli
