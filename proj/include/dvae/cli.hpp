#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace dvae::cli {

// Process exit codes, a stable contract for scripts.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitAbort = 4,
  kExitValidation = 5,
};

/// Effective settings of one invocation. Keys in config files and flags use the
/// field names (flags with '-' for '_').
struct RunConfig {
  std::string manifold = "flat-torus";
  double t_min = 1e-4;
  double t_max = 4e-3;
  int walk_steps = 16;
  int hidden = 256;
  int encoder_layers = 3;
  int decoder_layers = 2;
  std::string activation = "relu";
  std::string likelihood = "gaussian";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 300;
  int batch_size = 128;
  std::uint64_t seed = 1;
  std::string data;            // DVAEDS1 file, or a directory holding MNIST IDX files
  std::string split = "train"; // MNIST split: train or test
  std::string binarize = "none";
  int samples = 100;           // importance samples L
  int limit = 0;               // evaluate the first N datapoints only, 0 for all
  std::string kl = "asymptotic";
  std::string out = "runs";
  std::string name;            // run directory name, defaults to <manifold>-s<seed>
  bool timing = false;         // record wall-clock seconds in metrics.csv
  int log_every = 10;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Reads `key = value` lines; '#' starts a comment. Throws ConfigError on malformed
/// lines and repeated keys.
KeyValues parse_key_values(std::istream& in);

/// Applies key/value pairs on top of cfg. Unknown keys and unparsable values throw ConfigError.
void apply_key_values(RunConfig& cfg, const KeyValues& kv);

/// All keys in a fixed order, values in shortest round-trip form.
std::string serialize(const RunConfig& cfg);

/// Picks <parent>/<name>, or the first free <parent>/<name>-k, and creates it.
std::string fresh_directory(const std::string& parent, const std::string& name);

/// Runs the command line args (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dvae::cli
