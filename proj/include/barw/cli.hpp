#pragma once

#include "barw/lineage.hpp"
#include "barw/renorm.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace barw::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& msg);
  int line;
  std::string key;
};

/**
 * Flat `key = value` settings with dotted keys. '#' starts a comment.
 *
 * Values are typed when read. Every key the subcommand reads is recorded with
 * its resolved value (defaults included); keys nobody read are rejected by
 * finish(), so a typo is an error rather than a silent default.
 */
class Settings {
 public:
  static Settings parse(std::istream& in, const std::string& source = "<config>");
  static Settings parse_file(const std::filesystem::path& path);
  static Settings from_map(const std::map<std::string, std::string>& values);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  double get_double(const std::string& key, double fallback);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback);
  std::optional<std::int64_t> get_optional_int(const std::string& key);
  std::optional<double> get_optional_double(const std::string& key);

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;
  [[noreturn]] void reject(const std::string& key, const std::string& msg) const;

  /// Every key read so far with the value in force, sorted by key.
  const std::map<std::string, std::string>& resolved() const { return resolved_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry* find(const std::string& key);

  std::string source_ = "<config>";
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
  std::map<std::string, std::string> resolved_;
};

/// 17 significant digits.
std::string format_double(double v);

std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> params;  // includes run.seed and run.stream
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string version;
  std::string started;
  std::string finished;
  std::map<std::string, std::string> outputs;  // file name -> sha256
  int exit_code = 0;
};

inline constexpr const char* kManifestName = "manifest.json";

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct RunContext {
  std::filesystem::path out_dir = ".";
  int threads = 1;
};

/// Result of one subcommand body; outputs are file names relative to out_dir.
struct CommandResult {
  int exit_code = kExitPass;
  std::vector<std::string> outputs;
  nlohmann::json summary;
};

CommandResult cmd_simulate(Settings& s, const RunContext& ctx);
CommandResult cmd_certify(Settings& s, const RunContext& ctx);
CommandResult cmd_block_probe(Settings& s, const RunContext& ctx);
CommandResult cmd_lineage(Settings& s, const RunContext& ctx);

/// Runs a subcommand and writes manifest.json next to its outputs.
RunManifest run_command(const std::string& subcommand, Settings& s, const RunContext& ctx);

struct VerifyReport {
  bool files_match = false;     // stored outputs hash to the recorded digests
  bool replay_matches = false;  // a fresh replay reproduces every digest
  std::vector<std::string> mismatches;
  bool ok() const { return files_match && replay_matches; }
};

/// Checks an output directory against its manifest and replays the run in a
/// scratch directory.
VerifyReport verify_directory(const std::filesystem::path& dir, int threads);

// Shared experiment bodies, also used by the acceptance tests.

struct BlockProbeSetup {
  ModelParams params;
  Scales scales;
  AlphaBetaSeq seq;
  int m0 = 1;
  double eps_fp = 0.0;
  BlockProfiles profiles;
  std::int64_t side = 0;
  std::int64_t burn_in = 50;
  int retry_cap = 5;
  CouplingOptions coupling;
};

/// Reads model, scales, profile and probe keys.
BlockProbeSetup block_probe_setup(Settings& s);

/// Trial i: two independent stationary burn-ins (streams derived from `stream`
/// with tags 1 and 2) coupled through block (0, 0) under a third shared stream.
std::vector<CouplingReport> run_block_trials(const BlockProbeSetup& setup, std::uint64_t seed,
                                             std::uint64_t stream, std::int64_t trials,
                                             int threads);

}  // namespace barw::cli
