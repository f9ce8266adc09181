#pragma once
// Experiment runner: configured, reproducible runs of every module, with
// manifests, CSV data files, and summary diagnostics, plus a report mode
// that joins finished runs into comparison tables.
//
// A run is fully determined by its JSON config; the optional --out and
// --seed command-line overrides are folded into the config before anything
// executes, so the manifest always echoes the resolved document.  Every run
// directory receives
//   - command-specific CSV files (samples, profiles, plans, tables),
//   - summary.json with the headline numbers,
//   - manifest.json echoing the resolved config and listing every other
//     output file with its FNV-1a content hash.
// All text output is UTF-8 with LF line endings and shortest round-trip
// decimals, so re-running the same resolved config is byte-identical on
// every CSV and summary file.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace feklab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;         // unreadable, invalid, or inconsistent config
inline constexpr int kExitAdmissibility = 3;  // model rejected before sampling started
inline constexpr int kExitSolver = 4;         // a solver or sampler failed at runtime
inline constexpr int kManifestSchema = 1;     // bumped on incompatible manifest changes

std::string tool_version();  // "feklab <semver>"

struct CliRequest {
  // sample | fekete | equilibrium | bergman | tropical | transport |
  // curie-weiss | green-formula | report
  std::string command;
  std::string config_path;
  std::string out_override;  // replaces the config's output directory when nonempty
  std::optional<std::uint64_t> seed_override;
};

// Executes one command end to end.  log receives progress and error lines
// (the binary passes std::cerr).  Returns one of the kExit* codes above and
// never throws.
int run_cli(const CliRequest& req, std::ostream& log);

}  // namespace feklab
