// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0
//
// The sharing benchmark and its process harness. The benchmark measures the
// end-to-end cost of encrypted row sharing against a baseline in which the
// same final set of dossiers is written locally, with no sharing involved.
// Every measured operation runs inside freshly spawned child processes over
// loopback, so the numbers include real serialization, sockets, disk and
// crypto work rather than in-process shortcuts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rowshare/store.hpp"

namespace rowshare::bench {

/// The shape of a benchmark dossier: `columns` text fields of `width`
/// characters each beside the integer primary key, sized so the serialized
/// row lands near a requested byte count. Content is deterministic in
/// (seed, pk), so runs are reproducible and scanners know what to look for.
struct DossierShape {
  int columns = 7;
  std::size_t width = 20;

  static DossierShape for_bytes(int target_bytes);
  std::vector<std::string> column_names() const;
  store::Row row(const std::string& table, std::int64_t pk, std::uint64_t seed) const;
};

// --- Process harness -------------------------------------------------------

/// One parsed reply line from a scripted agent session.
struct Reply {
  std::string verb;                // "ok", "err", "revoked", "unavailable", ...
  bool ok = false;                 // verb == "ok"
  std::int64_t micros = 0;         // child-measured operation time (ok replies)
  std::string payload;             // rest of the line after verb (and micros)
  std::string raw;                 // the whole reply line
  std::vector<std::string> rows;   // any "row <statement>" lines preceding it
};

/// Parses "ok <micros> [payload]" and the failure forms. Never throws; an
/// unrecognized line comes back with verb set to its first token.
Reply parse_reply(const std::string& line);

/// A spawned child process with line-oriented pipes on stdin/stdout.
/// Destruction kills (SIGKILL) and reaps the child if it is still running.
class Child {
 public:
  /// `quiet_stderr` points the child's stderr at /dev/null — for spawns
  /// whose failure output is expected and asserted on by the caller.
  Child(const std::filesystem::path& binary, const std::vector<std::string>& args,
        bool quiet_stderr = false);
  ~Child();

  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  /// Writes one line to the child's stdin. Throws EnvironmentError if the
  /// child is gone.
  void send_line(const std::string& line);

  /// Reads one line from the child's stdout. Returns std::nullopt on end of
  /// stream; throws EnvironmentError when `timeout_ms` elapses first.
  std::optional<std::string> read_line(int timeout_ms);

  /// Sends a command line and reads until its reply line arrives, collecting
  /// any "row ..." output lines along the way. Throws EnvironmentError on
  /// timeout or if the child exits without replying.
  Reply command(const std::string& line, int timeout_ms = 600'000);

  int pid() const { return pid_; }
  bool running();
  void kill_hard();  // SIGKILL; the child stays reapable via wait()
  void terminate();  // SIGTERM
  int wait();        // blocks; returns the raw waitpid status

 private:
  int pid_ = -1;
  int to_child_ = -1;    // we write the child's stdin here
  int from_child_ = -1;  // we read the child's stdout here
  std::string buffer_;
  bool reaped_ = false;
  int status_ = 0;
};

/// A running synchronizer child plus the ephemeral port it bound.
struct SyncHandle {
  std::unique_ptr<Child> child;
  std::uint16_t port = 0;
};

/// Spawns `<binary> sync` in `dir`, waits for its port file and returns the
/// handle. Pass `log` to give the service a persistent event log.
SyncHandle spawn_sync(const std::filesystem::path& binary, const std::filesystem::path& dir,
                      const std::filesystem::path& log = {});

/// Writes an agent config (and a fresh identity if none exists) for `user`
/// into `dir` and returns the config path. Files are named after the user.
std::filesystem::path write_agent_config(const std::filesystem::path& dir,
                                         const std::string& user, std::uint16_t port,
                                         const std::string& on_revoked = "drop");

// --- Benchmark -------------------------------------------------------------

struct BenchConfig {
  std::vector<int> n_dossiers = {1000, 5000, 10000, 50000, 100000};
  std::vector<int> pct_shared = {20, 40};
  int n_clients = 2;        // owner + receiver; only 2 is supported
  int dossier_bytes = 200;  // approximate serialized row size
  int repetitions = 3;      // measured runs per point, after one warm-up
  std::uint64_t seed = 20260817;
  std::string output_csv = "bench.csv";
  std::filesystem::path binary;   // the rowshare executable to spawn
  std::filesystem::path workdir;  // empty: a fresh temporary directory
  bool verbose = false;           // progress lines on stderr
};

/// Per-phase wall times in milliseconds, as measured inside the children.
/// `share_ms` is reported but excluded from the total: the grant itself is
/// the owner's one-time act of sharing, while the total tracks the cost of
/// operating a store of the same final content.
struct PhaseTimes {
  double create_ms = 0;
  double populate_ms = 0;
  double share_ms = 0;
  double receive_ms = 0;
  double reopen_ms = 0;
  double total_ms = 0;  // create + populate + receive + reopen

  double computed_total() const { return create_ms + populate_ms + receive_ms + reopen_ms; }
};

/// One grid point: medians over the measured repetitions, both variants.
struct BenchPoint {
  int n = 0;
  int pct = 0;
  PhaseTimes encrypted;
  PhaseTimes baseline;

  /// Relative cost of encrypted sharing over the plain baseline.
  double overhead() const {
    return baseline.total_ms > 0 ? (encrypted.total_ms - baseline.total_ms) / baseline.total_ms
                                 : 0.0;
  }
};

struct BenchResult {
  std::vector<BenchPoint> points;
  double wall_seconds = 0;  // whole-sweep wall time, warm-ups included
};

/// Runs the full grid. Throws on invalid configuration or harness failure.
BenchResult run_benchmark(const BenchConfig& config);

/// Writes `n,pct_shared,phase,variant,median_ms` rows, one per phase and
/// variant, including a synthetic "total" phase.
void write_csv(const BenchResult& result, const std::filesystem::path& path);

/// Human-readable per-point table plus fit quality, for terminal output.
std::string summary(const BenchResult& result);

/// Coefficient of determination of the least-squares line through (x, y).
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rowshare::bench
