// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0

#include "rowshare/bench.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rowshare/agent.hpp"
#include "rowshare/errors.hpp"
#include "rowshare/journal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rowshare::bench {

// --- Dossier shape ---------------------------------------------------------

namespace {

/// Deterministic printable filler: lowercase alphanumerics, no spaces, no
/// quoting hazards in the statement dialect.
std::string pseudo_text(std::mt19937_64& rng, std::size_t length) {
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string out(length, 'a');
  for (char& c : out) c = kAlphabet[rng() % (sizeof(kAlphabet) - 1)];
  return out;
}

}  // namespace

DossierShape DossierShape::for_bytes(int target_bytes) {
  DossierShape shape;
  // Rough serialized footprint: the statement skeleton plus one quoted
  // literal per column.
  constexpr int kOverhead = 60;
  int payload = std::max(target_bytes - kOverhead, shape.columns * 4);
  shape.width = static_cast<std::size_t>(payload / shape.columns);
  return shape;
}

std::vector<std::string> DossierShape::column_names() const {
  std::vector<std::string> names = {"id"};
  for (int i = 1; i <= columns; ++i) names.push_back("c" + std::to_string(i));
  return names;
}

store::Row DossierShape::row(const std::string& table, std::int64_t pk,
                             std::uint64_t seed) const {
  std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(pk) * 0x9E3779B97F4A7C15ULL);
  store::Row row;
  row.table_name = table;
  row.primary_key = pk;
  row.fields.push_back({"id", pk});
  for (int i = 1; i <= columns; ++i) {
    row.fields.push_back({"c" + std::to_string(i), pseudo_text(rng, width)});
  }
  return row;
}

// --- Reply parsing ---------------------------------------------------------

Reply parse_reply(const std::string& line) {
  Reply reply;
  reply.raw = line;
  std::istringstream in(line);
  in >> reply.verb;
  if (reply.verb == "ok") {
    reply.ok = true;
    in >> reply.micros;
  }
  std::getline(in, reply.payload);
  if (!reply.payload.empty() && reply.payload.front() == ' ') reply.payload.erase(0, 1);
  return reply;
}

// --- Child processes -------------------------------------------------------

Child::Child(const fs::path& binary, const std::vector<std::string>& args,
             bool quiet_stderr) {
  // Writes to a dead child must fail with EPIPE, not kill this process.
  static std::once_flag pipe_guard;
  std::call_once(pipe_guard, [] { ::signal(SIGPIPE, SIG_IGN); });

  int to_child[2];    // parent writes [1], child reads [0]
  int from_child[2];  // child writes [1], parent reads [0]
  if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0) {
    throw EnvironmentError(std::string("pipe: ") + std::strerror(errno));
  }

  pid_ = ::fork();
  if (pid_ < 0) throw EnvironmentError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    // dup2 clears O_CLOEXEC on the standard descriptors; every other pipe
    // end closes across exec, so children never hold each other open.
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    if (quiet_stderr) {
      int devnull = ::open("/dev/null", O_WRONLY);
      if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
    }
    std::vector<std::string> argv_storage;
    argv_storage.push_back(binary.string());
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(argv_storage.size() + 1);
    for (std::string& arg : argv_storage) argv.push_back(arg.data());
    argv.push_back(nullptr);
    ::execv(binary.c_str(), argv.data());
    std::fprintf(stderr, "exec %s: %s\n", binary.c_str(), std::strerror(errno));
    ::_exit(127);
  }

  ::close(to_child[0]);
  ::close(from_child[1]);
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

Child::~Child() {
  if (!reaped_ && pid_ > 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status_, 0);
    reaped_ = true;
  }
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
}

void Child::send_line(const std::string& line) {
  std::string framed = line + "\n";
  std::size_t sent = 0;
  while (sent < framed.size()) {
    ssize_t wrote = ::write(to_child_, framed.data() + sent, framed.size() - sent);
    if (wrote < 0) {
      if (errno == EINTR) continue;
      throw EnvironmentError(std::string("write to child: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(wrote);
  }
}

std::optional<std::string> Child::read_line(int timeout_ms) {
  using clock = std::chrono::steady_clock;
  auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms);
  while (true) {
    if (std::size_t pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (remaining <= 0) {
      throw EnvironmentError("timed out after " + std::to_string(timeout_ms) +
                             "ms waiting for child output");
    }
    pollfd entry{from_child_, POLLIN, 0};
    int ready = ::poll(&entry, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw EnvironmentError(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;  // re-check the deadline
    char chunk[4096];
    ssize_t got = ::read(from_child_, chunk, sizeof chunk);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw EnvironmentError(std::string("read from child: ") + std::strerror(errno));
    }
    if (got == 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

Reply Child::command(const std::string& line, int timeout_ms) {
  send_line(line);
  std::vector<std::string> rows;
  while (true) {
    std::optional<std::string> out = read_line(timeout_ms);
    if (!out) {
      throw EnvironmentError("child exited before replying to '" + line + "'");
    }
    if (out->rfind("row ", 0) == 0) {
      rows.push_back(out->substr(4));
      continue;
    }
    Reply reply = parse_reply(*out);
    reply.rows = std::move(rows);
    return reply;
  }
}

bool Child::running() {
  if (reaped_ || pid_ <= 0) return false;
  int status = 0;
  pid_t done = ::waitpid(pid_, &status, WNOHANG);
  if (done == pid_) {
    status_ = status;
    reaped_ = true;
    return false;
  }
  return true;
}

void Child::kill_hard() {
  if (!reaped_ && pid_ > 0) ::kill(pid_, SIGKILL);
}

void Child::terminate() {
  if (!reaped_ && pid_ > 0) ::kill(pid_, SIGTERM);
}

int Child::wait() {
  if (!reaped_ && pid_ > 0) {
    ::waitpid(pid_, &status_, 0);
    reaped_ = true;
  }
  return status_;
}

// --- Spawning helpers ------------------------------------------------------

SyncHandle spawn_sync(const fs::path& binary, const fs::path& dir, const fs::path& log) {
  fs::create_directories(dir);
  fs::path port_file = dir / "sync.port";
  std::error_code ignored;
  fs::remove(port_file, ignored);

  std::vector<std::string> args = {"sync", "--port-file", port_file.string()};
  if (!log.empty()) {
    args.push_back("--log");
    args.push_back(log.string());
  }

  SyncHandle handle;
  handle.child = std::make_unique<Child>(binary, args);

  using clock = std::chrono::steady_clock;
  auto deadline = clock::now() + std::chrono::seconds(10);
  while (clock::now() < deadline) {
    if (fs::exists(port_file)) {
      std::ifstream in(port_file);
      int port = 0;
      if (in >> port && port > 0) {
        handle.port = static_cast<std::uint16_t>(port);
        return handle;
      }
    }
    if (!handle.child->running()) {
      throw EnvironmentError("synchronizer exited during startup");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  throw EnvironmentError("synchronizer did not report a port within 10s");
}

fs::path write_agent_config(const fs::path& dir, const std::string& user, std::uint16_t port,
                            const std::string& on_revoked) {
  fs::create_directories(dir);
  fs::path identity = dir / (user + ".identity.json");
  if (!fs::exists(identity)) agent::Identity::create(user).save(identity);
  json config = {
      {"user_id", user},
      {"password", "pw-" + user},
      {"identity", identity.filename().string()},
      {"journal", user + ".journal.sql"},
      {"host", "127.0.0.1"},
      {"port", port},
      {"on_revoked", on_revoked},
  };
  fs::path path = dir / (user + ".config.json");
  journal::write_text_atomically(path, config.dump(2) + "\n");
  return path;
}

// --- The benchmark ---------------------------------------------------------

namespace {

double to_ms(const Reply& reply) { return static_cast<double>(reply.micros) / 1000.0; }

Reply expect_ok(Child& child, const std::string& cmd) {
  Reply reply = child.command(cmd);
  if (!reply.ok) {
    throw EnvironmentError("benchmark command '" + cmd + "' failed: " + reply.raw);
  }
  return reply;
}

/// One full run of one variant at one grid point, in a fresh directory with
/// a fresh synchronizer. The encrypted variant shares S = n*pct/100 dossiers
/// from the owner to the receiver; the baseline writes the same S dossiers
/// locally at the receiver instead, so both variants end with identical
/// final dossier counts on both sides.
PhaseTimes run_variant(const BenchConfig& config, int n, int pct, bool encrypted,
                       const fs::path& run_dir) {
  fs::create_directories(run_dir);
  SyncHandle sync = spawn_sync(config.binary, run_dir);
  fs::path config_a = write_agent_config(run_dir, "alice", sync.port);
  fs::path config_b = write_agent_config(run_dir, "bob", sync.port);

  Child a(config.binary, {"script", "--config", config_a.string(), "--no-login"});
  Child b(config.binary, {"script", "--config", config_b.string(), "--no-login"});
  expect_ok(a, "register");
  expect_ok(a, "login");
  expect_ok(b, "register");
  expect_ok(b, "login");

  const std::int64_t shared = static_cast<std::int64_t>(n) * pct / 100;
  std::string columns;
  for (const std::string& name : DossierShape{}.column_names()) columns += " " + name;
  const std::string populate_tail = " 1 " + std::to_string(config.dossier_bytes) + " " +
                                    std::to_string(config.seed);

  PhaseTimes t;
  t.create_ms += to_ms(expect_ok(a, "create-table dossiers" + columns));
  if (!encrypted && shared > 0) {
    t.create_ms += to_ms(expect_ok(b, "create-table dossiers" + columns));
  }

  t.populate_ms +=
      to_ms(expect_ok(a, "bench-populate dossiers " + std::to_string(n) + populate_tail));
  if (!encrypted && shared > 0) {
    t.populate_ms += to_ms(
        expect_ok(b, "bench-populate dossiers " + std::to_string(shared) + populate_tail));
  }

  if (encrypted && shared > 0) {
    t.share_ms +=
        to_ms(expect_ok(a, "bench-share dossiers " + std::to_string(shared) + " 1 bob"));
    Reply received = expect_ok(b, "receive");
    if (received.payload != std::to_string(shared)) {
      throw EnvironmentError("receiver integrated " + received.payload + " rows, want " +
                             std::to_string(shared));
    }
    t.receive_ms += to_ms(received);
  }

  t.reopen_ms += to_ms(expect_ok(a, "bench-reopen"));
  t.reopen_ms += to_ms(expect_ok(b, "bench-reopen"));
  t.total_ms = t.computed_total();

  a.send_line("exit");
  b.send_line("exit");
  a.wait();
  b.wait();
  sync.child->terminate();
  sync.child->wait();
  return t;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty sample");
  std::sort(values.begin(), values.end());
  std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

PhaseTimes median_times(const std::vector<PhaseTimes>& runs) {
  auto field_median = [&runs](double PhaseTimes::* field) {
    std::vector<double> values;
    values.reserve(runs.size());
    for (const PhaseTimes& run : runs) values.push_back(run.*field);
    return median(std::move(values));
  };
  PhaseTimes m;
  m.create_ms = field_median(&PhaseTimes::create_ms);
  m.populate_ms = field_median(&PhaseTimes::populate_ms);
  m.share_ms = field_median(&PhaseTimes::share_ms);
  m.receive_ms = field_median(&PhaseTimes::receive_ms);
  m.reopen_ms = field_median(&PhaseTimes::reopen_ms);
  // The total is the median of per-run totals, not a sum of independent
  // medians; the overhead comparison needs totals that actually happened.
  m.total_ms = field_median(&PhaseTimes::total_ms);
  return m;
}

void validate(const BenchConfig& config) {
  if (config.binary.empty() || !fs::exists(config.binary)) {
    throw InputError("benchmark needs the path to the rowshare binary");
  }
  if (config.n_dossiers.empty() || config.pct_shared.empty()) {
    throw InputError("benchmark needs at least one dossier count and one percentage");
  }
  for (int n : config.n_dossiers) {
    if (n < 1) throw InputError("dossier counts must be positive");
  }
  for (int pct : config.pct_shared) {
    if (pct < 0 || pct > 100) throw InputError("shared percentages must be within [0, 100]");
  }
  bool any_sharing = std::any_of(config.pct_shared.begin(), config.pct_shared.end(),
                                 [](int pct) { return pct > 0; });
  if (any_sharing && config.n_clients < 2) {
    throw InputError("sharing needs at least two clients");
  }
  if (config.n_clients != 2) {
    throw InputError("only the two-client benchmark (owner and receiver) is supported");
  }
  if (config.repetitions < 1) throw InputError("at least one measured repetition is needed");
  if (config.dossier_bytes < 64) throw InputError("dossiers below 64 bytes are not supported");
}

}  // namespace

BenchResult run_benchmark(const BenchConfig& config) {
  validate(config);
  using clock = std::chrono::steady_clock;
  auto sweep_start = clock::now();

  fs::path workdir = config.workdir;
  bool own_workdir = false;
  if (workdir.empty()) {
    std::string tmpl = (fs::temp_directory_path() / "rowshare-bench-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw EnvironmentError(std::string("mkdtemp: ") + std::strerror(errno));
    }
    workdir = tmpl;
    own_workdir = true;
  } else {
    fs::create_directories(workdir);
  }

  BenchResult result;
  for (int n : config.n_dossiers) {
    for (int pct : config.pct_shared) {
      std::vector<PhaseTimes> encrypted_runs;
      std::vector<PhaseTimes> baseline_runs;
      // Repetition 0 is the warm-up: it pays for cold page caches and
      // freshly mapped binaries, and its numbers are discarded.
      for (int rep = 0; rep <= config.repetitions; ++rep) {
        for (bool encrypted : {true, false}) {
          std::string run_name = std::string(encrypted ? "enc" : "base") + "-" +
                                 std::to_string(n) + "-" + std::to_string(pct) + "-" +
                                 std::to_string(rep);
          fs::path run_dir = workdir / run_name;
          PhaseTimes times = run_variant(config, n, pct, encrypted, run_dir);
          std::error_code ignored;
          fs::remove_all(run_dir, ignored);
          if (rep > 0) (encrypted ? encrypted_runs : baseline_runs).push_back(times);
        }
        if (config.verbose) {
          std::fprintf(stderr, "bench: n=%d pct=%d rep=%d/%d done\n", n, pct, rep,
                       config.repetitions);
        }
      }
      BenchPoint point;
      point.n = n;
      point.pct = pct;
      point.encrypted = median_times(encrypted_runs);
      point.baseline = median_times(baseline_runs);
      result.points.push_back(point);
    }
  }

  if (own_workdir) {
    std::error_code ignored;
    fs::remove_all(workdir, ignored);
  }
  result.wall_seconds =
      std::chrono::duration_cast<std::chrono::duration<double>>(clock::now() - sweep_start)
          .count();
  return result;
}

// --- Reporting -------------------------------------------------------------

void write_csv(const BenchResult& result, const fs::path& path) {
  std::ostringstream out;
  out << "n,pct_shared,phase,variant,median_ms\n";
  out.setf(std::ios::fixed);
  out.precision(3);
  for (const BenchPoint& point : result.points) {
    auto emit = [&](const char* phase, double encrypted_ms, double baseline_ms) {
      out << point.n << ',' << point.pct << ',' << phase << ",encrypted," << encrypted_ms
          << '\n';
      out << point.n << ',' << point.pct << ',' << phase << ",baseline," << baseline_ms
          << '\n';
    };
    emit("create", point.encrypted.create_ms, point.baseline.create_ms);
    emit("populate", point.encrypted.populate_ms, point.baseline.populate_ms);
    emit("share", point.encrypted.share_ms, point.baseline.share_ms);
    emit("receive", point.encrypted.receive_ms, point.baseline.receive_ms);
    emit("reopen", point.encrypted.reopen_ms, point.baseline.reopen_ms);
    emit("total", point.encrypted.total_ms, point.baseline.total_ms);
  }
  journal::write_text_atomically(path, out.str());
}

std::string summary(const BenchResult& result) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << "n        pct  encrypted_ms  baseline_ms  overhead\n";
  for (const BenchPoint& point : result.points) {
    char line[128];
    std::snprintf(line, sizeof line, "%-8d %-4d %-13.1f %-12.1f %.1f%%\n", point.n, point.pct,
                  point.encrypted.total_ms, point.baseline.total_ms,
                  point.overhead() * 100.0);
    out << line;
  }

  // Fit quality of encrypted total against n, one series per percentage.
  std::vector<int> pcts;
  for (const BenchPoint& point : result.points) {
    if (std::find(pcts.begin(), pcts.end(), point.pct) == pcts.end()) pcts.push_back(point.pct);
  }
  for (int pct : pcts) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const BenchPoint& point : result.points) {
      if (point.pct == pct) {
        xs.push_back(static_cast<double>(point.n));
        ys.push_back(point.encrypted.total_ms);
      }
    }
    if (xs.size() >= 2) {
      char line[96];
      std::snprintf(line, sizeof line, "linearity pct=%d: R^2=%.4f over %zu points\n", pct,
                    linear_fit_r2(xs, ys), xs.size());
      out << line;
    }
  }
  out << "sweep wall time: " << result.wall_seconds << "s\n";
  return out.str();
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InputError("a linear fit needs two equal-length samples of at least two points");
  }
  double n = static_cast<double>(x.size());
  double mean_x = 0;
  double mean_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean_x += x[i];
    mean_y += y[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0;
  double syy = 0;
  double sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mean_x;
    double dy = y[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (syy == 0) return 1.0;  // a perfectly flat series fits its own line
  if (sxx == 0) return 0.0;  // no spread in x: nothing to fit
  return (sxy * sxy) / (sxx * syy);
}

}  // namespace rowshare::bench
