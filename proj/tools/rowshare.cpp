// Copyright 2026 The rowshare Authors
// SPDX-License-Identifier: Apache-2.0
//
// The rowshare command line: runs the synchronizer service, runs one-shot
// agent operations, drives a long-lived scripted agent session over
// stdin/stdout, and reproduces the sharing benchmark.

#include <unistd.h>

#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "rowshare/agent.hpp"
#include "rowshare/bench.hpp"
#include "rowshare/errors.hpp"
#include "rowshare/journal.hpp"
#include "rowshare/store.hpp"
#include "rowshare/sync_server.hpp"
#include "rowshare/sync_state.hpp"

namespace fs = std::filesystem;
using namespace rowshare;
using nlohmann::json;

namespace {

// Exit codes, one per failure family. Documented in the README.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;        // bad arguments, bad config, input errors
constexpr int kExitIntegrity = 3;    // authentication/integrity failures
constexpr int kExitAuth = 4;         // credentials or session rejected
constexpr int kExitNotFound = 5;     // unknown user/row/key
constexpr int kExitRevoked = 6;      // key affirmatively absent
constexpr int kExitTransport = 7;    // synchronizer unreachable, I/O failure
constexpr int kExitSchema = 8;       // malformed request relayed back
constexpr int kExitProtocol = 9;     // method unknown, frame too large, internal

int exit_code_for(const Error& e) {
  // The local error types ride on wire codes, so classify by dynamic type
  // first: a malformed local argument is usage, not a server schema reply.
  if (dynamic_cast<const InputError*>(&e) != nullptr) return kExitUsage;
  if (dynamic_cast<const AuthenticityError*>(&e) != nullptr) return kExitIntegrity;
  if (dynamic_cast<const EnvironmentError*>(&e) != nullptr) return kExitTransport;
  switch (e.code()) {
    case ErrorCode::kSignatureInvalid:
      return kExitIntegrity;
    case ErrorCode::kAuthFailed:
      return kExitAuth;
    case ErrorCode::kNotFound:
      return kExitNotFound;
    case ErrorCode::kAffirmativelyAbsent:
      return kExitRevoked;
    case ErrorCode::kSchemaError:
      return kExitSchema;
    default:
      return kExitProtocol;
  }
}

// --- Agent configuration file --------------------------------------------------

/// Reads an agent configuration: a JSON object with user_id, password,
/// identity, journal, host, port and on_revoked ("drop" or "retain").
/// Relative paths are resolved against the config file's directory.
agent::AgentConfig read_agent_config(const fs::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw EnvironmentError("cannot open config '" + config_path.string() + "'");
  json body = json::parse(in, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw InputError("config '" + config_path.string() + "' is not a JSON object");
  }
  fs::path base = config_path.parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  agent::AgentConfig config;
  try {
    config.user_id = body.at("user_id").get<std::string>();
    config.password = body.at("password").get<std::string>();
    config.identity_path = resolve(body.at("identity").get<std::string>());
    config.journal_path = resolve(body.at("journal").get<std::string>());
    config.server_host = body.value("host", std::string("127.0.0.1"));
    config.server_port = body.value("port", 0);
    std::string policy = body.value("on_revoked", std::string("drop"));
    if (policy == "drop") {
      config.on_revoked = journal::RevokedLinePolicy::kDrop;
    } else if (policy == "retain") {
      config.on_revoked = journal::RevokedLinePolicy::kRetain;
    } else {
      throw InputError("on_revoked must be 'drop' or 'retain', got '" + policy + "'");
    }
  } catch (const json::exception& e) {
    throw InputError("config '" + config_path.string() + "': " + e.what());
  }
  return config;
}

/// Appends every wire frame body as one line, so a scanner can grep the
/// traffic this process produced and consumed.
struct CaptureFile {
  std::ofstream out;

  explicit CaptureFile(const fs::path& path) : out(path, std::ios::app | std::ios::binary) {
    if (!out) throw EnvironmentError("cannot open capture file '" + path.string() + "'");
  }
  wire::WireClient::CaptureHook hook() {
    return [this](std::string_view body, bool outgoing) {
      out << (outgoing ? ">" : "<") << body << '\n';
      out.flush();
    };
  }
};

// --- Value and row parsing ------------------------------------------------------

/// A bare token becomes an integer when it parses completely as one,
/// otherwise a string. Matches the two value kinds of the statement dialect.
store::Value parse_value(const std::string& token) {
  std::int64_t n = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), n);
  if (ec == std::errc() && ptr == token.data() + token.size() && !token.empty()) {
    return n;
  }
  return token;
}

/// Builds a row from `field=value` tokens; the first token names the
/// primary key field.
store::Row row_from_tokens(const std::string& table, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw InputError("put needs at least one field=value token");
  store::Row row;
  row.table_name = table;
  for (const std::string& token : tokens) {
    std::size_t eq = token.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InputError("malformed field token '" + token + "' (want field=value)");
    }
    row.fields.push_back({token.substr(0, eq), parse_value(token.substr(eq + 1))});
  }
  row.primary_key = row.fields.front().value;
  return row;
}

// --- Synchronizer service -------------------------------------------------------

std::atomic<bool> g_stop{false};

void handle_stop_signal(int) { g_stop.store(true); }

int run_sync(const std::string& listen, std::uint16_t port, const fs::path& log_path,
             const fs::path& port_file) {
  sync::SyncState::Options state_options;
  state_options.log_path = log_path;
  sync::SyncState state(std::move(state_options));
  sync::SyncServer server(state, sync::SyncServer::Options{listen, port});
  server.start();

  if (!port_file.empty()) {
    journal::write_text_atomically(port_file, std::to_string(server.port()) + "\n");
  }
  std::cout << "listening " << listen << ":" << server.port() << std::endl;

  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  return kExitOk;
}

// --- Scripted agent session -----------------------------------------------------

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

/// One stdin line in, one stdout line out. Successful commands answer
/// "ok <micros> [payload]"; failures answer "err <code> <message>" and keep
/// the session alive. The session exits on "exit" or end of input.
class ScriptSession {
 public:
  ScriptSession(agent::AgentConfig config, bool auto_login)
      : config_(std::move(config)), auto_login_(auto_login) {}

  int run() {
    // Scripted sessions are programmatic drivers; they provision their own
    // identity instead of requiring a separate init step.
    if (!fs::exists(config_.identity_path)) {
      agent::Identity::create(config_.user_id).save(config_.identity_path);
    }
    agent_ = std::make_unique<agent::Agent>(config_);
    if (auto_login_) try_login();
    std::string line;
    while (std::getline(std::cin, line)) {
      std::vector<std::string> tokens = split_tokens(line);
      if (tokens.empty()) continue;
      if (tokens[0] == "exit") break;
      dispatch(tokens);
    }
    return kExitOk;
  }

 private:
  void try_login() {
    try {
      agent_->login();
    } catch (const Error&) {
      // Offline or not-yet-registered start is fine; an explicit `login`
      // command can connect later, and operations queue meanwhile.
    }
  }

  void reply_ok(std::int64_t micros, const std::string& payload = {}) {
    std::cout << "ok " << micros;
    if (!payload.empty()) std::cout << ' ' << payload;
    std::cout << std::endl;
  }

  void reply(const std::string& line) { std::cout << line << std::endl; }

  void dispatch(const std::vector<std::string>& tokens) {
    using clock = std::chrono::steady_clock;
    auto started = clock::now();
    auto micros = [&started] {
      return std::chrono::duration_cast<std::chrono::microseconds>(clock::now() - started)
          .count();
    };
    const std::string& cmd = tokens[0];
    try {
      if (cmd == "register") {
        agent_->register_account();
        reply_ok(micros());
      } else if (cmd == "login") {
        agent_->login();
        reply_ok(micros());
      } else if (cmd == "create-table") {
        need(tokens, 3, "create-table <table> <col>...");
        agent_->create_table(tokens[1], {tokens.begin() + 2, tokens.end()});
        reply_ok(micros());
      } else if (cmd == "put") {
        need(tokens, 3, "put <table> <field=value>...");
        auto sent =
            agent_->put(row_from_tokens(tokens[1], {tokens.begin() + 2, tokens.end()}));
        reply_ok(micros(), delivery_payload(sent));
      } else if (cmd == "grant") {
        need(tokens, 4, "grant <table> <pk> <receiver> [field...]");
        auto id = agent_->grant({tokens[1], parse_value(tokens[2])}, tokens[3],
                                {tokens.begin() + 4, tokens.end()});
        reply_ok(micros(), id ? std::to_string(*id) : "queued");
      } else if (cmd == "send") {
        need(tokens, 3, "send <table> <pk>");
        auto sent = agent_->send({tokens[1], parse_value(tokens[2])});
        reply_ok(micros(), delivery_payload(sent));
      } else if (cmd == "receive") {
        if (tokens.size() > 1 && tokens[1] == "crash-after-store") {
          agent_->after_store_hook = [] { raise(SIGKILL); };
        }
        std::size_t count = agent_->receive();
        agent_->after_store_hook = nullptr;
        reply_ok(micros(), std::to_string(count));
      } else if (cmd == "use") {
        need(tokens, 2, "use <id>");
        std::int64_t id = std::stoll(tokens[1]);
        agent::UseResult result = agent_->use(id);
        switch (result.status) {
          case agent::UseStatus::kOk:
            reply_ok(micros(), store::statement_for_row(*result.row));
            break;
          case agent::UseStatus::kRevoked:
            reply("revoked " + tokens[1]);
            break;
          case agent::UseStatus::kUnavailable:
            reply("unavailable " + tokens[1]);
            break;
        }
      } else if (cmd == "revoke") {
        need(tokens, 4, "revoke <table> <pk> <receiver>");
        agent_->revoke({tokens[1], parse_value(tokens[2])}, tokens[3]);
        reply_ok(micros());
      } else if (cmd == "save") {
        agent_->save();
        reply_ok(micros());
      } else if (cmd == "load") {
        journal::LoadReport report = agent_->load();
        reply_ok(micros(), load_payload(report));
      } else if (cmd == "list") {
        need(tokens, 2, "list <table>");
        std::string payload = std::to_string(agent_->list(tokens[1]).size());
        reply_ok(micros(), payload);
      } else if (cmd == "print") {
        need(tokens, 2, "print <table>");
        for (const store::Row& row : agent_->list(tokens[1])) {
          reply("row " + store::statement_for_row(row));
        }
        reply_ok(micros());
      } else if (cmd == "bench-populate") {
        need(tokens, 6, "bench-populate <table> <count> <start_pk> <bytes> <seed>");
        bench_populate(tokens[1], std::stoll(tokens[2]), std::stoll(tokens[3]),
                       std::stoi(tokens[4]), std::stoull(tokens[5]));
        reply_ok(micros());
      } else if (cmd == "bench-share") {
        need(tokens, 5, "bench-share <table> <count> <start_pk> <receiver>");
        bench_share(tokens[1], std::stoll(tokens[2]), std::stoll(tokens[3]), tokens[4]);
        reply_ok(micros());
      } else if (cmd == "bench-reopen") {
        journal::LoadReport report = bench_reopen();
        reply_ok(micros(), load_payload(report));
      } else {
        reply("err INPUT unknown command '" + cmd + "'");
      }
    } catch (const Error& e) {
      reply("err " + std::string(error_code_name(e.code())) + " " + e.what());
    }
  }

  static void need(const std::vector<std::string>& tokens, std::size_t count,
                   const char* usage) {
    if (tokens.size() < count) throw InputError(std::string("usage: ") + usage);
  }

  static std::string delivery_payload(const std::map<std::string, std::int64_t>& sent) {
    std::string payload;
    for (const auto& [receiver, id] : sent) {
      if (!payload.empty()) payload += ',';
      payload += receiver + ":" + std::to_string(id);
    }
    return payload.empty() ? "none" : payload;
  }

  static std::string load_payload(const journal::LoadReport& report) {
    return "plain=" + std::to_string(report.plain_loaded) +
           " shared=" + std::to_string(report.shared_loaded) +
           " revoked=" + std::to_string(report.revoked_ids.size()) +
           " unreachable=" + std::to_string(report.shared_retained_unreachable) +
           " quarantined=" + std::to_string(report.quarantined);
  }

  void bench_populate(const std::string& table, std::int64_t count, std::int64_t start_pk,
                      int bytes, std::uint64_t seed) {
    bench::DossierShape shape = bench::DossierShape::for_bytes(bytes);
    for (std::int64_t i = 0; i < count; ++i) {
      agent_->put(shape.row(table, start_pk + i, seed));
    }
  }

  void bench_share(const std::string& table, std::int64_t count, std::int64_t start_pk,
                   const std::string& receiver) {
    std::vector<std::string> all_fields = bench::DossierShape{}.column_names();
    for (std::int64_t i = 0; i < count; ++i) {
      agent_->grant({table, start_pk + i}, receiver, all_fields);
    }
  }

  /// Closes the store to its journal and opens it again the way a database
  /// shutdown/startup pair would: checkpoint, drop the process state,
  /// reconnect, reload. Session caches die with the old agent, so every
  /// shared row's key is fetched and used exactly once by the reload.
  /// The login is deliberately strict when a server is configured: a reload
  /// that silently failed to resolve keys would not measure anything.
  journal::LoadReport bench_reopen() {
    agent_->save();
    agent_.reset();
    agent_ = std::make_unique<agent::Agent>(config_);
    if (config_.server_port != 0) agent_->login();
    return agent_->load();
  }

  agent::AgentConfig config_;
  bool auto_login_;
  std::unique_ptr<agent::Agent> agent_;
};

// --- One-shot agent operations --------------------------------------------------

int run_agent_op(const fs::path& config_path, const std::string& op,
                 const std::vector<std::string>& args, const fs::path& capture_path,
                 bool crash_after_store) {
  agent::AgentConfig config = read_agent_config(config_path);

  if (op == "init-identity") {
    if (fs::exists(config.identity_path)) {
      throw InputError("identity file '" + config.identity_path.string() + "' already exists");
    }
    agent::Identity::create(config.user_id).save(config.identity_path);
    std::cout << "ok " << config.user_id << std::endl;
    return kExitOk;
  }

  std::unique_ptr<CaptureFile> capture;
  if (!capture_path.empty()) {
    capture = std::make_unique<CaptureFile>(capture_path);
    config.capture = capture->hook();
  }

  agent::Agent agent(config);

  if (op == "register") {
    agent.register_account();
    std::cout << "ok registered " << agent.user_id() << std::endl;
    return kExitOk;
  }

  // Everything else works on the journal: read it in without decrypting
  // (keys resolve on demand), run the operation, write it back out.
  const bool resolve_keys = (op == "list" || op == "load");
  if (!resolve_keys && fs::exists(config.journal_path)) agent.load();
  try {
    agent.login();
  } catch (const EnvironmentError&) {
    if (op == "receive" || op == "use" || op == "load" || op == "list") throw;
    // put/grant/send/revoke queue while offline; save/create-table are local.
  }
  if (resolve_keys && fs::exists(config.journal_path)) agent.load();

  if (op == "create-table") {
    if (args.size() < 2) throw InputError("usage: create-table <table> <col>...");
    agent.create_table(args[0], {args.begin() + 1, args.end()});
  } else if (op == "put") {
    if (args.size() < 2) throw InputError("usage: put <table> <field=value>...");
    auto sent = agent.put(row_from_tokens(args[0], {args.begin() + 1, args.end()}));
    for (const auto& [receiver, id] : sent) {
      std::cout << "sent " << receiver << " " << id << '\n';
    }
  } else if (op == "grant") {
    if (args.size() < 3) throw InputError("usage: grant <table> <pk> <receiver> [field...]");
    auto id = agent.grant({args[0], parse_value(args[1])}, args[2],
                          {args.begin() + 3, args.end()});
    std::cout << (id ? "granted " + std::to_string(*id) : std::string("queued")) << '\n';
  } else if (op == "send") {
    if (args.size() < 2) throw InputError("usage: send <table> <pk>");
    auto sent = agent.send({args[0], parse_value(args[1])});
    for (const auto& [receiver, id] : sent) {
      std::cout << "sent " << receiver << " " << id << '\n';
    }
  } else if (op == "receive") {
    if (crash_after_store) {
      agent.after_store_hook = [] { raise(SIGKILL); };
    }
    std::cout << agent.receive() << '\n';
  } else if (op == "use") {
    if (args.size() != 1) throw InputError("usage: use <id>");
    std::int64_t id = std::stoll(args[0]);
    agent::UseResult result = agent.use(id);
    if (result.status == agent::UseStatus::kRevoked) {
      agent.save();
      std::cout << "revoked " << id << std::endl;
      return kExitRevoked;
    }
    if (result.status == agent::UseStatus::kUnavailable) {
      std::cout << "unavailable " << id << std::endl;
      return kExitTransport;
    }
    std::cout << store::statement_for_row(*result.row) << '\n';
  } else if (op == "revoke") {
    if (args.size() != 3) throw InputError("usage: revoke <table> <pk> <receiver>");
    agent.revoke({args[0], parse_value(args[1])}, args[2]);
    std::cout << "ok" << '\n';
  } else if (op == "load") {
    // The load already happened above; nothing more to do.
  } else if (op == "list") {
    if (args.size() != 1) throw InputError("usage: list <table>");
    for (const store::Row& row : agent.list(args[0])) {
      std::cout << store::statement_for_row(row) << '\n';
    }
  } else if (op == "save") {
    // The save below covers it.
  } else {
    throw InputError("unknown agent operation '" + op + "'");
  }

  agent.save();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  // A peer that hangs up must surface as an I/O error, not kill the process.
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"rowshare: private row-level sharing through an untrusted synchronizer"};
  app.require_subcommand(1);

  // sync ------------------------------------------------------------------
  auto* sync_cmd = app.add_subcommand("sync", "run the synchronizer service");
  std::string listen = "127.0.0.1";
  std::uint16_t port = 0;
  std::string log_path;
  std::string port_file;
  sync_cmd->add_option("--listen", listen, "address to bind");
  sync_cmd->add_option("--port", port, "port to bind (0 = ephemeral)");
  sync_cmd->add_option("--log", log_path, "event log path (empty = in-memory only)");
  sync_cmd->add_option("--port-file", port_file, "write the bound port to this file");

  // agent -----------------------------------------------------------------
  auto* agent_cmd = app.add_subcommand("agent", "run one agent operation");
  std::string agent_config_path;
  std::string capture_path;
  std::string agent_op;
  std::vector<std::string> agent_args;
  bool crash_after_store = false;
  agent_cmd->add_option("--config", agent_config_path, "agent config file")->required();
  agent_cmd->add_option("--capture-file", capture_path,
                        "append every wire frame body to this file");
  agent_cmd->add_flag("--crash-after-store", crash_after_store,
                      "kill the process after receive() stores rows, before it "
                      "acknowledges them (crash testing)");
  agent_cmd->add_option("op", agent_op,
                        "init-identity | register | create-table | put | grant | send | "
                        "receive | use | revoke | save | load | list")
      ->required();
  agent_cmd->add_option("args", agent_args, "operation arguments");

  // script ----------------------------------------------------------------
  auto* script_cmd = app.add_subcommand(
      "script", "drive one agent with line commands on stdin (one reply line each)");
  std::string script_config_path;
  std::string script_capture_path;
  bool script_no_login = false;
  script_cmd->add_option("--config", script_config_path, "agent config file")->required();
  script_cmd->add_option("--capture-file", script_capture_path,
                         "append every wire frame body to this file");
  script_cmd->add_flag("--no-login", script_no_login, "do not connect at startup");

  // bench -----------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "reproduce the sharing benchmark");
  bench::BenchConfig bench_config;
  std::vector<int> bench_n = {1000, 5000, 10000, 50000, 100000};
  std::vector<int> bench_pct = {20, 40};
  std::string bench_csv = "bench.csv";
  std::string bench_workdir;
  bench_cmd->add_option("--n", bench_n, "dossier counts to sweep");
  bench_cmd->add_option("--pct", bench_pct, "shared percentages to sweep");
  bench_cmd->add_option("--clients", bench_config.n_clients, "number of clients (2 supported)");
  bench_cmd->add_option("--size", bench_config.dossier_bytes, "approximate dossier bytes");
  bench_cmd->add_option("--reps", bench_config.repetitions,
                        "measured repetitions (after one discarded warm-up)");
  bench_cmd->add_option("--seed", bench_config.seed, "content seed");
  bench_cmd->add_option("--csv", bench_csv, "output CSV path");
  bench_cmd->add_option("--workdir", bench_workdir,
                        "scratch directory (default: a fresh temp dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sync_cmd->parsed()) {
      return run_sync(listen, port, log_path, port_file);
    }
    if (agent_cmd->parsed()) {
      return run_agent_op(agent_config_path, agent_op, agent_args, capture_path,
                          crash_after_store);
    }
    if (script_cmd->parsed()) {
      agent::AgentConfig config = read_agent_config(script_config_path);
      std::unique_ptr<CaptureFile> capture;
      if (!script_capture_path.empty()) {
        capture = std::make_unique<CaptureFile>(script_capture_path);
        config.capture = capture->hook();
      }
      return ScriptSession(std::move(config), !script_no_login).run();
    }
    if (bench_cmd->parsed()) {
      bench_config.n_dossiers = bench_n;
      bench_config.pct_shared = bench_pct;
      bench_config.output_csv = bench_csv;
      bench_config.workdir = bench_workdir;
      bench_config.binary = fs::canonical("/proc/self/exe");
      bench::BenchResult result = bench::run_benchmark(bench_config);
      bench::write_csv(result, bench_config.output_csv);
      std::cout << bench::summary(result);
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  }
  return kExitUsage;
}
