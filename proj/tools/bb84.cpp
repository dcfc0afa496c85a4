// Command-line front end: link budget estimates, in-process simulation and
// the two-terminal networked deployment with OTP chat.

#include <atomic>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "qkd/analysis.hpp"
#include "qkd/eve.hpp"
#include "qkd/report.hpp"
#include "qkd/securecomm.hpp"
#include "qkd/session.hpp"

using namespace qkd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAbort = 2;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int bursts = 1;
    bool eve = false;
    std::string out_path;
};

void add_config_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "key=value configuration file");
    cmd->add_option("--set", o.overrides, "override one setting, e.g. --set link.distance_m=750");
}

void add_run_options(CLI::App* cmd, CommonOptions& o) {
    add_config_options(cmd, o);
    cmd->add_option("--seed", o.seed, "master random seed");
    cmd->add_option("--bursts", o.bursts, "number of 1-s bursts")->check(CLI::PositiveNumber);
    cmd->add_flag("--eve", o.eve, "enable the intercept-resend eavesdropper");
    cmd->add_option("--out", o.out_path, "per-burst CSV report");
}

SimConfig build_config(const CommonOptions& o) {
    SimConfig cfg = o.config_path.empty() ? default_config() : load_config_file(o.config_path);
    for (const std::string& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) cfg.rng_seed = *o.seed;
    if (o.eve) cfg.eve_enabled = true;
    validate(cfg);
    return cfg;
}

void log_burst(const char* role, const BurstOutcome& o) {
    const BurstStats& s = o.stats;
    std::vector<std::pair<std::string, std::string>> f = {
        {"role", role},
        {"burst", std::to_string(s.burst_id)},
        {"status", o.aborted ? "aborted" : "key_appended"},
        {"sifted_bits", std::to_string(s.sifted_bits)},
        {"qber", format_double(s.qber, 5)},
        {"secure_bits", std::to_string(s.secure_bits)},
        {"offset_frames", std::to_string(s.offset_frames)},
        {"fifo", std::to_string(static_cast<int>(s.fifo))},
        {"elapsed_s", format_double(s.elapsed_s, 4)},
    };
    if (o.aborted) {
        f.emplace_back("reason", to_string(o.reason));
        f.emplace_back("phase", to_string(o.aborted_in));
        f.emplace_back("detail", o.detail);
    }
    log_kv(std::cerr, "burst", f);
}

class ReportSink {
  public:
    explicit ReportSink(const std::string& path) {
        if (path.empty()) return;
        file_.open(path, std::ios::trunc);
        if (!file_) throw std::runtime_error("cannot write report to " + path);
        write_report_header(file_);
    }

    void add(const BurstOutcome& o) {
        const ReportRow row = make_row(o);
        report_.add(row);
        if (file_.is_open()) write_report_row(file_, row);
    }

    const RunReport& report() const noexcept { return report_; }

  private:
    std::ofstream file_;
    RunReport report_;
};

void log_summary(const RunReport& r) {
    log_kv(std::cerr, "summary",
           {{"bursts", std::to_string(r.rows.size())},
            {"aborted", std::to_string(r.aborted())},
            {"mean_sifted_kbps", format_double(r.mean_sifted_kbps(), 6)},
            {"mean_secure_kbps", format_double(r.mean_secure_kbps(), 6)},
            {"mean_qber", format_double(r.mean_qber(), 5)}});
}

int cmd_estimate(const CommonOptions& o, std::optional<double> distance) {
    SimConfig cfg = build_config(o);
    if (distance) cfg.link.distance_m = *distance;
    print_rate_table(std::cout, cfg.link, estimate_rates(cfg.link));
    return kExitOk;
}

int cmd_sweep(const CommonOptions& o, double from, double to, double step) {
    const SimConfig cfg = build_config(o);
    const auto grid = distance_grid(from, to, step);
    const auto points = distance_sweep(cfg.link, grid);
    if (o.out_path.empty()) {
        write_sweep_csv(std::cout, points);
    } else {
        std::ofstream f(o.out_path);
        if (!f) throw std::runtime_error("cannot write " + o.out_path);
        write_sweep_csv(f, points);
    }
    return kExitOk;
}

int cmd_simulate(const CommonOptions& o, const std::string& eve_log_path) {
    const SimConfig cfg = build_config(o);
    log_kv(std::cerr, "simulate",
           {{"seed", std::to_string(cfg.rng_seed)},
            {"bursts", std::to_string(o.bursts)},
            {"eve", cfg.eve_enabled ? "1" : "0"}});
    ReportSink sink(o.out_path);
    const SessionResult r =
        simulate_in_process(cfg, o.bursts, [&](const BurstOutcome& a, const BurstOutcome& b) {
            log_burst("alice", a);
            log_burst("bob", b);
            sink.add(b);
        });
    log_summary(sink.report());
    if (!eve_log_path.empty() && cfg.eve_enabled) {
        EveLog log;
        detect_burst(prepare_burst(cfg, 0), cfg, 0, &log);
        std::ofstream f(eve_log_path);
        if (!f) throw std::runtime_error("cannot write " + eve_log_path);
        write_eve_log_csv(f, log);
    }
    if (!(r.alice_key == r.bob_key)) {
        log_kv(std::cerr, "error", {{"detail", "key buffers differ"}});
        return kExitAbort;
    }
    return r.any_aborted() ? kExitAbort : kExitOk;
}

std::chrono::milliseconds connect_timeout(const SimConfig& cfg) {
    return std::chrono::milliseconds(static_cast<long long>(cfg.phase_timeout_s * 1000.0));
}

struct NetworkedRun {
    NetworkEndpoint endpoint;
    std::unique_ptr<Terminal> terminal;
    KeyStore keys;
    RunReport report;
    bool aborted = false;
};

std::unique_ptr<NetworkedRun> run_networked(Role role, const CommonOptions& o, std::uint16_t port,
                                            const std::string& host) {
    const SimConfig cfg = build_config(o);
    auto run = std::make_unique<NetworkedRun>();
    log_kv(std::cerr, role == Role::Alice ? "listen" : "connect",
           {{"host", role == Role::Alice ? "0.0.0.0" : host}, {"port", std::to_string(port)}});
    run->endpoint = role == Role::Alice ? NetworkEndpoint::listen(port, connect_timeout(cfg))
                                        : NetworkEndpoint::connect(host, port, connect_timeout(cfg));
    run->terminal = std::make_unique<Terminal>(role, cfg, run->endpoint.classical(),
                                               run->endpoint.quantum(), run->keys);
    run->terminal->handshake();
    ReportSink sink(o.out_path);
    const auto outcomes = run_bursts(*run->terminal, o.bursts, [&](const BurstOutcome& b) {
        log_burst(to_string(role), b);
        sink.add(b);
    });
    run->report = sink.report();
    log_summary(run->report);
    for (const auto& b : outcomes) run->aborted = run->aborted || b.aborted;
    if (outcomes.size() < static_cast<std::size_t>(o.bursts)) run->aborted = true;
    return run;
}

int cmd_terminal(Role role, const CommonOptions& o, std::uint16_t port, const std::string& host) {
    auto run = run_networked(role, o, port, host);
    log_kv(std::cerr, "keys", {{"bits", std::to_string(run->keys.size())}});
    run->endpoint.close();
    return run->aborted ? kExitAbort : kExitOk;
}

int cmd_chat(Role role, const CommonOptions& o, std::uint16_t port, const std::string& host,
             const std::string& send_file, const std::string& recv_file) {
    auto run = run_networked(role, o, port, host);
    if (run->aborted) return kExitAbort;
    MessageChannel& ch = run->endpoint.classical();
    const auto wait = connect_timeout(run->terminal->config());
    const ChatHandshakeResult hs = chat_handshake(ch, run->keys, wait);
    log_kv(std::cerr, "chat_established",
           {{"parity", std::to_string(hs.parity)}, {"key_bits", std::to_string(run->keys.size())}});
    ChatSession chat(ch, run->keys, role, hs.lane_base, wait);

    std::ofstream sink;
    if (!recv_file.empty()) {
        sink.open(recv_file, std::ios::binary | std::ios::trunc);
        if (!sink) throw std::runtime_error("cannot write " + recv_file);
    }
    std::thread reader([&] {
        try {
            for (;;) {
                const auto data = chat.receive(std::chrono::hours(24));
                if (sink.is_open()) {
                    sink.write(reinterpret_cast<const char*>(data.data()),
                               static_cast<std::streamsize>(data.size()));
                    sink.flush();
                } else {
                    std::cout << "peer> " << std::string(data.begin(), data.end()) << std::endl;
                }
            }
        } catch (const TransportError&) {
        } catch (const std::exception& e) {
            log_kv(std::cerr, "chat_error", {{"detail", e.what()}});
        }
    });

    int rc = kExitOk;
    try {
        if (!send_file.empty()) {
            std::ifstream in(send_file, std::ios::binary);
            if (!in) throw std::runtime_error("cannot read " + send_file);
            std::vector<std::uint8_t> chunk(4096);
            while (in) {
                in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
                const auto got = static_cast<std::size_t>(in.gcount());
                if (got == 0) break;
                chat.send(std::span(chunk.data(), got));
            }
        } else {
            std::string line;
            while (std::getline(std::cin, line)) {
                chat.send(std::span(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()));
            }
        }
    } catch (const InsufficientKey& e) {
        log_kv(std::cerr, "chat_error", {{"detail", e.what()}});
        rc = kExitAbort;
    }
    log_kv(std::cerr, "chat_closed", {{"sent_key_bits", std::to_string(chat.sent_key_bits())}});
    // The peer's reader ends after our last frame; ours ends after theirs.
    ch.close_send();
    reader.join();
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BB84 weak-coherent-pulse QKD simulator and two-terminal protocol engine"};
    app.require_subcommand(1);
    CommonOptions o;

    auto* estimate = app.add_subcommand("estimate", "print the analytic key rate table");
    add_config_options(estimate, o);
    std::optional<double> distance;
    estimate->add_option("--distance", distance, "link distance in meters");

    auto* sweep = app.add_subcommand("sweep", "secure key rate versus distance as CSV");
    add_config_options(sweep, o);
    double from = 0, to = 3000, step = 50;
    sweep->add_option("--from", from, "first distance (m)")->capture_default_str();
    sweep->add_option("--to", to, "last distance (m)")->capture_default_str();
    sweep->add_option("--step", step, "distance step (m)")->capture_default_str();
    sweep->add_option("--out", o.out_path, "write CSV here instead of stdout");

    auto* simulate = app.add_subcommand("simulate", "run both terminals in one process");
    add_run_options(simulate, o);
    std::string eve_log;
    simulate->add_option("--eve-log", eve_log, "CSV of the eavesdropper's measurements (first burst)");

    std::uint16_t port = kDefaultPort;
    std::string connect;
    auto* alice = app.add_subcommand("alice", "transmitting terminal");
    add_run_options(alice, o);
    alice->add_option("--listen", port, "classical channel port (pulse stream uses port + 1)")
        ->expected(0, 1)
        ->default_val(kDefaultPort);

    auto* bob = app.add_subcommand("bob", "receiving terminal");
    add_run_options(bob, o);
    bob->add_option("--connect", connect, "host:port of the transmitting terminal")->required();

    auto* chat = app.add_subcommand("chat", "generate key, then OTP-encrypted chat");
    add_run_options(chat, o);
    std::string send_file, recv_file;
    auto* chat_listen = chat->add_option("--listen", port, "act as the transmitting terminal on this port")
                            ->expected(0, 1)
                            ->default_val(kDefaultPort);
    auto* chat_connect = chat->add_option("--connect", connect, "act as the receiving terminal");
    chat_listen->excludes(chat_connect);
    chat->add_option("--send-file", send_file, "send this file instead of reading lines from stdin");
    chat->add_option("--recv-file", recv_file, "write received payloads here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*estimate) return cmd_estimate(o, distance);
        if (*sweep) return cmd_sweep(o, from, to, step);
        if (*simulate) return cmd_simulate(o, eve_log);
        if (*alice) return cmd_terminal(Role::Alice, o, port, "");
        if (*bob) {
            const auto [host, p] = parse_host_port(connect);
            return cmd_terminal(Role::Bob, o, p, host);
        }
        if (*chat) {
            if (chat_connect->count() > 0) {
                const auto [host, p] = parse_host_port(connect);
                return cmd_chat(Role::Bob, o, p, host, send_file, recv_file);
            }
            if (chat_listen->count() == 0) throw CLI::RequiredError("--listen or --connect");
            return cmd_chat(Role::Alice, o, port, "", send_file, recv_file);
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        log_kv(std::cerr, "usage_error", {{"detail", e.what()}});
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        log_kv(std::cerr, "usage_error", {{"detail", e.what()}});
        return kExitUsage;
    } catch (const std::exception& e) {
        log_kv(std::cerr, "session_error", {{"detail", e.what()}});
        return kExitAbort;
    }
    return kExitUsage;
}
