#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/channel.hpp"
#include "qkd/core.hpp"
#include "qkd/keystore.hpp"
#include "qkd/link.hpp"
#include "qkd/timing.hpp"

namespace qkd {

enum class Role : std::uint8_t { Alice, Bob };

enum class Phase : std::uint8_t {
    Idle,
    Handshake,
    QubitExchange,
    FrameSync,
    Sifting,
    QberCheck,
    ErrorCorrection,
    PrivacyAmplification,
    KeyReady,
    Aborted,
};

enum class AbortReason : std::uint8_t {
    None = 0,
    EveSuspected = 1,   // QBER above the abort threshold
    NoLock = 2,         // frame offset search found no usable minimum
    BurstRejected = 3,  // keys still differ after reconciliation
    Timeout = 4,
    Transport = 5,
    Protocol = 6,
};

const char* to_string(Role r) noexcept;
const char* to_string(Phase p) noexcept;
const char* to_string(AbortReason r) noexcept;

/// True for aborts after which the session can run another burst.
constexpr bool is_recoverable(AbortReason r) noexcept {
    return r == AbortReason::EveSuspected || r == AbortReason::NoLock ||
           r == AbortReason::BurstRejected;
}

/// Per-burst phase tracker. Illegal transitions throw std::logic_error.
class BurstState {
  public:
    Phase phase() const noexcept { return phase_; }

    static bool can_advance(Phase from, Phase to) noexcept;
    static bool can_abort(Phase from, AbortReason reason) noexcept;

    void advance(Phase next);
    void abort(AbortReason reason);

    /// Reason of the last abort; None before any.
    AbortReason last_abort() const noexcept { return reason_; }

  private:
    Phase phase_ = Phase::Idle;
    AbortReason reason_ = AbortReason::None;
};

struct BurstStats {
    std::uint64_t burst_id = 0;
    double burst_seconds = 1.0;
    std::uint64_t pulses = 0;
    std::uint64_t detections = 0;      // Bob only
    std::uint64_t matched = 0;         // NNC matches outside the sync subset
    std::uint64_t sifted_bits = 0;
    std::uint64_t sample_bits = 0;
    double qber = 0.0;
    std::int64_t offset_frames = 0;
    int central_bin = 0;
    FifoChoice fifo = FifoChoice::Fifo1;
    double interim_qber = 0.0;
    int winnow_passes = 0;
    std::uint64_t corrections = 0;     // Bob only
    std::uint64_t disclosed_bits = 0;  // parities, syndromes and hash
    std::uint64_t secure_bits = 0;
    /// Simulator ground truth, available to Bob only.
    std::optional<bool> sync_matches_truth;
    double elapsed_s = 0.0;

    double sifted_rate() const noexcept { return static_cast<double>(sifted_bits) / burst_seconds; }
    double secure_rate() const noexcept { return static_cast<double>(secure_bits) / burst_seconds; }
};

struct BurstOutcome {
    bool aborted = false;
    AbortReason reason = AbortReason::None;
    Phase aborted_in = Phase::Idle;
    std::string detail;
    BurstStats stats;
    Bits key;  // bits appended to the key store by this burst
};

/// Raised when the peer reports an abort.
class PeerAbort : public std::runtime_error {
  public:
    PeerAbort(AbortReason reason, const std::string& detail);
    AbortReason reason() const noexcept { return reason_; }

  private:
    AbortReason reason_;
};

/// One end of the link: runs the per-burst pipeline over a classical
/// channel and a quantum link, appending distilled key to `keys`.
class Terminal {
  public:
    Terminal(Role role, SimConfig cfg, MessageChannel& channel, QuantumLink& link, KeyStore& keys);

    /// HELLO exchange. Alice sends her configuration and Bob adopts it; an
    /// eavesdropper enabled on either side stays enabled.
    void handshake();

    /// Runs burst `burst_id`. Protocol aborts are returned in the outcome;
    /// after a fault (timeout, transport, protocol error) the terminal is
    /// unusable and later calls return the same abort.
    BurstOutcome run_burst(std::uint64_t burst_id);

    Role role() const noexcept { return role_; }
    const SimConfig& config() const noexcept { return cfg_; }
    Phase phase() const noexcept { return state_.phase(); }
    bool failed() const noexcept { return failed_.has_value(); }

  private:
    Message expect(MsgType type);
    void run_alice(std::uint64_t burst_id, BurstOutcome& out);
    void run_bob(std::uint64_t burst_id, BurstOutcome& out);
    void send_abort(AbortReason reason, const std::string& detail) noexcept;
    std::chrono::milliseconds timeout() const;
    RandomStream stream(const std::string& what, std::uint64_t burst_id) const;

    Role role_;
    SimConfig cfg_;
    MessageChannel& channel_;
    QuantumLink& link_;
    KeyStore& keys_;
    BurstState state_;
    Bits carry_;
    std::optional<BurstOutcome> failed_;
};

using BurstCallback = std::function<void(const BurstOutcome& alice, const BurstOutcome& bob)>;

struct SessionResult {
    std::vector<BurstOutcome> alice;
    std::vector<BurstOutcome> bob;
    KeyBuffer alice_key;
    KeyBuffer bob_key;

    bool any_aborted() const noexcept;
};

/// Both terminals on separate threads joined by an in-memory channel. Runs
/// `bursts` bursts, stopping early only after a fault.
SessionResult simulate_in_process(const SimConfig& cfg, int bursts,
                                  const BurstCallback& on_burst = {});

/// Runs bursts 0..bursts-1 on an already handshaken terminal, stopping
/// early only after a fault.
std::vector<BurstOutcome> run_bursts(Terminal& terminal, int bursts,
                                     const std::function<void(const BurstOutcome&)>& on_burst = {});

inline constexpr std::uint16_t kDefaultPort = 47000;

/// TCP endpoints of one terminal: the classical channel on port P and the
/// simulation-only pulse stream on P + 1.
class NetworkEndpoint {
  public:
    /// Alice: listens on both ports and accepts one peer.
    static NetworkEndpoint listen(std::uint16_t port, std::chrono::milliseconds timeout,
                                  const std::string& bind_address = "0.0.0.0");
    /// Bob: connects to both ports, retrying until `timeout`.
    static NetworkEndpoint connect(const std::string& host, std::uint16_t port,
                                   std::chrono::milliseconds timeout);

    MessageChannel& classical() noexcept { return *classical_; }
    QuantumLink& quantum() noexcept { return *quantum_; }
    void close();

  private:
    std::unique_ptr<TcpChannel> classical_;
    std::unique_ptr<TcpChannel> pulses_;
    std::unique_ptr<StreamLink> quantum_;
};

}  // namespace qkd
