#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>

#include "qkd/channel.hpp"
#include "qkd/eve.hpp"
#include "qkd/photonics.hpp"

namespace qkd {

/// Carries Alice's prepared pulses to Bob's front end. This is a stand-in
/// for the free-space link and is not part of any security argument.
class QuantumLink {
  public:
    virtual ~QuantumLink() = default;
    virtual void transmit(std::uint64_t burst_id, std::shared_ptr<const TxBurst> tx) = 0;
    /// The pulses of `burst_id` as they enter the channel. Only the pulse
    /// records are meaningful at the receiving end.
    virtual std::shared_ptr<const TxBurst> arrive(std::uint64_t burst_id,
                                                  std::chrono::milliseconds timeout) = 0;
};

/// Both terminals in one process: the burst is handed over by pointer.
class InProcessLink final : public QuantumLink {
  public:
    void transmit(std::uint64_t burst_id, std::shared_ptr<const TxBurst> tx) override;
    std::shared_ptr<const TxBurst> arrive(std::uint64_t burst_id,
                                          std::chrono::milliseconds timeout) override;

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::uint64_t, std::shared_ptr<const TxBurst>> pending_;
};

/// Pulses serialized as SIM_PULSESTREAM chunks over a dedicated channel.
/// One byte per pulse: bit 0 basis, bit 1 value, bits 2..7 photon number
/// (saturating at 63).
class StreamLink final : public QuantumLink {
  public:
    static constexpr std::uint32_t kChunkPulses = 1U << 20;

    explicit StreamLink(MessageChannel& channel) : channel_(channel) {}

    void transmit(std::uint64_t burst_id, std::shared_ptr<const TxBurst> tx) override;
    std::shared_ptr<const TxBurst> arrive(std::uint64_t burst_id,
                                          std::chrono::milliseconds timeout) override;

  private:
    MessageChannel& channel_;
};

std::uint8_t pack_pulse(const PulseRecord& p) noexcept;
PulseRecord unpack_pulse(std::uint8_t byte, std::uint32_t index) noexcept;

/// Alice's burst for `burst_id`, drawn from the stream "alice/tx/burst-<id>".
TxBurst prepare_burst(const SimConfig& cfg, std::uint64_t burst_id);

/// Channel, optional intercept-resend and detection as seen at Bob's
/// terminal. Streams are keyed by burst id so in-process and networked
/// runs detect identically.
/// `eve_log`, when given, receives the eavesdropper's measurements.
RxBurst detect_burst(const TxBurst& tx, const SimConfig& cfg, std::uint64_t burst_id,
                     EveLog* eve_log = nullptr);

}  // namespace qkd
