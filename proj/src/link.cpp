#include "qkd/link.hpp"

#include <algorithm>
#include <optional>
#include <string>

#include "qkd/eve.hpp"

namespace qkd {

void InProcessLink::transmit(std::uint64_t burst_id, std::shared_ptr<const TxBurst> tx) {
    {
        std::lock_guard lock(mutex_);
        pending_[burst_id] = std::move(tx);
    }
    cv_.notify_all();
}

std::shared_ptr<const TxBurst> InProcessLink::arrive(std::uint64_t burst_id,
                                                     std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return pending_.count(burst_id) != 0; })) {
        throw TimeoutError("no pulses arrived for burst " + std::to_string(burst_id));
    }
    auto node = pending_.extract(burst_id);
    return std::move(node.mapped());
}

std::uint8_t pack_pulse(const PulseRecord& p) noexcept {
    const unsigned photons = std::min<unsigned>(p.photon_count, 63);
    return static_cast<std::uint8_t>((photons << 2) | ((p.bit & 1U) << 1) |
                                     static_cast<unsigned>(p.basis));
}

PulseRecord unpack_pulse(std::uint8_t byte, std::uint32_t index) noexcept {
    PulseRecord p;
    p.frame_index = index;
    p.basis = static_cast<Basis>(byte & 1U);
    p.bit = (byte >> 1) & 1U;
    p.photon_count = byte >> 2;
    return p;
}

void StreamLink::transmit(std::uint64_t burst_id, std::shared_ptr<const TxBurst> tx) {
    const auto total = static_cast<std::uint32_t>(tx->pulses.size());
    std::uint32_t first = 0;
    do {
        const std::uint32_t count = std::min(kChunkPulses, total - first);
        PayloadWriter w;
        w.u64(burst_id).u32(total).u32(first).u32(count);
        std::vector<std::uint8_t> body(count);
        for (std::uint32_t i = 0; i < count; ++i) body[i] = pack_pulse(tx->pulses[first + i]);
        w.bytes(body);
        channel_.send(std::move(w).into(MsgType::SimPulseStream));
        first += count;
    } while (first < total);
}

std::shared_ptr<const TxBurst> StreamLink::arrive(std::uint64_t burst_id,
                                                  std::chrono::milliseconds timeout) {
    auto tx = std::make_shared<TxBurst>();
    std::optional<std::uint32_t> total;
    std::uint32_t received = 0;
    while (!total || received < *total) {
        const Message m = channel_.receive(timeout);
        if (m.type != MsgType::SimPulseStream) {
            throw ProtocolError(std::string("expected SIM_PULSESTREAM, got ") + to_string(m.type));
        }
        PayloadReader r(m.payload);
        const std::uint64_t id = r.u64();
        const std::uint32_t chunk_total = r.u32();
        const std::uint32_t first = r.u32();
        const std::uint32_t count = r.u32();
        if (id != burst_id) throw ProtocolError("pulse stream for unexpected burst");
        if (total && *total != chunk_total) throw ProtocolError("pulse stream total changed");
        if (first != received || count > chunk_total - first) {
            throw ProtocolError("pulse stream chunk out of order");
        }
        if (!total) {
            total = chunk_total;
            tx->pulses.reserve(chunk_total);
        }
        const auto body = r.bytes(count);
        r.expect_end();
        for (std::uint32_t i = 0; i < count; ++i) tx->pulses.push_back(unpack_pulse(body[i], first + i));
        received += count;
        if (count == 0 && received < *total) throw ProtocolError("empty pulse stream chunk");
    }
    return tx;
}

TxBurst prepare_burst(const SimConfig& cfg, std::uint64_t burst_id) {
    RandomStream rng(cfg.rng_seed, "alice/tx/burst-" + std::to_string(burst_id));
    return generate_burst(cfg, rng);
}

RxBurst detect_burst(const TxBurst& tx, const SimConfig& cfg, std::uint64_t burst_id,
                     EveLog* eve_log) {
    const std::string suffix = "/burst-" + std::to_string(burst_id);
    RandomStream channel_rng(cfg.rng_seed, "channel" + suffix);
    std::optional<InterceptResend> eve;
    if (cfg.eve_enabled) {
        eve.emplace(RandomStream(cfg.rng_seed, "eve" + suffix), cfg.eve_fraction, eve_log != nullptr);
    }
    RxBurst rx = transmit_and_detect(tx, cfg, eve ? &*eve : nullptr, channel_rng);
    if (eve && eve_log) *eve_log = eve->log();
    return rx;
}

}  // namespace qkd
