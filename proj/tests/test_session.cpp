#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <set>
#include <future>
#include <sstream>
#include <thread>

#include "qkd/session.hpp"

using namespace qkd;
using namespace std::chrono_literals;

namespace {

SimConfig small_config(std::uint64_t seed) {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.05;
    cfg.rng_seed = seed;
    cfg.phase_timeout_s = 10;
    return cfg;
}

struct PairRun {
    std::vector<BurstOutcome> alice, bob;
};

PairRun run_pair(const SimConfig& cfg, MessageChannel& ca, MessageChannel& cb, QuantumLink& la,
                 QuantumLink& lb, KeyStore& ka, KeyStore& kb, int bursts) {
    Terminal alice(Role::Alice, cfg, ca, la, ka);
    Terminal bob(Role::Bob, default_config(), cb, lb, kb);
    PairRun r;
    auto fa = std::async(std::launch::async, [&] {
        alice.handshake();
        return run_bursts(alice, bursts);
    });
    bob.handshake();
    r.bob = run_bursts(bob, bursts);
    r.alice = fa.get();
    return r;
}

// Closes the channel once `limit` messages have been sent through it.
class CuttingChannel final : public MessageChannel {
  public:
    CuttingChannel(MessageChannel& inner, int limit) : inner_(inner), left_(limit) {}
    void send(const Message& m) override {
        if (left_-- <= 0) {
            inner_.close();
            throw TransportError("cut");
        }
        inner_.send(m);
    }
    Message receive(std::chrono::milliseconds t) override { return inner_.receive(t); }
    void close() override { inner_.close(); }

  private:
    MessageChannel& inner_;
    int left_;
};

}  // namespace

TEST_CASE("burst state transitions") {
    CHECK(BurstState::can_advance(Phase::Idle, Phase::Handshake));
    CHECK(BurstState::can_advance(Phase::Handshake, Phase::QubitExchange));
    CHECK(BurstState::can_advance(Phase::PrivacyAmplification, Phase::KeyReady));
    CHECK(BurstState::can_advance(Phase::KeyReady, Phase::QubitExchange));
    CHECK_FALSE(BurstState::can_advance(Phase::Idle, Phase::QubitExchange));
    CHECK_FALSE(BurstState::can_advance(Phase::FrameSync, Phase::QberCheck));
    CHECK_FALSE(BurstState::can_advance(Phase::KeyReady, Phase::Sifting));

    CHECK(BurstState::can_abort(Phase::QberCheck, AbortReason::EveSuspected));
    CHECK_FALSE(BurstState::can_abort(Phase::Sifting, AbortReason::EveSuspected));
    CHECK(BurstState::can_abort(Phase::FrameSync, AbortReason::NoLock));
    CHECK_FALSE(BurstState::can_abort(Phase::QberCheck, AbortReason::NoLock));
    CHECK(BurstState::can_abort(Phase::ErrorCorrection, AbortReason::BurstRejected));
    for (Phase p : {Phase::Handshake, Phase::QubitExchange, Phase::FrameSync, Phase::Sifting,
                    Phase::QberCheck, Phase::ErrorCorrection, Phase::PrivacyAmplification}) {
        CHECK(BurstState::can_abort(p, AbortReason::Timeout));
        CHECK(BurstState::can_abort(p, AbortReason::Transport));
        CHECK(BurstState::can_abort(p, AbortReason::Protocol));
    }
    CHECK_FALSE(BurstState::can_abort(Phase::KeyReady, AbortReason::Timeout));
    CHECK_FALSE(BurstState::can_abort(Phase::Idle, AbortReason::Protocol));

    BurstState s;
    CHECK_THROWS_AS(s.advance(Phase::Sifting), std::logic_error);
    s.advance(Phase::Handshake);
    s.advance(Phase::QubitExchange);
    s.advance(Phase::FrameSync);
    s.abort(AbortReason::NoLock);
    CHECK(s.phase() == Phase::Aborted);
    CHECK(s.last_abort() == AbortReason::NoLock);
    s.advance(Phase::QubitExchange);  // recoverable

    BurstState f;
    f.advance(Phase::Handshake);
    f.abort(AbortReason::Transport);
    CHECK_THROWS_AS(f.advance(Phase::QubitExchange), std::logic_error);
    CHECK(is_recoverable(AbortReason::BurstRejected));
    CHECK_FALSE(is_recoverable(AbortReason::Timeout));
}

TEST_CASE("in-process bursts give identical keys") {
    const SimConfig cfg = small_config(61);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> seen;
    const SessionResult r = simulate_in_process(cfg, 2, [&](const BurstOutcome& a, const BurstOutcome& b) {
        seen.emplace_back(a.stats.burst_id, b.stats.burst_id);
    });
    REQUIRE(r.alice.size() == 2);
    REQUIRE(r.bob.size() == 2);
    CHECK_FALSE(r.any_aborted());
    CHECK(seen == std::vector<std::pair<std::uint64_t, std::uint64_t>>{{0, 0}, {1, 1}});
    CHECK(r.alice_key == r.bob_key);
    // Each burst's key is appended in order.
    Bits joined = r.alice[0].key;
    joined.insert(joined.end(), r.alice[1].key.begin(), r.alice[1].key.end());
    CHECK(joined == r.alice_key.bits());
    for (int i = 0; i < 2; ++i) {
        const BurstStats& b = r.bob[static_cast<std::size_t>(i)].stats;
        CHECK(r.alice[static_cast<std::size_t>(i)].key == r.bob[static_cast<std::size_t>(i)].key);
        CHECK(b.qber < 0.05);
        CHECK(b.sync_matches_truth == true);
        CHECK(b.sample_bits == doctest::Approx(0.05 * static_cast<double>(b.sifted_bits)).epsilon(0.01));
        CHECK(b.sifted_rate() == doctest::Approx(455e3).epsilon(0.05));
        CHECK(b.secure_rate() == doctest::Approx(297e3).epsilon(0.05));
    }
    // Same seed, same keys.
    CHECK(simulate_in_process(cfg, 2).alice_key == r.alice_key);
}

TEST_CASE("eavesdropper aborts at the QBER check") {
    SimConfig cfg = small_config(62);
    cfg.eve_enabled = true;
    const SessionResult r = simulate_in_process(cfg, 2);
    REQUIRE(r.bob.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(r.bob[i].aborted);
        CHECK(r.bob[i].reason == AbortReason::EveSuspected);
        CHECK(r.bob[i].aborted_in == Phase::QberCheck);
        CHECK(r.bob[i].stats.qber > 0.2);
        CHECK(r.alice[i].aborted);
        CHECK(r.alice[i].key.empty());
    }
    CHECK(r.alice_key.size() == 0);
    CHECK(r.bob_key.size() == 0);
}

TEST_CASE("Bob's eavesdropper setting survives the handshake") {
    auto [ca, cb] = make_memory_channel_pair();
    InProcessLink link;
    KeyStore ka, kb;
    SimConfig bob_cfg = default_config();
    bob_cfg.eve_enabled = true;
    Terminal alice(Role::Alice, small_config(63), *ca, link, ka);
    Terminal bob(Role::Bob, bob_cfg, *cb, link, kb);
    auto fa = std::async(std::launch::async, [&] { alice.handshake(); });
    bob.handshake();
    fa.get();
    CHECK(bob.config().eve_enabled);
    CHECK(bob.config().burst_seconds == 0.05);
    CHECK(bob.config().rng_seed == 63);
}

TEST_CASE("no lock within the search range") {
    SimConfig cfg = small_config(64);
    cfg.sync_search_max_frames = 5;
    const SessionResult r = simulate_in_process(cfg, 2);
    REQUIRE(r.bob.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(r.bob[i].reason == AbortReason::NoLock);
        CHECK(r.bob[i].aborted_in == Phase::FrameSync);
        CHECK(r.alice[i].reason == AbortReason::NoLock);
    }
}

TEST_CASE("classical traffic carries only permitted messages") {
    const SimConfig cfg = small_config(65);
    auto [ca, cb] = make_memory_channel_pair();
    ChannelTrace trace;
    RecordingChannel ra(*ca, "alice", trace), rb(*cb, "bob", trace);
    InProcessLink link;
    KeyStore ka, kb;
    const PairRun r = run_pair(cfg, ra, rb, link, link, ka, kb, 1);
    REQUIRE_FALSE(r.bob[0].aborted);

    const std::set<MsgType> alice_ok = {MsgType::Hello, MsgType::BurstStart, MsgType::SyncSubset,
                                        MsgType::Bases, MsgType::QberSample, MsgType::PermSeed,
                                        MsgType::WinnowParities, MsgType::WinnowSyndromes,
                                        MsgType::KeyHash, MsgType::PaSeed};
    const std::set<MsgType> bob_ok = {MsgType::Hello, MsgType::BurstStart, MsgType::FrameOffsetAck,
                                      MsgType::Bases, MsgType::QberSample, MsgType::WinnowParities,
                                      MsgType::KeyHash};
    const BurstStats& st = r.bob[0].stats;
    for (const auto& e : trace.snapshot()) {
        const auto& ok = e.sender == "alice" ? alice_ok : bob_ok;
        CHECK(ok.count(e.message.type) == 1);
        PayloadReader rd(e.message.payload);
        if (e.message.type == MsgType::SyncSubset) {
            rd.u64();
            CHECK(rd.u32() == 0);
            CHECK(rd.bits().size() == sync_subset_size(cfg));
            CHECK(rd.bits().size() == sync_subset_size(cfg));
        }
        if (e.message.type == MsgType::QberSample && e.sender == "bob") {
            rd.u8();
            CHECK(rd.bits().size() == st.sample_bits);
        }
        if (e.message.type == MsgType::Bases && e.sender == "bob") {
            // Nothing from the sync subset is announced again.
            CHECK(rd.u8() == 0);
            const std::uint32_t n = rd.u32();
            for (std::uint32_t i = 0; i < n; ++i) CHECK(rd.u32() >= sync_subset_size(cfg));
        }
        if (e.message.type == MsgType::PaSeed) CHECK(rd.bits().size() == 26);
    }
}

TEST_CASE("pulse stream link delivers the burst intact") {
    SimConfig cfg = small_config(66);
    cfg.burst_seconds = 0.06;  // more than one chunk
    auto [ca, cb] = make_memory_channel_pair();
    StreamLink tx_link(*ca), rx_link(*cb);
    auto tx = std::make_shared<const TxBurst>(prepare_burst(cfg, 3));
    tx_link.transmit(3, tx);
    const auto got = rx_link.arrive(3, 2000ms);
    REQUIRE(got->pulses.size() == tx->pulses.size());
    CHECK(got->pulses == tx->pulses);
    CHECK(detect_burst(*got, cfg, 3).detections == detect_burst(*tx, cfg, 3).detections);

    tx_link.transmit(4, tx);
    CHECK_THROWS_AS(rx_link.arrive(5, 2000ms), ProtocolError);

    for (int b = 0; b < 2; ++b) {
        for (int v = 0; v < 2; ++v) {
            for (std::uint16_t n : {0, 1, 63, 200}) {
                const PulseRecord p{9, b ? Basis::Diagonal : Basis::Rectilinear, static_cast<std::uint8_t>(v), n};
                const PulseRecord q = unpack_pulse(pack_pulse(p), 9);
                CHECK(q.basis == p.basis);
                CHECK(q.bit == p.bit);
                CHECK(q.photon_count == std::min<std::uint16_t>(n, 63));
            }
        }
    }
}

TEST_CASE("terminal faults") {
    SimConfig cfg = small_config(67);
    cfg.phase_timeout_s = 0.3;

    SUBCASE("silent peer times out") {
        auto [ca, cb] = make_memory_channel_pair();
        InProcessLink link;
        KeyStore ka, kb;
        Terminal alice(Role::Alice, cfg, *ca, link, ka);
        Terminal bob(Role::Bob, cfg, *cb, link, kb);
        auto fa = std::async(std::launch::async, [&] { alice.handshake(); });
        bob.handshake();
        fa.get();
        const BurstOutcome o = alice.run_burst(0);
        CHECK(o.reason == AbortReason::Timeout);
        CHECK(alice.failed());
        CHECK(alice.run_burst(1).reason == AbortReason::Timeout);
    }

    SUBCASE("disconnect mid burst") {
        auto [ca, cb] = make_memory_channel_pair();
        CuttingChannel cut(*cb, 3);  // HELLO, BURST_START, FRAME_OFFSET_ACK
        InProcessLink link;
        KeyStore ka, kb;
        const PairRun r = run_pair(cfg, *ca, cut, link, link, ka, kb, 2);
        REQUIRE(r.alice.size() == 1);
        REQUIRE(r.bob.size() == 1);
        CHECK(r.alice[0].reason == AbortReason::Transport);
        CHECK(r.bob[0].reason == AbortReason::Transport);
        CHECK(ka.size() == 0);
        CHECK(kb.size() == 0);
    }

    SUBCASE("message out of order") {
        auto [ca, cb] = make_memory_channel_pair();
        InProcessLink link;
        KeyStore kb;
        Terminal bob(Role::Bob, default_config(), *cb, link, kb);
        auto fb = std::async(std::launch::async, [&] {
            bob.handshake();
            return bob.run_burst(0);
        });
        ca->send(PayloadWriter().u8(1).str(to_config_text(cfg)).into(MsgType::Hello));
        CHECK(ca->receive(2000ms).type == MsgType::Hello);
        ca->send(PayloadWriter().u64(0).into(MsgType::KeyHash));
        const BurstOutcome o = fb.get();
        CHECK(o.reason == AbortReason::Protocol);
        const Message m = ca->receive(2000ms);
        CHECK(m.type == MsgType::Abort);
        CHECK(m.payload.at(0) == static_cast<std::uint8_t>(AbortReason::Protocol));
    }
}

TEST_CASE("bursts over TCP endpoints") {
    const SimConfig cfg = small_config(68);
    const auto port = static_cast<std::uint16_t>(30000 + (::getpid() % 5000) * 2);
    std::promise<std::vector<BurstOutcome>> bob_done;
    KeyStore ka, kb;
    std::thread bob_thread([&] {
        try {
            NetworkEndpoint ep = NetworkEndpoint::connect("127.0.0.1", port, 5000ms);
            Terminal bob(Role::Bob, default_config(), ep.classical(), ep.quantum(), kb);
            bob.handshake();
            bob_done.set_value(run_bursts(bob, 2));
            ep.close();
        } catch (...) {
            bob_done.set_exception(std::current_exception());
        }
    });
    NetworkEndpoint ep = NetworkEndpoint::listen(port, 5000ms, "127.0.0.1");
    Terminal alice(Role::Alice, cfg, ep.classical(), ep.quantum(), ka);
    alice.handshake();
    const auto a = run_bursts(alice, 2);
    const auto b = bob_done.get_future().get();
    bob_thread.join();
    ep.close();
    REQUIRE(a.size() == 2);
    REQUIRE(b.size() == 2);
    CHECK_FALSE(a[0].aborted);
    CHECK_FALSE(b[1].aborted);
    CHECK(ka.snapshot() == kb.snapshot());

    // Matches the in-process run with the same seed.
    CHECK(simulate_in_process(cfg, 2).alice_key == ka.snapshot());
}
