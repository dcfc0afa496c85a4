#include "qkd/session.hpp"

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <sstream>
#include <thread>

#include "qkd/postproc.hpp"

namespace qkd {

const char* to_string(Role r) noexcept { return r == Role::Alice ? "alice" : "bob"; }

const char* to_string(Phase p) noexcept {
    switch (p) {
        case Phase::Idle: return "Idle";
        case Phase::Handshake: return "Handshake";
        case Phase::QubitExchange: return "QubitExchange";
        case Phase::FrameSync: return "FrameSync";
        case Phase::Sifting: return "Sifting";
        case Phase::QberCheck: return "QberCheck";
        case Phase::ErrorCorrection: return "ErrorCorrection";
        case Phase::PrivacyAmplification: return "PrivacyAmplification";
        case Phase::KeyReady: return "KeyReady";
        case Phase::Aborted: return "Aborted";
    }
    return "?";
}

const char* to_string(AbortReason r) noexcept {
    switch (r) {
        case AbortReason::None: return "none";
        case AbortReason::EveSuspected: return "eve_suspected";
        case AbortReason::NoLock: return "no_lock";
        case AbortReason::BurstRejected: return "burst_rejected";
        case AbortReason::Timeout: return "timeout";
        case AbortReason::Transport: return "transport";
        case AbortReason::Protocol: return "protocol";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// BurstState

bool BurstState::can_advance(Phase from, Phase to) noexcept {
    if (to == Phase::Aborted || to == Phase::Idle) return false;
    if (to == Phase::QubitExchange) {
        return from == Phase::Handshake || from == Phase::KeyReady || from == Phase::Aborted;
    }
    return static_cast<int>(to) == static_cast<int>(from) + 1 && from != Phase::Aborted;
}

bool BurstState::can_abort(Phase from, AbortReason reason) noexcept {
    switch (reason) {
        case AbortReason::EveSuspected: return from == Phase::QberCheck;
        case AbortReason::NoLock: return from == Phase::FrameSync;
        case AbortReason::BurstRejected: return from == Phase::ErrorCorrection;
        case AbortReason::Timeout:
        case AbortReason::Transport:
        case AbortReason::Protocol:
            return from >= Phase::Handshake && from <= Phase::PrivacyAmplification;
        case AbortReason::None: return false;
    }
    return false;
}

void BurstState::advance(Phase next) {
    if (!can_advance(phase_, next) ||
        (phase_ == Phase::Aborted && !is_recoverable(reason_))) {
        throw std::logic_error(std::string("illegal phase transition ") + to_string(phase_) +
                               " -> " + to_string(next));
    }
    phase_ = next;
}

void BurstState::abort(AbortReason reason) {
    if (!can_abort(phase_, reason)) {
        throw std::logic_error(std::string("abort '") + to_string(reason) + "' not allowed in " +
                               to_string(phase_));
    }
    phase_ = Phase::Aborted;
    reason_ = reason;
}

PeerAbort::PeerAbort(AbortReason reason, const std::string& detail)
    : std::runtime_error(detail), reason_(reason) {}

// ---------------------------------------------------------------------------
// Terminal

namespace {

constexpr std::uint8_t kHelloVersion = 1;
constexpr std::uint8_t kBasesReport = 0;
constexpr std::uint8_t kBasesAgreement = 1;
constexpr std::uint8_t kSampleRequest = 0;
constexpr std::uint8_t kSampleReply = 1;

std::vector<std::uint32_t> read_indices(PayloadReader& r) {
    const std::uint32_t n = r.u32();
    if (n > r.remaining() / 4) throw ProtocolError("index list longer than payload");
    std::vector<std::uint32_t> out(n);
    for (auto& v : out) v = r.u32();
    return out;
}

void write_indices(PayloadWriter& w, std::span<const std::uint32_t> idx) {
    w.u32(static_cast<std::uint32_t>(idx.size()));
    for (auto v : idx) w.u32(v);
}

Bits mask_from(std::span<const std::uint32_t> blocks, std::size_t n) {
    Bits m(n, 0);
    for (auto b : blocks) m[b] = 1;
    return m;
}

std::vector<std::uint32_t> blocks_from(const Bits& mask) {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
}

double sample_qber(const Bits& a, const Bits& b) {
    if (a.empty()) return 0.0;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < a.size(); ++i) errors += a[i] != b[i];
    return static_cast<double>(errors) / static_cast<double>(a.size());
}

std::string describe_qber(double q, double threshold) {
    std::ostringstream s;
    s << "QBER " << q << " exceeds abort threshold " << threshold;
    return s.str();
}

}  // namespace

Terminal::Terminal(Role role, SimConfig cfg, MessageChannel& channel, QuantumLink& link,
                   KeyStore& keys)
    : role_(role), cfg_(std::move(cfg)), channel_(channel), link_(link), keys_(keys) {
    validate(cfg_);
}

std::chrono::milliseconds Terminal::timeout() const {
    return std::chrono::milliseconds(static_cast<long long>(cfg_.phase_timeout_s * 1000.0));
}

RandomStream Terminal::stream(const std::string& what, std::uint64_t burst_id) const {
    return RandomStream(cfg_.rng_seed, std::string(to_string(role_)) + "/" + what + "/burst-" +
                                           std::to_string(burst_id));
}

Message Terminal::expect(MsgType type) {
    Message m = channel_.receive(timeout());
    if (m.type == MsgType::Abort) {
        PayloadReader r(m.payload);
        const auto reason = static_cast<AbortReason>(r.u8());
        std::string detail = r.str();
        throw PeerAbort(reason, "peer aborted: " + detail);
    }
    if (m.type != type) {
        throw ProtocolError(std::string("expected ") + to_string(type) + ", got " +
                            to_string(m.type) + " in phase " + to_string(state_.phase()));
    }
    return m;
}

void Terminal::send_abort(AbortReason reason, const std::string& detail) noexcept {
    try {
        channel_.send(PayloadWriter().u8(static_cast<std::uint8_t>(reason)).str(detail).into(
            MsgType::Abort));
    } catch (...) {
    }
}

void Terminal::handshake() {
    state_.advance(Phase::Handshake);
    if (role_ == Role::Alice) {
        channel_.send(PayloadWriter().u8(kHelloVersion).str(to_config_text(cfg_)).into(MsgType::Hello));
        const Message m = expect(MsgType::Hello);
        PayloadReader r(m.payload);
        if (r.u8() != kHelloVersion) throw ProtocolError("peer speaks another protocol version");
        return;
    }
    const Message m = expect(MsgType::Hello);
    PayloadReader r(m.payload);
    if (r.u8() != kHelloVersion) throw ProtocolError("peer speaks another protocol version");
    const std::string text = r.str();
    r.expect_end();
    std::istringstream in(text);
    SimConfig peer;
    try {
        peer = parse_config(in, default_config());
    } catch (const ConfigError& e) {
        throw ProtocolError(std::string("bad configuration in HELLO: ") + e.what());
    }
    const bool eve = cfg_.eve_enabled || peer.eve_enabled;
    const double eve_fraction = cfg_.eve_enabled ? cfg_.eve_fraction : peer.eve_fraction;
    cfg_ = peer;
    cfg_.eve_enabled = eve;
    cfg_.eve_fraction = eve_fraction;
    channel_.send(PayloadWriter().u8(kHelloVersion).str("").into(MsgType::Hello));
}

BurstOutcome Terminal::run_burst(std::uint64_t burst_id) {
    if (failed_) return *failed_;
    BurstOutcome out;
    out.stats.burst_id = burst_id;
    out.stats.burst_seconds = cfg_.burst_seconds;
    const auto t0 = std::chrono::steady_clock::now();
    state_.advance(Phase::QubitExchange);

    auto fault = [&](AbortReason reason, const std::string& detail) {
        out.aborted = true;
        out.reason = reason;
        out.aborted_in = state_.phase();
        out.detail = detail;
        if (BurstState::can_abort(state_.phase(), reason)) state_.abort(reason);
    };

    try {
        if (role_ == Role::Alice) {
            run_alice(burst_id, out);
        } else {
            run_bob(burst_id, out);
        }
    } catch (const PeerAbort& e) {
        if (BurstState::can_abort(state_.phase(), e.reason())) {
            fault(e.reason(), e.what());
        } else {
            fault(AbortReason::Protocol, std::string("peer abort out of place: ") + e.what());
        }
    } catch (const TimeoutError& e) {
        fault(AbortReason::Timeout, e.what());
    } catch (const TransportError& e) {
        fault(AbortReason::Transport, e.what());
    } catch (const ProtocolError& e) {
        send_abort(AbortReason::Protocol, e.what());
        fault(AbortReason::Protocol, e.what());
    }
    out.stats.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.aborted && !is_recoverable(out.reason)) {
        failed_ = out;
        channel_.close();
    }
    return out;
}

void Terminal::run_alice(std::uint64_t burst_id, BurstOutcome& out) {
    BurstStats& st = out.stats;
    auto tx = std::make_shared<const TxBurst>(prepare_burst(cfg_, burst_id));
    const auto& pulses = tx->pulses;
    const auto n = static_cast<std::uint32_t>(pulses.size());
    st.pulses = n;

    channel_.send(PayloadWriter().u64(burst_id).u32(n).into(MsgType::BurstStart));
    {
        const Message ack = expect(MsgType::BurstStart);
        PayloadReader r(ack.payload);
        if (r.u64() != burst_id || r.u32() != n) throw ProtocolError("BURST_START mismatch");
    }
    link_.transmit(burst_id, tx);

    // Frame synchronization on the disclosed leading subset.
    state_.advance(Phase::FrameSync);
    const auto subset = static_cast<std::uint32_t>(std::min<std::uint64_t>(sync_subset_size(cfg_), n));
    {
        Bits bases(subset), values(subset);
        for (std::uint32_t i = 0; i < subset; ++i) {
            bases[i] = static_cast<std::uint8_t>(pulses[i].basis);
            values[i] = pulses[i].bit;
        }
        channel_.send(PayloadWriter().u64(burst_id).u32(0).bits(bases).bits(values).into(
            MsgType::SyncSubset));
    }
    {
        const Message ack = expect(MsgType::FrameOffsetAck);
        PayloadReader r(ack.payload);
        if (r.u64() != burst_id) throw ProtocolError("FRAME_OFFSET_ACK for another burst");
        st.offset_frames = r.i64();
        st.central_bin = r.u8();
        st.fifo = r.u8() == 2 ? FifoChoice::Fifo2 : FifoChoice::Fifo1;
        st.interim_qber = r.f64();
    }

    // Bob reports his bases at matched indices; Alice answers with agreement.
    state_.advance(Phase::Sifting);
    Bits alice_key;
    {
        const Message m = expect(MsgType::Bases);
        PayloadReader r(m.payload);
        if (r.u8() != kBasesReport) throw ProtocolError("unexpected BASES kind");
        const auto idx = read_indices(r);
        const Bits bob_bases = r.bits();
        r.expect_end();
        if (bob_bases.size() != idx.size()) throw ProtocolError("BASES length mismatch");
        Bits agree(idx.size());
        std::uint32_t prev = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] < subset || idx[k] >= n || (k > 0 && idx[k] <= prev)) {
                throw ProtocolError("BASES index out of order or range");
            }
            prev = idx[k];
            agree[k] = static_cast<std::uint8_t>(pulses[idx[k]].basis) == bob_bases[k];
            if (agree[k]) alice_key.push_back(pulses[idx[k]].bit);
        }
        st.matched = idx.size();
        channel_.send(PayloadWriter().u8(kBasesAgreement).bits(agree).into(MsgType::Bases));
    }
    tx.reset();
    st.sifted_bits = alice_key.size();

    state_.advance(Phase::QberCheck);
    {
        auto rng = stream("sample", burst_id);
        const auto sample = choose_sample(alice_key.size(), cfg_.link.qber_sample_fraction, rng);
        std::vector<std::uint32_t> idx(sample.begin(), sample.end());
        Bits mine(sample.size());
        for (std::size_t k = 0; k < sample.size(); ++k) mine[k] = alice_key[sample[k]];
        PayloadWriter w;
        w.u8(kSampleRequest);
        write_indices(w, idx);
        w.bits(mine);
        channel_.send(std::move(w).into(MsgType::QberSample));

        const Message m = expect(MsgType::QberSample);
        PayloadReader r(m.payload);
        if (r.u8() != kSampleReply) throw ProtocolError("unexpected QBER_SAMPLE kind");
        const Bits theirs = r.bits();
        r.expect_end();
        if (theirs.size() != mine.size()) throw ProtocolError("QBER_SAMPLE length mismatch");
        st.sample_bits = sample.size();
        st.qber = sample_qber(mine, theirs);
        alice_key = remove_indices(alice_key, sample);
    }
    if (check_abort(st.qber, cfg_.abort_threshold) == Decision::Abort) {
        state_.abort(AbortReason::EveSuspected);
        out.aborted = true;
        out.reason = AbortReason::EveSuspected;
        out.aborted_in = Phase::QberCheck;
        out.detail = describe_qber(st.qber, cfg_.abort_threshold);
        return;
    }

    state_.advance(Phase::ErrorCorrection);
    WinnowParty party(std::move(alice_key), {cfg_.winnow_max_passes, cfg_.winnow_discard_leaked});
    {
        auto rng = stream("winnow", burst_id);
        for (int pass = 0; pass < cfg_.winnow_max_passes; ++pass) {
            const std::uint64_t seed = rng.next_u64();
            channel_.send(PayloadWriter().u8(static_cast<std::uint8_t>(pass)).u64(seed).into(
                MsgType::PermSeed));
            party.begin_pass(seed);
            const Bits parities = party.parities();
            st.disclosed_bits += parities.size();
            channel_.send(PayloadWriter().bits(parities).into(MsgType::WinnowParities));

            const Message m = expect(MsgType::WinnowParities);
            PayloadReader r(m.payload);
            const Bits mask = r.bits();
            r.expect_end();
            if (mask.size() != party.block_count()) throw ProtocolError("mismatch mask length");
            const auto blocks = blocks_from(mask);
            ++st.winnow_passes;
            if (blocks.empty()) {
                party.end_pass(blocks);
                break;
            }
            const Bits syn = party.syndromes(blocks);
            st.disclosed_bits += syn.size();
            channel_.send(PayloadWriter().bits(syn).into(MsgType::WinnowSyndromes));
            party.end_pass(blocks);
        }
    }
    Bits key = std::move(party).release();
    channel_.send(PayloadWriter().u64(key_hash(key)).into(MsgType::KeyHash));
    st.disclosed_bits += kKeyHashBits;
    {
        const Message m = expect(MsgType::KeyHash);
        PayloadReader r(m.payload);
        const bool ok = r.u8() != 0;
        r.u64();
        if (!ok) {
            state_.abort(AbortReason::BurstRejected);
            out.aborted = true;
            out.reason = AbortReason::BurstRejected;
            out.aborted_in = Phase::ErrorCorrection;
            out.detail = "verification hash mismatch after error correction";
            return;
        }
    }

    state_.advance(Phase::PrivacyAmplification);
    Bits seed(ToeplitzMatrix::kSeedBits);
    {
        auto rng = stream("pa", burst_id);
        for (auto& b : seed) b = rng.bit();
    }
    channel_.send(PayloadWriter().bits(seed).into(MsgType::PaSeed));
    out.key = finalize_key(key, carry_, seed);
    keys_.append(out.key);
    st.secure_bits = out.key.size();
    state_.advance(Phase::KeyReady);
}

void Terminal::run_bob(std::uint64_t burst_id, BurstOutcome& out) {
    BurstStats& st = out.stats;
    std::uint32_t n = 0;
    {
        const Message m = expect(MsgType::BurstStart);
        PayloadReader r(m.payload);
        if (r.u64() != burst_id) throw ProtocolError("BURST_START for unexpected burst");
        n = r.u32();
        channel_.send(PayloadWriter().u64(burst_id).u32(n).into(MsgType::BurstStart));
    }
    st.pulses = n;
    RxBurst rx;
    {
        auto tx = link_.arrive(burst_id, timeout());
        if (tx->pulses.size() != n) throw ProtocolError("pulse count differs from BURST_START");
        rx = detect_burst(*tx, cfg_, burst_id);
    }
    st.detections = rx.detections.size();

    state_.advance(Phase::FrameSync);
    SyncResult sync;
    std::uint32_t subset = 0;
    {
        const Message m = expect(MsgType::SyncSubset);
        PayloadReader r(m.payload);
        if (r.u64() != burst_id) throw ProtocolError("SYNC_SUBSET for another burst");
        if (r.u32() != 0) throw ProtocolError("SYNC_SUBSET must start at pulse 0");
        const Bits bases = r.bits();
        const Bits values = r.bits();
        r.expect_end();
        if (bases.size() != values.size() || bases.size() > n) {
            throw ProtocolError("SYNC_SUBSET length mismatch");
        }
        subset = static_cast<std::uint32_t>(bases.size());
        std::vector<PulseRecord> pulses(subset);
        for (std::uint32_t i = 0; i < subset; ++i) {
            pulses[i].frame_index = i;
            pulses[i].basis = static_cast<Basis>(bases[i]);
            pulses[i].bit = values[i];
        }
        try {
            sync = synchronize(pulses, rx.detections, cfg_);
        } catch (const NoLockError& e) {
            send_abort(AbortReason::NoLock, e.what());
            state_.abort(AbortReason::NoLock);
            out.aborted = true;
            out.reason = AbortReason::NoLock;
            out.aborted_in = Phase::FrameSync;
            out.detail = e.what();
            st.interim_qber = e.min_qber();
            return;
        }
    }
    st.offset_frames = sync.alignment.offset_frames;
    st.central_bin = sync.alignment.central_bin;
    st.fifo = sync.choice;
    st.interim_qber = sync.interim_qber;
    st.sync_matches_truth =
        total_offset_bins(sync.choice, sync.alignment, cfg_.bins_per_frame) == rx.true_offset_bins;
    channel_.send(PayloadWriter()
                      .u64(burst_id)
                      .i64(sync.alignment.offset_frames)
                      .u8(static_cast<std::uint8_t>(sync.alignment.central_bin))
                      .u8(static_cast<std::uint8_t>(sync.choice))
                      .f64(sync.interim_qber)
                      .into(MsgType::FrameOffsetAck));
    rx = RxBurst{};

    state_.advance(Phase::Sifting);
    Bits bob_key;
    {
        const auto pairs = nnc_match(sync.fifo, sync.alignment, subset, n);
        sync = SyncResult{};
        std::vector<std::uint32_t> idx(pairs.size());
        Bits bases(pairs.size()), values(pairs.size());
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            idx[k] = static_cast<std::uint32_t>(pairs[k].tx_index);
            bases[k] = static_cast<std::uint8_t>(basis_of_channel(pairs[k].rx_channel));
            values[k] = bit_of_channel(pairs[k].rx_channel);
        }
        st.matched = pairs.size();
        PayloadWriter w;
        w.u8(kBasesReport);
        write_indices(w, idx);
        w.bits(bases);
        channel_.send(std::move(w).into(MsgType::Bases));

        const Message m = expect(MsgType::Bases);
        PayloadReader r(m.payload);
        if (r.u8() != kBasesAgreement) throw ProtocolError("unexpected BASES kind");
        const Bits agree = r.bits();
        r.expect_end();
        if (agree.size() != idx.size()) throw ProtocolError("agreement mask length mismatch");
        for (std::size_t k = 0; k < agree.size(); ++k) {
            if (agree[k]) bob_key.push_back(values[k]);
        }
    }
    st.sifted_bits = bob_key.size();

    state_.advance(Phase::QberCheck);
    {
        const Message m = expect(MsgType::QberSample);
        PayloadReader r(m.payload);
        if (r.u8() != kSampleRequest) throw ProtocolError("unexpected QBER_SAMPLE kind");
        const auto idx = read_indices(r);
        const Bits theirs = r.bits();
        r.expect_end();
        if (theirs.size() != idx.size()) throw ProtocolError("QBER_SAMPLE length mismatch");
        std::vector<std::size_t> sample(idx.begin(), idx.end());
        Bits mine(sample.size());
        for (std::size_t k = 0; k < sample.size(); ++k) {
            if (sample[k] >= bob_key.size() || (k > 0 && sample[k] <= sample[k - 1])) {
                throw ProtocolError("QBER sample index out of order or range");
            }
            mine[k] = bob_key[sample[k]];
        }
        channel_.send(PayloadWriter().u8(kSampleReply).bits(mine).into(MsgType::QberSample));
        st.sample_bits = sample.size();
        st.qber = sample_qber(theirs, mine);
        bob_key = remove_indices(bob_key, sample);
    }
    if (check_abort(st.qber, cfg_.abort_threshold) == Decision::Abort) {
        state_.abort(AbortReason::EveSuspected);
        out.aborted = true;
        out.reason = AbortReason::EveSuspected;
        out.aborted_in = Phase::QberCheck;
        out.detail = describe_qber(st.qber, cfg_.abort_threshold);
        return;
    }

    state_.advance(Phase::ErrorCorrection);
    WinnowParty party(std::move(bob_key), {cfg_.winnow_max_passes, cfg_.winnow_discard_leaked});
    for (int pass = 0; pass < cfg_.winnow_max_passes; ++pass) {
        std::uint64_t seed = 0;
        {
            const Message m = expect(MsgType::PermSeed);
            PayloadReader r(m.payload);
            if (r.u8() != pass) throw ProtocolError("PERM_SEED out of sequence");
            seed = r.u64();
        }
        party.begin_pass(seed);
        Bits alice_parities;
        {
            const Message m = expect(MsgType::WinnowParities);
            PayloadReader r(m.payload);
            alice_parities = r.bits();
            r.expect_end();
        }
        if (alice_parities.size() != party.block_count()) throw ProtocolError("parity vector length");
        const auto blocks = party.mismatched_blocks(alice_parities);
        st.disclosed_bits += alice_parities.size();
        channel_.send(PayloadWriter().bits(mask_from(blocks, party.block_count())).into(
            MsgType::WinnowParities));
        ++st.winnow_passes;
        if (blocks.empty()) {
            party.end_pass(blocks);
            break;
        }
        {
            const Message m = expect(MsgType::WinnowSyndromes);
            PayloadReader r(m.payload);
            const Bits syn = r.bits();
            r.expect_end();
            if (syn.size() != blocks.size() * 3) throw ProtocolError("syndrome vector length");
            st.disclosed_bits += syn.size();
            st.corrections += party.apply_syndromes(blocks, syn);
        }
        party.end_pass(blocks);
    }
    Bits key = std::move(party).release();
    {
        const Message m = expect(MsgType::KeyHash);
        PayloadReader r(m.payload);
        const std::uint64_t theirs = r.u64();
        r.expect_end();
        const std::uint64_t mine = key_hash(key);
        st.disclosed_bits += kKeyHashBits;
        channel_.send(PayloadWriter().u8(theirs == mine ? 1 : 0).u64(mine).into(MsgType::KeyHash));
        if (theirs != mine) {
            state_.abort(AbortReason::BurstRejected);
            out.aborted = true;
            out.reason = AbortReason::BurstRejected;
            out.aborted_in = Phase::ErrorCorrection;
            out.detail = "verification hash mismatch after error correction";
            return;
        }
    }

    state_.advance(Phase::PrivacyAmplification);
    Bits seed;
    {
        const Message m = expect(MsgType::PaSeed);
        PayloadReader r(m.payload);
        seed = r.bits();
        r.expect_end();
        if (seed.size() != static_cast<std::size_t>(ToeplitzMatrix::kSeedBits)) {
            throw ProtocolError("PA_SEED must carry 26 bits");
        }
    }
    out.key = finalize_key(key, carry_, seed);
    keys_.append(out.key);
    st.secure_bits = out.key.size();
    state_.advance(Phase::KeyReady);
}

// ---------------------------------------------------------------------------
// Drivers

bool SessionResult::any_aborted() const noexcept {
    auto aborted = [](const BurstOutcome& o) { return o.aborted; };
    return std::any_of(alice.begin(), alice.end(), aborted) ||
           std::any_of(bob.begin(), bob.end(), aborted);
}

std::vector<BurstOutcome> run_bursts(Terminal& terminal, int bursts,
                                     const std::function<void(const BurstOutcome&)>& on_burst) {
    std::vector<BurstOutcome> out;
    for (int b = 0; b < bursts; ++b) {
        out.push_back(terminal.run_burst(static_cast<std::uint64_t>(b)));
        if (on_burst) on_burst(out.back());
        if (terminal.failed()) break;
    }
    return out;
}

SessionResult simulate_in_process(const SimConfig& cfg, int bursts, const BurstCallback& on_burst) {
    auto [ch_a, ch_b] = make_memory_channel_pair();
    InProcessLink link;
    KeyStore keys_a, keys_b;
    Terminal alice(Role::Alice, cfg, *ch_a, link, keys_a);
    Terminal bob(Role::Bob, cfg, *ch_b, link, keys_b);

    std::mutex mutex;
    std::condition_variable cv;
    SessionResult result;
    bool a_done = false, b_done = false;
    std::exception_ptr a_error, b_error;

    auto side = [&](Terminal& t, MessageChannel& ch, std::vector<BurstOutcome>& sink, bool& done,
                    std::exception_ptr& error) {
        try {
            t.handshake();
            run_bursts(t, bursts, [&](const BurstOutcome& o) {
                std::lock_guard lock(mutex);
                sink.push_back(o);
                cv.notify_all();
            });
        } catch (...) {
            error = std::current_exception();
            ch.close();
        }
        std::lock_guard lock(mutex);
        done = true;
        cv.notify_all();
    };

    std::thread ta([&] { side(alice, *ch_a, result.alice, a_done, a_error); });
    std::thread tb([&] { side(bob, *ch_b, result.bob, b_done, b_error); });

    std::size_t reported = 0;
    {
        std::unique_lock lock(mutex);
        for (;;) {
            cv.wait(lock, [&] {
                return (result.alice.size() > reported && result.bob.size() > reported) ||
                       (a_done && b_done);
            });
            while (result.alice.size() > reported && result.bob.size() > reported) {
                const BurstOutcome a = result.alice[reported];
                const BurstOutcome b = result.bob[reported];
                ++reported;
                if (on_burst) {
                    lock.unlock();
                    on_burst(a, b);
                    lock.lock();
                }
            }
            if (a_done && b_done) break;
        }
    }
    ta.join();
    tb.join();
    if (a_error) std::rethrow_exception(a_error);
    if (b_error) std::rethrow_exception(b_error);
    result.alice_key = keys_a.snapshot();
    result.bob_key = keys_b.snapshot();
    return result;
}

NetworkEndpoint NetworkEndpoint::listen(std::uint16_t port, std::chrono::milliseconds timeout,
                                        const std::string& bind_address) {
    TcpListener classical(port, bind_address);
    TcpListener pulses(static_cast<std::uint16_t>(port + 1), bind_address);
    NetworkEndpoint ep;
    ep.classical_ = std::make_unique<TcpChannel>(classical.accept(timeout));
    ep.pulses_ = std::make_unique<TcpChannel>(pulses.accept(timeout));
    ep.quantum_ = std::make_unique<StreamLink>(*ep.pulses_);
    return ep;
}

NetworkEndpoint NetworkEndpoint::connect(const std::string& host, std::uint16_t port,
                                         std::chrono::milliseconds timeout) {
    NetworkEndpoint ep;
    ep.classical_ = std::make_unique<TcpChannel>(tcp_connect(host, port, timeout));
    ep.pulses_ = std::make_unique<TcpChannel>(
        tcp_connect(host, static_cast<std::uint16_t>(port + 1), timeout));
    ep.quantum_ = std::make_unique<StreamLink>(*ep.pulses_);
    return ep;
}

void NetworkEndpoint::close() {
    if (classical_) classical_->close();
    if (pulses_) pulses_->close();
}

}  // namespace qkd
