#include "qkd/postproc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qkd {

SiftedKeys sift(const RawKey& alice, const RawKey& bob) {
    const std::size_t n = alice.bits.size();
    if (alice.bases.size() != n || bob.bits.size() != n || bob.bases.size() != n) {
        throw std::invalid_argument("sift: raw keys must have equal lengths");
    }
    SiftedKeys out;
    out.alice.reserve(n / 2 + 1);
    out.bob.reserve(n / 2 + 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (alice.bases[i] != bob.bases[i]) continue;
        out.alice.push_back(alice.bits[i]);
        out.bob.push_back(bob.bits[i]);
    }
    return out;
}

std::vector<std::size_t> choose_sample(std::size_t n, double fraction, RandomStream& rng) {
    if (n == 0) return {};
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    k = std::clamp<std::size_t>(k, 1, n);
    // Partial Fisher-Yates over an index array.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Bits remove_indices(const Bits& bits, std::span<const std::size_t> indices) {
    Bits out;
    out.reserve(bits.size() - std::min(bits.size(), indices.size()));
    std::size_t next = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (next < indices.size() && indices[next] == i) {
            ++next;
            continue;
        }
        out.push_back(bits[i]);
    }
    return out;
}

QberEstimate estimate_qber(const Bits& alice, const Bits& bob, double sample_fraction,
                           RandomStream& rng) {
    if (alice.size() != bob.size()) {
        throw std::invalid_argument("estimate_qber: keys must have equal lengths");
    }
    if (!(sample_fraction > 0.0) ||
        static_cast<double>(alice.size()) * sample_fraction < 1.0 - 1e-9) {
        throw std::invalid_argument("estimate_qber: sample would be empty");
    }
    const auto sample = choose_sample(alice.size(), sample_fraction, rng);
    QberEstimate est;
    est.sample_size = sample.size();
    for (std::size_t i : sample) est.errors += alice[i] != bob[i];
    est.qber = static_cast<double>(est.errors) / static_cast<double>(est.sample_size);
    est.alice_rest = remove_indices(alice, sample);
    est.bob_rest = remove_indices(bob, sample);
    return est;
}

Decision check_abort(double qber, double threshold) {
    return qber > threshold ? Decision::Abort : Decision::Continue;
}

namespace {

std::string qber_message(double q) {
    std::ostringstream s;
    s << "QBER " << q << " above abort threshold; eavesdropping suspected";
    return s.str();
}

}  // namespace

QberAbort::QberAbort(double qber) : std::runtime_error(qber_message(qber)), qber_(qber) {}

// ---------------------------------------------------------------------------
// Winnow

std::uint8_t block_parity(std::span<const std::uint8_t> block) noexcept {
    std::uint8_t p = 0;
    for (auto b : block) p ^= b;
    return p;
}

std::uint8_t hamming_syndrome(std::span<const std::uint8_t> block) noexcept {
    std::uint8_t s = 0;
    for (std::size_t j = 1; j < block.size() && j < 8; ++j) {
        if (block[j]) s ^= static_cast<std::uint8_t>(j);
    }
    return s;
}

std::vector<std::uint32_t> winnow_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0U);
    RandomStream rng(seed, "winnow.permutation");
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

WinnowParty::WinnowParty(Bits key, WinnowOptions options)
    : key_(std::move(key)), options_(options) {}

void WinnowParty::begin_pass(std::uint64_t permutation_seed) {
    perm_ = winnow_permutation(key_.size(), permutation_seed);
    ++passes_;
}

std::size_t WinnowParty::block_count() const noexcept {
    return (key_.size() + kWinnowBlockBits - 1) / kWinnowBlockBits;
}

std::uint8_t WinnowParty::block_bit(std::size_t block, int pos) const {
    const std::size_t i = block * kWinnowBlockBits + static_cast<std::size_t>(pos);
    return i < perm_.size() ? key_[perm_[i]] : 0;  // short final block is zero padded
}

Bits WinnowParty::parities() const {
    Bits out(block_count());
    for (std::size_t b = 0; b < out.size(); ++b) {
        std::uint8_t p = 0;
        for (int j = 0; j < kWinnowBlockBits; ++j) p ^= block_bit(b, j);
        out[b] = p;
    }
    return out;
}

std::vector<std::uint32_t> WinnowParty::mismatched_blocks(const Bits& peer_parities) const {
    const Bits mine = parities();
    if (peer_parities.size() != mine.size()) {
        throw std::invalid_argument("winnow: parity vector length mismatch");
    }
    std::vector<std::uint32_t> out;
    for (std::size_t b = 0; b < mine.size(); ++b) {
        if (mine[b] != peer_parities[b]) out.push_back(static_cast<std::uint32_t>(b));
    }
    return out;
}

Bits WinnowParty::syndromes(std::span<const std::uint32_t> blocks) const {
    Bits out;
    out.reserve(blocks.size() * 3);
    for (std::uint32_t b : blocks) {
        std::uint8_t s = 0;
        for (int j = 1; j < kWinnowBlockBits; ++j) {
            if (block_bit(b, j)) s ^= static_cast<std::uint8_t>(j);
        }
        out.push_back((s >> 2) & 1U);
        out.push_back((s >> 1) & 1U);
        out.push_back(s & 1U);
    }
    return out;
}

std::size_t WinnowParty::apply_syndromes(std::span<const std::uint32_t> blocks,
                                         const Bits& peer_syndromes) {
    if (peer_syndromes.size() != blocks.size() * 3) {
        throw std::invalid_argument("winnow: syndrome vector length mismatch");
    }
    const Bits mine = syndromes(blocks);
    std::size_t flips = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const unsigned diff = ((mine[3 * k] ^ peer_syndromes[3 * k]) << 2) |
                              ((mine[3 * k + 1] ^ peer_syndromes[3 * k + 1]) << 1) |
                              (mine[3 * k + 2] ^ peer_syndromes[3 * k + 2]);
        const std::size_t i = static_cast<std::size_t>(blocks[k]) * kWinnowBlockBits + diff;
        if (i < perm_.size()) {
            key_[perm_[i]] ^= 1U;
            ++flips;
        }
    }
    return flips;
}

void WinnowParty::end_pass(std::span<const std::uint32_t> mismatched) {
    if (!options_.discard_leaked) return;
    std::vector<std::size_t> drop;
    const std::size_t n = perm_.size();
    auto add = [&](std::size_t block, int pos) {
        const std::size_t i = block * kWinnowBlockBits + static_cast<std::size_t>(pos);
        if (i < n) drop.push_back(perm_[i]);
    };
    for (std::size_t b = 0; b < block_count(); ++b) add(b, 0);
    for (std::uint32_t b : mismatched) {
        add(b, 1);
        add(b, 2);
        add(b, 4);
    }
    std::sort(drop.begin(), drop.end());
    key_ = remove_indices(key_, drop);
}

WinnowResult winnow_correct(const Bits& alice, const Bits& bob, DisclosureLedger& ledger,
                            RandomStream& rng, const WinnowOptions& options) {
    if (alice.size() != bob.size()) {
        throw std::invalid_argument("winnow_correct: keys must have equal lengths");
    }
    WinnowParty a(alice, options), b(bob, options);
    WinnowResult result;
    for (int pass = 0; pass < options.max_passes; ++pass) {
        const std::uint64_t seed = rng.next_u64();
        a.begin_pass(seed);
        b.begin_pass(seed);
        const Bits parities = a.parities();
        ledger.parity_bits += parities.size();
        result.disclosed_bits += parities.size();
        const auto mismatched = b.mismatched_blocks(parities);
        if (!mismatched.empty()) {
            const Bits syn = a.syndromes(mismatched);
            ledger.syndrome_bits += syn.size();
            result.disclosed_bits += syn.size();
            result.corrections += b.apply_syndromes(mismatched, syn);
        }
        a.end_pass(mismatched);
        b.end_pass(mismatched);
        result.passes = pass + 1;
        if (mismatched.empty()) break;
    }
    if (a.key() != b.key()) {
        throw BurstRejected("winnow: keys still differ after " + std::to_string(result.passes) +
                            " passes");
    }
    result.alice = std::move(a).release();
    result.corrected = std::move(b).release();
    return result;
}

std::uint64_t key_hash(const Bits& key) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    const std::uint64_t n = key.size();
    for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(n >> (8 * i)));
    std::uint8_t acc = 0;
    for (std::size_t i = 0; i < key.size(); ++i) {
        acc = static_cast<std::uint8_t>((acc << 1) | (key[i] & 1U));
        if (i % 8 == 7) {
            mix(acc);
            acc = 0;
        }
    }
    if (key.size() % 8) mix(acc);
    return h;
}

// ---------------------------------------------------------------------------
// Privacy amplification

ToeplitzMatrix::ToeplitzMatrix(const Bits& seed) {
    if (seed.size() != static_cast<std::size_t>(kSeedBits)) {
        throw std::invalid_argument("Toeplitz seed must be exactly 26 bits");
    }
    for (int i = 0; i < kRows; ++i) {
        std::uint16_t row = 0;
        for (int j = 0; j < kCols; ++j) {
            if (seed[static_cast<std::size_t>(kRows - 1 - i + j)] & 1U) {
                row = static_cast<std::uint16_t>(row | (1U << j));
            }
        }
        rows_[i] = row;
    }
}

std::uint16_t ToeplitzMatrix::multiply(std::uint16_t x) const noexcept {
    std::uint16_t y = 0;
    for (int i = 0; i < kRows; ++i) {
        const unsigned v = static_cast<unsigned>(rows_[i] & x);
        y = static_cast<std::uint16_t>(y | ((std::popcount(v) & 1U) << i));
    }
    return y;
}

Bits privacy_amplify(const Bits& key, const Bits& toeplitz_seed) {
    const ToeplitzMatrix t(toeplitz_seed);
    if (key.size() % ToeplitzMatrix::kCols != 0) {
        throw std::invalid_argument("privacy_amplify: key length must be a multiple of 16");
    }
    const std::size_t blocks = key.size() / ToeplitzMatrix::kCols;
    Bits out(blocks * ToeplitzMatrix::kRows);
    for (std::size_t b = 0; b < blocks; ++b) {
        std::uint16_t x = 0;
        for (int j = 0; j < ToeplitzMatrix::kCols; ++j) {
            x = static_cast<std::uint16_t>(x | ((key[b * 16 + j] & 1U) << j));
        }
        const std::uint16_t y = t.multiply(x);
        for (int i = 0; i < ToeplitzMatrix::kRows; ++i) out[b * 11 + i] = (y >> i) & 1U;
    }
    return out;
}

Bits finalize_key(const Bits& corrected, Bits& carry, const Bits& toeplitz_seed) {
    const std::size_t skip = std::min(corrected.size(), kKeyHashBits);
    Bits pool = carry;
    pool.insert(pool.end(), corrected.begin() + static_cast<std::ptrdiff_t>(skip), corrected.end());
    const std::size_t whole = pool.size() - pool.size() % ToeplitzMatrix::kCols;
    Bits next_carry(pool.begin() + static_cast<std::ptrdiff_t>(whole), pool.end());
    pool.resize(whole);
    Bits out = privacy_amplify(pool, toeplitz_seed);
    carry = std::move(next_carry);
    return out;
}

// ---------------------------------------------------------------------------
// Key accumulation

void KeyBuffer::append(const Bits& bits) { bits_.insert(bits_.end(), bits.begin(), bits.end()); }

bool KeyBuffer::overlaps_claimed(std::uint64_t offset, std::uint64_t n) const {
    if (n == 0) return false;
    const std::uint64_t end = offset + n;
    auto it = claimed_.upper_bound(offset);
    if (it != claimed_.begin()) {
        auto prev = std::prev(it);
        if (prev->second > offset) return true;
    }
    return it != claimed_.end() && it->first < end;
}

Bits KeyBuffer::claim(std::uint64_t offset, std::uint64_t n) {
    if (offset + n > bits_.size()) {
        throw InsufficientKey("key buffer holds " + std::to_string(bits_.size()) +
                              " bits; requested range ends at " + std::to_string(offset + n));
    }
    if (overlaps_claimed(offset, n)) {
        throw KeyReuseError("key range [" + std::to_string(offset) + ", " +
                            std::to_string(offset + n) + ") was already consumed");
    }
    Bits out(bits_.begin() + static_cast<std::ptrdiff_t>(offset),
             bits_.begin() + static_cast<std::ptrdiff_t>(offset + n));
    if (n == 0) return out;
    std::uint64_t start = offset, end = offset + n;
    auto next = claimed_.lower_bound(start);
    if (next != claimed_.begin()) {
        auto prev = std::prev(next);
        if (prev->second == start) {
            start = prev->first;
            claimed_.erase(prev);
        }
    }
    next = claimed_.find(end);
    if (next != claimed_.end()) {
        end = next->second;
        claimed_.erase(next);
    }
    claimed_[start] = end;
    cursor_ = std::max(cursor_, offset + n);
    consumed_ += n;
    return out;
}

Bits KeyBuffer::consume(std::uint64_t n) { return claim(cursor_, n); }

// ---------------------------------------------------------------------------

DistillReport distill(const Bits& alice, const Bits& bob, double qber, RandomStream& rng,
                      KeyBuffer& alice_buffer, KeyBuffer& bob_buffer,
                      const DistillOptions& options, PaCarry* carry) {
    if (check_abort(qber, options.abort_threshold) == Decision::Abort) throw QberAbort(qber);
    DistillReport report;
    report.input_bits = alice.size();
    DisclosureLedger ledger;
    WinnowResult w = winnow_correct(alice, bob, ledger, rng, options.winnow);
    if (key_hash(w.alice) != key_hash(w.corrected)) {
        throw BurstRejected("verification hash mismatch after error correction");
    }
    ledger.hash_bits += kKeyHashBits;

    Bits seed(ToeplitzMatrix::kSeedBits);
    for (auto& b : seed) b = rng.bit();

    PaCarry local;
    PaCarry& c = carry ? *carry : local;
    Bits alice_carry = c.alice, bob_carry = c.bob;
    Bits a_final = finalize_key(w.alice, alice_carry, seed);
    Bits b_final = finalize_key(w.corrected, bob_carry, seed);
    if (a_final != b_final) throw BurstRejected("amplified keys differ");

    alice_buffer.append(a_final);
    bob_buffer.append(b_final);
    c.alice = std::move(alice_carry);
    c.bob = std::move(bob_carry);

    report.appended_bits = a_final.size();
    report.disclosed_bits = ledger.total();
    report.corrections = w.corrections;
    report.winnow_passes = w.passes;
    return report;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] & 1U) out[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
    }
    return out;
}

Bits unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits) {
    if (bytes.size() * 8 < nbits) throw std::invalid_argument("unpack_bits: not enough bytes");
    Bits out(nbits);
    for (std::size_t i = 0; i < nbits; ++i) out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1U;
    return out;
}

}  // namespace qkd
