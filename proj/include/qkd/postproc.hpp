#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/rng.hpp"

namespace qkd {

struct RawKey {
    Bits bits;
    std::vector<Basis> bases;
    std::vector<std::uint64_t> origin_indices;
};

struct SiftedKeys {
    Bits alice;
    Bits bob;
};

/// Keeps the positions where both sides used the same basis.
SiftedKeys sift(const RawKey& alice, const RawKey& bob);

/// Sorted, distinct indices of a uniformly random subset of round(n * fraction)
/// positions (at least one when n > 0).
std::vector<std::size_t> choose_sample(std::size_t n, double fraction, RandomStream& rng);

/// Copy of `bits` without the (sorted) positions in `indices`.
Bits remove_indices(const Bits& bits, std::span<const std::size_t> indices);

struct QberEstimate {
    double qber = 0.0;
    std::size_t sample_size = 0;
    std::size_t errors = 0;
    Bits alice_rest;
    Bits bob_rest;
};

/// Discloses a random sample of both keys, compares it and strips it.
QberEstimate estimate_qber(const Bits& alice, const Bits& bob, double sample_fraction,
                           RandomStream& rng);

enum class Decision { Continue, Abort };

inline constexpr double kDefaultAbortThreshold = 0.11;

/// Abort iff qber is strictly above the threshold.
Decision check_abort(double qber, double threshold = kDefaultAbortThreshold);

class QberAbort : public std::runtime_error {
  public:
    explicit QberAbort(double qber);
    double qber() const noexcept { return qber_; }

  private:
    double qber_;
};

class BurstRejected : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Winnow

struct WinnowOptions {
    int max_passes = 4;
    /// Drop the disclosed positions (one per block, three more per syndrome
    /// exchange) from both keys after each pass. Off by default: leakage is
    /// then absorbed by the fixed 16 -> 11 privacy amplification.
    bool discard_leaked = false;
};

inline constexpr int kWinnowBlockBits = 8;

/// Parity of all 8 bits of a block.
std::uint8_t block_parity(std::span<const std::uint8_t> block) noexcept;

/// Hamming syndrome: XOR of the in-block positions 1..7 holding a one.
/// Position 0 is covered by the parity alone.
std::uint8_t hamming_syndrome(std::span<const std::uint8_t> block) noexcept;

/// Fisher-Yates permutation of [0, n) driven by `seed`.
std::vector<std::uint32_t> winnow_permutation(std::size_t n, std::uint64_t seed);

/// One party's state across Winnow passes. Alice's copy is the reference;
/// Bob's copy is corrected toward it.
class WinnowParty {
  public:
    WinnowParty(Bits key, WinnowOptions options = {});

    void begin_pass(std::uint64_t permutation_seed);
    std::size_t block_count() const noexcept;

    Bits parities() const;
    std::vector<std::uint32_t> mismatched_blocks(const Bits& peer_parities) const;
    /// Three syndrome bits per listed block, most significant first.
    Bits syndromes(std::span<const std::uint32_t> blocks) const;
    /// Flips the bit located by each syndrome difference; returns flips made.
    std::size_t apply_syndromes(std::span<const std::uint32_t> blocks, const Bits& peer_syndromes);
    void end_pass(std::span<const std::uint32_t> mismatched);

    const Bits& key() const noexcept { return key_; }
    Bits release() && { return std::move(key_); }
    int passes() const noexcept { return passes_; }

  private:
    std::uint8_t block_bit(std::size_t block, int pos) const;

    Bits key_;
    WinnowOptions options_;
    std::vector<std::uint32_t> perm_;
    int passes_ = 0;
};

/// Counts what the reconciliation exchange reveals.
struct DisclosureLedger {
    std::size_t parity_bits = 0;
    std::size_t syndrome_bits = 0;
    std::size_t hash_bits = 0;
    std::size_t total() const noexcept { return parity_bits + syndrome_bits + hash_bits; }
};

struct WinnowResult {
    Bits alice;      // unchanged unless leaked positions are discarded
    Bits corrected;  // Bob's key after correction
    std::size_t disclosed_bits = 0;
    std::size_t corrections = 0;
    int passes = 0;
};

/// In-process Winnow: passes continue until one discloses no parity
/// mismatch or max_passes is reached. Throws BurstRejected when the keys
/// still differ afterwards.
WinnowResult winnow_correct(const Bits& alice, const Bits& bob, DisclosureLedger& ledger,
                            RandomStream& rng, const WinnowOptions& options = {});

/// 64-bit digest used for the disclosed final comparison.
std::uint64_t key_hash(const Bits& key) noexcept;

inline constexpr std::size_t kKeyHashBits = 64;

// ---------------------------------------------------------------------------
// Privacy amplification

/// 11 x 16 Toeplitz matrix over GF(2) with T[i][j] = seed[10 - i + j]:
/// the first column is seed[10], seed[9], ..., seed[0] and the first row
/// is seed[10..25].
class ToeplitzMatrix {
  public:
    static constexpr int kRows = 11;
    static constexpr int kCols = 16;
    static constexpr int kSeedBits = kRows + kCols - 1;

    explicit ToeplitzMatrix(const Bits& seed);

    bool at(int row, int col) const noexcept { return (rows_[row] >> col) & 1U; }
    /// Bit j of `x` is column j; bit i of the result is row i.
    std::uint16_t multiply(std::uint16_t x) const noexcept;

  private:
    std::uint16_t rows_[kRows];
};

/// Compresses every 16-bit block to 11 bits. Key length must be a multiple
/// of 16 and the seed exactly 26 bits.
Bits privacy_amplify(const Bits& key, const Bits& toeplitz_seed);

/// Drops the hash-disclosed bits, prepends the carry from earlier bursts and
/// amplifies every whole 16-bit block; the remainder becomes the new carry.
Bits finalize_key(const Bits& corrected, Bits& carry, const Bits& toeplitz_seed);

// ---------------------------------------------------------------------------
// Key accumulation

class KeyReuseError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class InsufficientKey : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Append-only secure key with one-time consumption. Every claimed range
/// is recorded and any overlapping claim throws KeyReuseError.
class KeyBuffer {
  public:
    void append(const Bits& bits);

    std::uint64_t size() const noexcept { return bits_.size(); }
    /// High-water mark of every claimed range; never decreases.
    std::uint64_t consumed_upto() const noexcept { return cursor_; }
    std::uint64_t consumed_bits() const noexcept { return consumed_; }
    std::uint64_t available() const noexcept { return size() - cursor_; }

    /// Claims the next n bits at the cursor.
    Bits consume(std::uint64_t n);
    /// Claims [offset, offset + n); must lie inside the buffer and be unclaimed.
    Bits claim(std::uint64_t offset, std::uint64_t n);
    bool overlaps_claimed(std::uint64_t offset, std::uint64_t n) const;

    const Bits& bits() const noexcept { return bits_; }
    const std::map<std::uint64_t, std::uint64_t>& claimed_ranges() const noexcept {
        return claimed_;
    }

    friend bool operator==(const KeyBuffer& a, const KeyBuffer& b) { return a.bits_ == b.bits_; }

  private:
    Bits bits_;
    std::map<std::uint64_t, std::uint64_t> claimed_;  // start -> end, merged
    std::uint64_t cursor_ = 0;
    std::uint64_t consumed_ = 0;
};

struct DistillOptions {
    double abort_threshold = kDefaultAbortThreshold;
    WinnowOptions winnow;
};

struct DistillReport {
    std::size_t input_bits = 0;
    std::size_t appended_bits = 0;
    std::size_t disclosed_bits = 0;
    std::size_t corrections = 0;
    int winnow_passes = 0;
};

/// Carry-over of the sub-block remainder, one per side.
struct PaCarry {
    Bits alice;
    Bits bob;
};

/// check_abort -> Winnow -> hash verification -> privacy amplification with a
/// fresh seed from `rng`; the same secure key is appended to both buffers.
/// Throws QberAbort or BurstRejected, leaving buffers and carry untouched.
DistillReport distill(const Bits& alice, const Bits& bob, double qber, RandomStream& rng,
                      KeyBuffer& alice_buffer, KeyBuffer& bob_buffer,
                      const DistillOptions& options = {}, PaCarry* carry = nullptr);

/// Packs bits MSB-first into bytes (zero padded).
std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits);
Bits unpack_bits(std::span<const std::uint8_t> bytes, std::size_t nbits);

}  // namespace qkd
