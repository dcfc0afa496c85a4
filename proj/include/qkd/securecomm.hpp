#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qkd/channel.hpp"
#include "qkd/keystore.hpp"
#include "qkd/session.hpp"

namespace qkd {

struct CipherFrame {
    std::uint64_t seq = 0;
    std::uint64_t key_offset = 0;  // first key bit used, as an index into the buffer
    std::vector<std::uint8_t> ciphertext;

    friend bool operator==(const CipherFrame&, const CipherFrame&) = default;
};

/// Receiver's key position or sequence number disagrees with the frame.
class OtpSyncError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// XOR with the next 8 * len key bits of `buf`. Throws InsufficientKey when
/// the buffer is short.
CipherFrame otp_seal(std::span<const std::uint8_t> plaintext, KeyBuffer& buf, std::uint64_t seq);

/// Requires frame.seq == expected_seq and frame.key_offset at the cursor.
std::vector<std::uint8_t> otp_open(const CipherFrame& frame, KeyBuffer& buf,
                                   std::uint64_t expected_seq);

inline constexpr std::uint64_t kKeyPageBits = 4096 * 8;

/// One direction's share of a key store: every other 4 KiB page starting
/// at `base`, offset by `phase` pages. Alice sends on phase 0, Bob on 1.
class KeyLane {
  public:
    KeyLane(KeyStore& store, std::uint64_t base, int phase) noexcept
        : store_(store), base_(base), phase_(phase) {}

    /// Buffer index of the lane's next unused bit.
    std::uint64_t next_offset() const noexcept { return absolute(position_); }
    std::uint64_t consumed_bits() const noexcept { return position_; }

    /// Claims the lane's next n bits, waiting for fresh key if needed.
    Bits take(std::uint64_t n, std::chrono::milliseconds timeout);

  private:
    std::uint64_t absolute(std::uint64_t pos) const noexcept;

    KeyStore& store_;
    std::uint64_t base_;
    int phase_;
    std::uint64_t position_ = 0;
};

inline constexpr std::uint64_t kHandshakeBits = 64;

struct ChatHandshakeResult {
    std::uint64_t window_offset = 0;  // first of the 64 discarded bits
    std::uint8_t parity = 0;
    std::uint64_t lane_base = 0;      // page-aligned start of the chat lanes
};

/// Refused chat: the key windows disagree.
class ChatRefused : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Exchanges the parity of the first 64 unconsumed key bits and discards
/// them. Throws std::invalid_argument when fewer than 64 bits are
/// available and ChatRefused on a parity or offset mismatch.
ChatHandshakeResult chat_handshake(MessageChannel& channel, KeyStore& keys,
                                   std::chrono::milliseconds timeout);

Message encode_chat_frame(const CipherFrame& frame);
CipherFrame decode_chat_frame(const Message& msg);

/// Duplex OTP messaging over an established handshake. send() and
/// receive() may run on different threads.
class ChatSession {
  public:
    ChatSession(MessageChannel& channel, KeyStore& keys, Role role, std::uint64_t lane_base,
                std::chrono::milliseconds key_wait);

    void send(std::span<const std::uint8_t> payload);
    std::vector<std::uint8_t> receive(std::chrono::milliseconds timeout);

    std::uint64_t sent_key_bits() const noexcept { return tx_.consumed_bits(); }
    std::uint64_t received_key_bits() const noexcept { return rx_.consumed_bits(); }

  private:
    MessageChannel& channel_;
    KeyLane tx_;
    KeyLane rx_;
    std::chrono::milliseconds key_wait_;
    std::uint64_t tx_seq_ = 0;
    std::uint64_t rx_seq_ = 0;
};

}  // namespace qkd
