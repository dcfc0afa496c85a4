#include "qkd/securecomm.hpp"

#include <string>

#include "qkd/postproc.hpp"

namespace qkd {

namespace {

void xor_with_key(std::vector<std::uint8_t>& data, const Bits& key) {
    const auto pad = pack_bits(key);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] ^= pad[i];
}

}  // namespace

CipherFrame otp_seal(std::span<const std::uint8_t> plaintext, KeyBuffer& buf, std::uint64_t seq) {
    CipherFrame f;
    f.seq = seq;
    f.key_offset = buf.consumed_upto();
    const Bits key = buf.consume(8 * static_cast<std::uint64_t>(plaintext.size()));
    f.ciphertext.assign(plaintext.begin(), plaintext.end());
    xor_with_key(f.ciphertext, key);
    return f;
}

std::vector<std::uint8_t> otp_open(const CipherFrame& frame, KeyBuffer& buf,
                                   std::uint64_t expected_seq) {
    if (frame.seq != expected_seq) {
        throw OtpSyncError("frame sequence " + std::to_string(frame.seq) + ", expected " +
                           std::to_string(expected_seq));
    }
    if (frame.key_offset != buf.consumed_upto()) {
        throw OtpSyncError("frame key offset " + std::to_string(frame.key_offset) +
                           ", receiver cursor at " + std::to_string(buf.consumed_upto()));
    }
    const Bits key = buf.consume(8 * static_cast<std::uint64_t>(frame.ciphertext.size()));
    std::vector<std::uint8_t> out = frame.ciphertext;
    xor_with_key(out, key);
    return out;
}

std::uint64_t KeyLane::absolute(std::uint64_t pos) const noexcept {
    const std::uint64_t page = pos / kKeyPageBits;
    return base_ + (2 * page + static_cast<std::uint64_t>(phase_)) * kKeyPageBits +
           pos % kKeyPageBits;
}

Bits KeyLane::take(std::uint64_t n, std::chrono::milliseconds timeout) {
    Bits out;
    out.reserve(n);
    while (n > 0) {
        const std::uint64_t room = kKeyPageBits - position_ % kKeyPageBits;
        const std::uint64_t step = std::min(room, n);
        const Bits part = store_.claim_blocking(absolute(position_), step, timeout);
        out.insert(out.end(), part.begin(), part.end());
        position_ += step;
        n -= step;
    }
    return out;
}

ChatHandshakeResult chat_handshake(MessageChannel& channel, KeyStore& keys,
                                   std::chrono::milliseconds timeout) {
    if (keys.available() < kHandshakeBits) {
        throw std::invalid_argument("chat handshake needs " + std::to_string(kHandshakeBits) +
                                    " unconsumed key bits, have " +
                                    std::to_string(keys.available()));
    }
    ChatHandshakeResult r;
    r.window_offset = keys.consumed_upto();
    const Bits window = keys.consume(kHandshakeBits);
    for (auto b : window) r.parity ^= b;
    channel.send(PayloadWriter().u8(r.parity).u64(r.window_offset).into(MsgType::ChatHandshake));

    const Message m = channel.receive(timeout);
    if (m.type != MsgType::ChatHandshake) {
        throw ProtocolError(std::string("expected CHAT_HANDSHAKE, got ") + to_string(m.type));
    }
    PayloadReader rd(m.payload);
    const std::uint8_t peer_parity = rd.u8();
    const std::uint64_t peer_offset = rd.u64();
    rd.expect_end();
    if (peer_parity != r.parity || peer_offset != r.window_offset) {
        throw ChatRefused("chat refused: key windows disagree (keys desynchronized)");
    }
    const std::uint64_t end = r.window_offset + kHandshakeBits;
    r.lane_base = (end + kKeyPageBits - 1) / kKeyPageBits * kKeyPageBits;
    return r;
}

Message encode_chat_frame(const CipherFrame& frame) {
    PayloadWriter w;
    w.u64(frame.seq).u64(frame.key_offset).u32(static_cast<std::uint32_t>(frame.ciphertext.size()));
    w.bytes(frame.ciphertext);
    return w.into(MsgType::ChatData);
}

CipherFrame decode_chat_frame(const Message& msg) {
    if (msg.type != MsgType::ChatData) {
        throw ProtocolError(std::string("expected CHAT_DATA, got ") + to_string(msg.type));
    }
    PayloadReader r(msg.payload);
    CipherFrame f;
    f.seq = r.u64();
    f.key_offset = r.u64();
    const std::uint32_t n = r.u32();
    const auto body = r.bytes(n);
    r.expect_end();
    f.ciphertext.assign(body.begin(), body.end());
    return f;
}

ChatSession::ChatSession(MessageChannel& channel, KeyStore& keys, Role role,
                         std::uint64_t lane_base, std::chrono::milliseconds key_wait)
    : channel_(channel),
      tx_(keys, lane_base, role == Role::Alice ? 0 : 1),
      rx_(keys, lane_base, role == Role::Alice ? 1 : 0),
      key_wait_(key_wait) {}

void ChatSession::send(std::span<const std::uint8_t> payload) {
    CipherFrame f;
    f.seq = tx_seq_;
    f.key_offset = tx_.next_offset();
    const Bits key = tx_.take(8 * static_cast<std::uint64_t>(payload.size()), key_wait_);
    f.ciphertext.assign(payload.begin(), payload.end());
    xor_with_key(f.ciphertext, key);
    channel_.send(encode_chat_frame(f));
    ++tx_seq_;
}

std::vector<std::uint8_t> ChatSession::receive(std::chrono::milliseconds timeout) {
    const CipherFrame f = decode_chat_frame(channel_.receive(timeout));
    if (f.seq != rx_seq_) {
        throw OtpSyncError("chat frame sequence " + std::to_string(f.seq) + ", expected " +
                           std::to_string(rx_seq_));
    }
    if (f.key_offset != rx_.next_offset()) {
        throw OtpSyncError("chat frame key offset " + std::to_string(f.key_offset) +
                           ", expected " + std::to_string(rx_.next_offset()));
    }
    const Bits key = rx_.take(8 * static_cast<std::uint64_t>(f.ciphertext.size()), key_wait_);
    std::vector<std::uint8_t> out = f.ciphertext;
    xor_with_key(out, key);
    ++rx_seq_;
    return out;
}

}  // namespace qkd
