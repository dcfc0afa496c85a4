#include "qkd/protocol.hpp"

#include <bit>
#include <cstring>

#include "qkd/postproc.hpp"

namespace qkd {

bool is_known_type(std::uint8_t code) noexcept { return code >= 0x01 && code <= 0x0F; }

const char* to_string(MsgType t) noexcept {
    switch (t) {
        case MsgType::Hello: return "HELLO";
        case MsgType::BurstStart: return "BURST_START";
        case MsgType::SyncSubset: return "SYNC_SUBSET";
        case MsgType::FrameOffsetAck: return "FRAME_OFFSET_ACK";
        case MsgType::Bases: return "BASES";
        case MsgType::QberSample: return "QBER_SAMPLE";
        case MsgType::Abort: return "ABORT";
        case MsgType::WinnowParities: return "WINNOW_PARITIES";
        case MsgType::WinnowSyndromes: return "WINNOW_SYNDROMES";
        case MsgType::PermSeed: return "PERM_SEED";
        case MsgType::PaSeed: return "PA_SEED";
        case MsgType::KeyHash: return "KEY_HASH";
        case MsgType::ChatData: return "CHAT_DATA";
        case MsgType::ChatHandshake: return "CHAT_HANDSHAKE";
        case MsgType::SimPulseStream: return "SIM_PULSESTREAM";
    }
    return "UNKNOWN";
}

namespace {

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
}

}  // namespace

std::vector<std::uint8_t> encode_message(const Message& msg) {
    if (!is_known_type(static_cast<std::uint8_t>(msg.type))) {
        throw ProtocolError("cannot encode unknown message type");
    }
    if (msg.payload.size() >= kMaxFrameBody) throw ProtocolError("message payload too large");
    const auto len = static_cast<std::uint32_t>(msg.payload.size() + 1);
    std::vector<std::uint8_t> out;
    out.reserve(4 + len);
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    out.push_back(static_cast<std::uint8_t>(msg.type));
    out.insert(out.end(), msg.payload.begin(), msg.payload.end());
    return out;
}

std::optional<Message> try_decode_message(std::span<const std::uint8_t> bytes,
                                          std::size_t& consumed) {
    consumed = 0;
    if (bytes.size() < 4) return std::nullopt;
    const std::uint32_t len = read_be32(bytes.data());
    if (len == 0) throw ProtocolError("frame length 0 has no type byte");
    if (len > kMaxFrameBody) throw ProtocolError("frame length exceeds limit");
    if (bytes.size() >= 5 && !is_known_type(bytes[4])) {
        throw ProtocolError("unknown message type " + std::to_string(bytes[4]));
    }
    if (bytes.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
    Message m;
    m.type = static_cast<MsgType>(bytes[4]);
    m.payload.assign(bytes.begin() + 5, bytes.begin() + 4 + len);
    consumed = 4 + static_cast<std::size_t>(len);
    return m;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
    std::size_t used = 0;
    auto m = try_decode_message(bytes, used);
    if (!m) throw ProtocolError("truncated frame");
    if (used != bytes.size()) throw ProtocolError("trailing bytes after frame");
    return std::move(*m);
}

PayloadWriter& PayloadWriter::u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
}

PayloadWriter& PayloadWriter::u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
    return *this;
}

PayloadWriter& PayloadWriter::u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
    return *this;
}

PayloadWriter& PayloadWriter::u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> s));
    return *this;
}

PayloadWriter& PayloadWriter::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

PayloadWriter& PayloadWriter::bytes(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
    return *this;
}

PayloadWriter& PayloadWriter::bits(std::span<const std::uint8_t> bits) {
    u32(static_cast<std::uint32_t>(bits.size()));
    const auto packed = pack_bits(bits);
    return bytes(packed);
}

PayloadWriter& PayloadWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
    return *this;
}

std::span<const std::uint8_t> PayloadReader::take(std::size_t n) {
    if (n > remaining()) throw ProtocolError("payload truncated");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint8_t PayloadReader::u8() { return take(1)[0]; }

std::uint16_t PayloadReader::u16() {
    auto s = take(2);
    return static_cast<std::uint16_t>((s[0] << 8) | s[1]);
}

std::uint32_t PayloadReader::u32() { return read_be32(take(4).data()); }

std::uint64_t PayloadReader::u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (auto b : s) v = (v << 8) | b;
    return v;
}

double PayloadReader::f64() { return std::bit_cast<double>(u64()); }

std::span<const std::uint8_t> PayloadReader::bytes(std::size_t n) { return take(n); }

std::vector<std::uint8_t> PayloadReader::bits() {
    const std::uint32_t n = u32();
    auto packed = take((static_cast<std::size_t>(n) + 7) / 8);
    return unpack_bits(packed, n);
}

std::string PayloadReader::str() {
    const std::uint32_t n = u32();
    auto s = take(n);
    return std::string(s.begin(), s.end());
}

void PayloadReader::expect_end() const {
    if (remaining() != 0) throw ProtocolError("unexpected trailing payload bytes");
}

}  // namespace qkd
