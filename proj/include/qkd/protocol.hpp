#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkd {

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    BurstStart = 0x02,
    SyncSubset = 0x03,
    FrameOffsetAck = 0x04,
    Bases = 0x05,
    QberSample = 0x06,
    Abort = 0x07,
    WinnowParities = 0x08,
    WinnowSyndromes = 0x09,
    PermSeed = 0x0A,
    PaSeed = 0x0B,
    KeyHash = 0x0C,
    ChatData = 0x0D,
    ChatHandshake = 0x0E,
    SimPulseStream = 0x0F,
};

bool is_known_type(std::uint8_t code) noexcept;
const char* to_string(MsgType t) noexcept;

struct Message {
    MsgType type = MsgType::Hello;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Message&, const Message&) = default;
};

class ProtocolError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Largest accepted frame body (type byte + payload).
inline constexpr std::uint32_t kMaxFrameBody = 256U * 1024U * 1024U;

/// 4-byte big-endian length of (type + payload), the type byte, the payload.
std::vector<std::uint8_t> encode_message(const Message& msg);

/// Decodes exactly one frame occupying all of `bytes`.
Message decode_message(std::span<const std::uint8_t> bytes);

/// Decodes the first frame of `bytes` if it is complete; `consumed` receives
/// its size. Returns nullopt while more bytes are needed. Malformed headers
/// throw ProtocolError.
std::optional<Message> try_decode_message(std::span<const std::uint8_t> bytes,
                                          std::size_t& consumed);

/// Big-endian payload builder.
class PayloadWriter {
  public:
    PayloadWriter& u8(std::uint8_t v);
    PayloadWriter& u16(std::uint16_t v);
    PayloadWriter& u32(std::uint32_t v);
    PayloadWriter& u64(std::uint64_t v);
    PayloadWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    PayloadWriter& f64(double v);
    PayloadWriter& bytes(std::span<const std::uint8_t> data);
    /// u32 bit count followed by the packed bits.
    PayloadWriter& bits(std::span<const std::uint8_t> bits);
    /// u32 length followed by the characters.
    PayloadWriter& str(std::string_view s);

    /// Both hand over the buffer and leave the writer empty.
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    Message into(MsgType t) { return {t, std::move(buf_)}; }

  private:
    std::vector<std::uint8_t> buf_;
};

/// Big-endian payload reader; any overrun throws ProtocolError.
class PayloadReader {
  public:
    explicit PayloadReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64();
    std::span<const std::uint8_t> bytes(std::size_t n);
    std::vector<std::uint8_t> bits();
    std::string str();

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    void expect_end() const;

  private:
    std::span<const std::uint8_t> take(std::size_t n);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace qkd
