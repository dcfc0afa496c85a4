#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "qkd/protocol.hpp"

namespace qkd {

/// Connection lost, including a peer that closes in the middle of a frame.
class TransportError : public ProtocolError {
  public:
    using ProtocolError::ProtocolError;
};

class TimeoutError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Ordered, reliable message pipe between the two terminals.
class MessageChannel {
  public:
    virtual ~MessageChannel() = default;
    virtual void send(const Message& msg) = 0;
    /// Throws TimeoutError when nothing arrives in time and TransportError
    /// when the peer is gone.
    virtual Message receive(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
    /// Stops sending; the peer sees end of stream once it has read
    /// everything, while this end can still receive.
    virtual void close_send() { close(); }
};

/// Two connected in-memory endpoints. Messages pass through the wire
/// encoding so framing rules apply exactly as on TCP.
std::pair<std::unique_ptr<MessageChannel>, std::unique_ptr<MessageChannel>> make_memory_channel_pair();

/// Sent messages as observed on a channel, for inspection in tests.
struct ChannelTrace {
    struct Entry {
        std::string sender;
        Message message;
    };
    mutable std::mutex mutex;
    std::vector<Entry> entries;

    std::vector<Entry> snapshot() const;
};

/// Decorator recording every sent message into a shared trace.
class RecordingChannel final : public MessageChannel {
  public:
    RecordingChannel(MessageChannel& inner, std::string name, ChannelTrace& trace)
        : inner_(inner), name_(std::move(name)), trace_(trace) {}

    void send(const Message& msg) override;
    Message receive(std::chrono::milliseconds timeout) override { return inner_.receive(timeout); }
    void close() override { inner_.close(); }
    void close_send() override { inner_.close_send(); }

  private:
    MessageChannel& inner_;
    std::string name_;
    ChannelTrace& trace_;
};

/// Owned POSIX socket descriptor.
class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void shutdown() noexcept;
    void shutdown_send() noexcept;
    void reset() noexcept;

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    /// Binds and listens; port 0 picks an ephemeral port.
    explicit TcpListener(std::uint16_t port, const std::string& bind_address = "0.0.0.0");

    std::uint16_t port() const noexcept { return port_; }
    Socket accept(std::chrono::milliseconds timeout);

  private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

/// Connects, retrying until `timeout` while the peer is not yet listening.
Socket tcp_connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

class TcpChannel final : public MessageChannel {
  public:
    explicit TcpChannel(Socket sock);

    void send(const Message& msg) override;
    Message receive(std::chrono::milliseconds timeout) override;
    void close() override;
    void close_send() override;

  private:
    void fill(std::size_t need, std::chrono::steady_clock::time_point deadline);

    Socket sock_;
    std::mutex send_mutex_;
    std::vector<std::uint8_t> rx_;
    std::size_t rx_pos_ = 0;
};

/// Splits "host:port".
std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text);

}  // namespace qkd
