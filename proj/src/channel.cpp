#include "qkd/channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <thread>

namespace qkd {

// ---------------------------------------------------------------------------
// In-memory pair

namespace {

struct Mailbox {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> frames;
    bool closed = false;
};

class MemoryChannel final : public MessageChannel {
  public:
    MemoryChannel(std::shared_ptr<Mailbox> inbox, std::shared_ptr<Mailbox> outbox)
        : inbox_(std::move(inbox)), outbox_(std::move(outbox)) {}
    ~MemoryChannel() override { close(); }

    void send(const Message& msg) override {
        auto bytes = encode_message(msg);
        std::lock_guard lock(outbox_->mutex);
        if (outbox_->closed) throw TransportError("peer closed the channel");
        outbox_->frames.push_back(std::move(bytes));
        outbox_->cv.notify_all();
    }

    Message receive(std::chrono::milliseconds timeout) override {
        std::unique_lock lock(inbox_->mutex);
        if (!inbox_->cv.wait_for(lock, timeout,
                                 [&] { return !inbox_->frames.empty() || inbox_->closed; })) {
            throw TimeoutError("timed out waiting for message");
        }
        if (inbox_->frames.empty()) throw TransportError("channel closed");
        auto bytes = std::move(inbox_->frames.front());
        inbox_->frames.pop_front();
        lock.unlock();
        return decode_message(bytes);
    }

    void close() override {
        for (auto* box : {inbox_.get(), outbox_.get()}) {
            std::lock_guard lock(box->mutex);
            box->closed = true;
            box->cv.notify_all();
        }
    }

    void close_send() override {
        std::lock_guard lock(outbox_->mutex);
        outbox_->closed = true;
        outbox_->cv.notify_all();
    }

  private:
    std::shared_ptr<Mailbox> inbox_;
    std::shared_ptr<Mailbox> outbox_;
};

}  // namespace

std::pair<std::unique_ptr<MessageChannel>, std::unique_ptr<MessageChannel>> make_memory_channel_pair() {
    auto a = std::make_shared<Mailbox>();
    auto b = std::make_shared<Mailbox>();
    return {std::make_unique<MemoryChannel>(a, b), std::make_unique<MemoryChannel>(b, a)};
}

std::vector<ChannelTrace::Entry> ChannelTrace::snapshot() const {
    std::lock_guard lock(mutex);
    return entries;
}

void RecordingChannel::send(const Message& msg) {
    {
        std::lock_guard lock(trace_.mutex);
        trace_.entries.push_back({name_, msg});
    }
    inner_.send(msg);
}

// ---------------------------------------------------------------------------
// Sockets

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        reset();
        fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
}

Socket::~Socket() { reset(); }

void Socket::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::shutdown_send() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw TransportError(what + ": " + std::strerror(errno));
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    return left.count() < 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 1 << 30));
}

}  // namespace

TcpListener::TcpListener(std::uint16_t port, const std::string& bind_address) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw_errno("socket");
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
        throw TransportError("bad bind address: " + bind_address);
    }
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) throw_errno("bind");
    if (::listen(s.fd(), 4) != 0) throw_errno("listen");
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    sock_ = std::move(s);
}

Socket TcpListener::accept(std::chrono::milliseconds timeout) {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (r == 0) throw TimeoutError("timed out waiting for a connection");
    if (r < 0) throw_errno("poll");
    Socket s(::accept(sock_.fd(), nullptr, nullptr));
    if (!s.valid()) throw_errno("accept");
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

Socket tcp_connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    for (;;) {
        addrinfo* res = nullptr;
        const std::string service = std::to_string(port);
        if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
            throw TransportError("cannot resolve host: " + host);
        }
        Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
        const int rc = s.valid() ? ::connect(s.fd(), res->ai_addr, res->ai_addrlen) : -1;
        ::freeaddrinfo(res);
        if (rc == 0) {
            int one = 1;
            ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return s;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            throw TimeoutError("could not connect to " + host + ":" + service);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

TcpChannel::TcpChannel(Socket sock) : sock_(std::move(sock)) {}

void TcpChannel::send(const Message& msg) {
    const auto bytes = encode_message(msg);
    std::lock_guard lock(send_mutex_);
    if (!sock_.valid()) throw TransportError("channel closed");
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::send(sock_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("send");
        }
        off += static_cast<std::size_t>(n);
    }
}

void TcpChannel::fill(std::size_t need, std::chrono::steady_clock::time_point deadline) {
    while (rx_.size() - rx_pos_ < need) {
        pollfd pfd{sock_.fd(), POLLIN, 0};
        const int r = ::poll(&pfd, 1, remaining_ms(deadline));
        if (r == 0) throw TimeoutError("timed out waiting for message");
        if (r < 0) {
            if (errno == EINTR) continue;
            throw_errno("poll");
        }
        std::uint8_t buf[65536];
        const ssize_t n = ::recv(sock_.fd(), buf, sizeof buf, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("recv");
        }
        if (n == 0) {
            if (rx_.size() == rx_pos_) throw TransportError("connection closed by peer");
            throw TransportError("connection closed in the middle of a frame (truncated)");
        }
        rx_.insert(rx_.end(), buf, buf + n);
    }
}

Message TcpChannel::receive(std::chrono::milliseconds timeout) {
    if (!sock_.valid()) throw TransportError("channel closed");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    fill(5, deadline);
    std::size_t used = 0;
    auto view = std::span<const std::uint8_t>(rx_).subspan(rx_pos_);
    auto msg = try_decode_message(view, used);
    if (!msg) {
        const std::uint32_t len = (std::uint32_t{view[0]} << 24) | (std::uint32_t{view[1]} << 16) |
                                  (std::uint32_t{view[2]} << 8) | std::uint32_t{view[3]};
        fill(4 + static_cast<std::size_t>(len), deadline);
        view = std::span<const std::uint8_t>(rx_).subspan(rx_pos_);
        msg = try_decode_message(view, used);
    }
    rx_pos_ += used;
    if (rx_pos_ == rx_.size()) {
        rx_.clear();
        rx_pos_ = 0;
    } else if (rx_pos_ > (1U << 20)) {
        rx_.erase(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(rx_pos_));
        rx_pos_ = 0;
    }
    return std::move(*msg);
}

void TcpChannel::close() { sock_.shutdown(); }

void TcpChannel::close_send() {
    std::lock_guard lock(send_mutex_);
    sock_.shutdown_send();
}

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw std::invalid_argument("expected host:port, got '" + text + "'");
    }
    const std::string port_text = text.substr(colon + 1);
    char* end = nullptr;
    const long port = std::strtol(port_text.c_str(), &end, 10);
    if (*end != '\0' || port <= 0 || port > 65535) {
        throw std::invalid_argument("bad port in '" + text + "'");
    }
    return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace qkd
