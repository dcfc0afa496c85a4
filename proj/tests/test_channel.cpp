#include <doctest.h>

#include <sys/socket.h>

#include <thread>

#include "qkd/channel.hpp"

using namespace qkd;
using namespace std::chrono_literals;

TEST_CASE("memory channel pair") {
    auto [a, b] = make_memory_channel_pair();
    a->send({MsgType::Hello, {1, 2}});
    a->send({MsgType::Bases, {}});
    CHECK(b->receive(100ms) == Message{MsgType::Hello, {1, 2}});
    CHECK(b->receive(100ms).type == MsgType::Bases);
    CHECK_THROWS_AS(b->receive(20ms), TimeoutError);
    b->send({MsgType::KeyHash, {9}});
    b->close();
    // Queued frames are still delivered, then the close is seen.
    CHECK(a->receive(100ms).type == MsgType::KeyHash);
    CHECK_THROWS_AS(a->receive(100ms), TransportError);
    CHECK_THROWS_AS(a->send({MsgType::Hello, {}}), TransportError);
}

TEST_CASE("half close keeps the reverse direction open") {
    auto [a, b] = make_memory_channel_pair();
    a->close_send();
    CHECK_THROWS_AS(b->receive(100ms), TransportError);
    b->send({MsgType::ChatData, {}});
    CHECK(a->receive(100ms).type == MsgType::ChatData);
}

TEST_CASE("recording channel keeps a trace") {
    auto [a, b] = make_memory_channel_pair();
    ChannelTrace trace;
    RecordingChannel rec(*a, "alice", trace);
    rec.send({MsgType::PaSeed, {1}});
    CHECK(b->receive(100ms).type == MsgType::PaSeed);
    const auto t = trace.snapshot();
    REQUIRE(t.size() == 1);
    CHECK(t[0].sender == "alice");
    CHECK(t[0].message.payload == std::vector<std::uint8_t>{1});
}

TEST_CASE("TCP loopback round trip") {
    TcpListener listener(0, "127.0.0.1");
    std::unique_ptr<TcpChannel> server;
    std::thread accept([&] { server = std::make_unique<TcpChannel>(listener.accept(2000ms)); });
    TcpChannel client(tcp_connect("127.0.0.1", listener.port(), 2000ms));
    accept.join();

    std::vector<std::uint8_t> big(3'000'000);
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 7);
    std::thread sender([&] {
        client.send({MsgType::Hello, {1}});
        client.send({MsgType::SimPulseStream, big});
    });
    CHECK(server->receive(2000ms) == Message{MsgType::Hello, {1}});
    CHECK(server->receive(5000ms).payload == big);
    sender.join();
    CHECK_THROWS_AS(server->receive(50ms), TimeoutError);

    server->send({MsgType::KeyHash, {}});
    CHECK(client.receive(2000ms).type == MsgType::KeyHash);
    client.close();
    CHECK_THROWS_AS(server->receive(2000ms), TransportError);
}

TEST_CASE("TCP peer closing mid-frame is a transport error") {
    TcpListener listener(0, "127.0.0.1");
    std::unique_ptr<TcpChannel> server;
    std::thread accept([&] { server = std::make_unique<TcpChannel>(listener.accept(2000ms)); });
    Socket raw = tcp_connect("127.0.0.1", listener.port(), 2000ms);
    accept.join();
    const std::uint8_t partial[] = {0, 0, 0, 10, 0x01, 1, 2, 3, 4};
    REQUIRE(::send(raw.fd(), partial, sizeof partial, 0) == static_cast<ssize_t>(sizeof partial));
    raw.reset();
    CHECK_THROWS_AS(server->receive(2000ms), TransportError);
}

TEST_CASE("TCP garbage header is a protocol error") {
    TcpListener listener(0, "127.0.0.1");
    std::unique_ptr<TcpChannel> server;
    std::thread accept([&] { server = std::make_unique<TcpChannel>(listener.accept(2000ms)); });
    Socket raw = tcp_connect("127.0.0.1", listener.port(), 2000ms);
    accept.join();
    const std::uint8_t bad[] = {0, 0, 0, 1, 0x77};
    REQUIRE(::send(raw.fd(), bad, sizeof bad, 0) == static_cast<ssize_t>(sizeof bad));
    CHECK_THROWS_AS(server->receive(2000ms), ProtocolError);
}

TEST_CASE("connect gives up after the deadline") {
    TcpListener probe(0, "127.0.0.1");
    const auto port = probe.port();
    { TcpListener gone = std::move(probe); }
    CHECK_THROWS_AS(tcp_connect("127.0.0.1", port, 200ms), TimeoutError);
}

TEST_CASE("host:port parsing") {
    CHECK(parse_host_port("127.0.0.1:47000") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 47000});
    CHECK(parse_host_port("localhost:1").first == "localhost");
    CHECK_THROWS(parse_host_port("nohost"));
    CHECK_THROWS(parse_host_port("h:70000"));
    CHECK_THROWS(parse_host_port("h:x"));
    CHECK_THROWS(parse_host_port(":5"));
}
