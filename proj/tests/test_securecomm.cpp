#include <doctest.h>

#include <future>
#include <string>
#include <thread>

#include "qkd/securecomm.hpp"

using namespace qkd;
using namespace std::chrono_literals;

namespace {

Bits random_bits(std::size_t n, std::uint64_t seed) {
    RandomStream rng(seed, "key");
    Bits b(n);
    for (auto& x : b) x = rng.bit();
    return b;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("one-time pad seal and open") {
    const Bits key = random_bits(4096, 71);
    KeyBuffer tx, rx;
    tx.append(key);
    rx.append(key);
    const auto msg = bytes_of("attack at dawn");
    const CipherFrame f = otp_seal(msg, tx, 0);
    CHECK(f.key_offset == 0);
    CHECK(f.ciphertext != msg);
    CHECK(otp_open(f, rx, 0) == msg);
    const CipherFrame g = otp_seal(msg, tx, 1);
    CHECK(g.key_offset == msg.size() * 8);
    CHECK(g.ciphertext != f.ciphertext);
    CHECK_THROWS_AS(otp_open(g, rx, 2), OtpSyncError);
    CipherFrame shifted = g;
    shifted.key_offset += 8;
    CHECK_THROWS_AS(otp_open(shifted, rx, 1), OtpSyncError);
    CHECK(otp_open(g, rx, 1) == msg);
    CHECK(tx.consumed_bits() == rx.consumed_bits());
}

TEST_CASE("zero plaintext exposes the pad, one flipped bit flips one bit") {
    const Bits key = random_bits(256, 72);
    KeyBuffer tx, rx;
    tx.append(key);
    rx.append(key);
    const std::vector<std::uint8_t> zeros(8, 0);
    CipherFrame f = otp_seal(zeros, tx, 0);
    CHECK(f.ciphertext == pack_bits(Bits(key.begin(), key.begin() + 64)));
    f.ciphertext[3] ^= 0x10;
    const auto out = otp_open(f, rx, 0);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == (i == 3 ? 0x10 : 0));
}

TEST_CASE("pad use never overlaps and runs out cleanly") {
    KeyBuffer tx;
    tx.append(random_bits(100, 73));
    const auto msg = bytes_of("0123456789ab");  // 96 bits
    otp_seal(msg, tx, 0);
    CHECK_THROWS_AS(otp_seal(msg, tx, 1), InsufficientKey);
}

TEST_CASE("chat frame encoding") {
    const CipherFrame f{5, 32768, {1, 2, 3}};
    CHECK(decode_chat_frame(encode_chat_frame(f)) == f);
    CHECK_THROWS_AS(decode_chat_frame({MsgType::Hello, {}}), ProtocolError);
    Message bad = encode_chat_frame(f);
    bad.payload.pop_back();
    CHECK_THROWS_AS(decode_chat_frame(bad), ProtocolError);
}

TEST_CASE("key store waits for fresh key") {
    KeyStore store;
    store.append(Bits(10, 1));
    CHECK(store.consume(4) == Bits(4, 1));
    CHECK_THROWS_AS(store.claim_blocking(8, 8, 20ms), InsufficientKey);
    std::thread later([&] {
        std::this_thread::sleep_for(50ms);
        store.append(Bits(10, 0));
    });
    const Bits got = store.claim_blocking(8, 8, 2000ms);
    later.join();
    CHECK(got == Bits{1, 1, 0, 0, 0, 0, 0, 0});
    CHECK(store.consumed_bits() == 12);
    CHECK_THROWS_AS(store.claim_blocking(2, 2, 20ms), KeyReuseError);
    std::thread closer([&] {
        std::this_thread::sleep_for(30ms);
        store.close();
    });
    CHECK_THROWS_AS(store.claim_blocking(100, 8, 5000ms), InsufficientKey);
    closer.join();
}

TEST_CASE("key lanes interleave whole pages") {
    KeyStore store;
    store.append(random_bits(6 * kKeyPageBits, 74));
    KeyLane a(store, kKeyPageBits, 0), b(store, kKeyPageBits, 1);
    CHECK(a.next_offset() == kKeyPageBits);
    CHECK(b.next_offset() == 2 * kKeyPageBits);
    const Bits ka = a.take(kKeyPageBits + 10, 100ms);  // spills into page 3
    CHECK(a.next_offset() == 3 * kKeyPageBits + 10);
    const Bits kb = b.take(kKeyPageBits, 100ms);
    CHECK(b.next_offset() == 4 * kKeyPageBits);
    const Bits all = store.snapshot().bits();
    CHECK(Bits(ka.begin(), ka.begin() + kKeyPageBits) ==
          Bits(all.begin() + kKeyPageBits, all.begin() + 2 * kKeyPageBits));
    CHECK(kb == Bits(all.begin() + 2 * kKeyPageBits, all.begin() + 3 * kKeyPageBits));
    CHECK(a.consumed_bits() == kKeyPageBits + 10);
    CHECK_THROWS_AS(a.take(3 * kKeyPageBits, 20ms), InsufficientKey);
}

TEST_CASE("chat handshake") {
    const Bits key = random_bits(3 * kKeyPageBits, 75);

    SUBCASE("identical keys") {
        auto [ca, cb] = make_memory_channel_pair();
        KeyStore sa, sb;
        sa.append(key);
        sb.append(key);
        auto fa = std::async(std::launch::async, [&] { return chat_handshake(*ca, sa, 1000ms); });
        const ChatHandshakeResult rb = chat_handshake(*cb, sb, 1000ms);
        const ChatHandshakeResult ra = fa.get();
        CHECK(ra.parity == rb.parity);
        CHECK(ra.lane_base == kKeyPageBits);
        CHECK(sa.consumed_bits() == kHandshakeBits);
    }

    SUBCASE("one flipped bit is refused") {
        auto [ca, cb] = make_memory_channel_pair();
        KeyStore sa, sb;
        Bits other = key;
        other[17] ^= 1;
        sa.append(key);
        sb.append(other);
        auto fa = std::async(std::launch::async, [&] { return chat_handshake(*ca, sa, 1000ms); });
        CHECK_THROWS_AS(chat_handshake(*cb, sb, 1000ms), ChatRefused);
        CHECK_THROWS_AS(fa.get(), ChatRefused);
    }

    SUBCASE("not enough key") {
        auto [ca, cb] = make_memory_channel_pair();
        KeyStore empty;
        empty.append(Bits(63, 0));
        CHECK_THROWS_AS(chat_handshake(*ca, empty, 100ms), std::invalid_argument);
    }
}

TEST_CASE("duplex chat uses disjoint key") {
    const Bits key = random_bits(4 * kKeyPageBits, 76);
    auto [ca, cb] = make_memory_channel_pair();
    KeyStore sa, sb;
    sa.append(key);
    sb.append(key);
    ChatSession alice(*ca, sa, Role::Alice, kKeyPageBits, 1000ms);
    ChatSession bob(*cb, sb, Role::Bob, kKeyPageBits, 1000ms);

    std::thread talk([&] {
        for (int i = 0; i < 50; ++i) alice.send(bytes_of("from alice " + std::to_string(i)));
    });
    for (int i = 0; i < 50; ++i) bob.send(bytes_of("from bob " + std::to_string(i)));
    for (int i = 0; i < 50; ++i) CHECK(bob.receive(1000ms) == bytes_of("from alice " + std::to_string(i)));
    for (int i = 0; i < 50; ++i) CHECK(alice.receive(1000ms) == bytes_of("from bob " + std::to_string(i)));
    talk.join();
    CHECK(alice.sent_key_bits() == bob.received_key_bits());
    CHECK(bob.sent_key_bits() == alice.received_key_bits());
}

TEST_CASE("chat waits for key produced later") {
    const Bits key = random_bits(4 * kKeyPageBits, 77);
    auto [ca, cb] = make_memory_channel_pair();
    KeyStore sa, sb;
    sa.append(Bits(key.begin(), key.begin() + kKeyPageBits));  // Alice's lane page not there yet
    sb.append(key);
    ChatSession alice(*ca, sa, Role::Alice, kKeyPageBits, 2000ms);
    ChatSession bob(*cb, sb, Role::Bob, kKeyPageBits, 2000ms);
    std::thread producer([&] {
        std::this_thread::sleep_for(50ms);
        sa.append(Bits(key.begin() + kKeyPageBits, key.end()));
    });
    alice.send(bytes_of("late"));
    producer.join();
    CHECK(bob.receive(1000ms) == bytes_of("late"));
}
