#include "qkd/keystore.hpp"

#include <string>

namespace qkd {

void KeyStore::append(const Bits& bits) {
    {
        std::lock_guard lock(mutex_);
        buffer_.append(bits);
    }
    grown_.notify_all();
}

Bits KeyStore::consume(std::uint64_t n) {
    std::lock_guard lock(mutex_);
    return buffer_.consume(n);
}

Bits KeyStore::claim_blocking(std::uint64_t offset, std::uint64_t n,
                              std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    const bool ready = grown_.wait_for(lock, timeout, [&] {
        return closed_ || buffer_.size() >= offset + n;
    });
    if (!ready || buffer_.size() < offset + n) {
        throw InsufficientKey("waiting for key up to bit " + std::to_string(offset + n) +
                              (closed_ ? ": key store closed" : ": timed out"));
    }
    return buffer_.claim(offset, n);
}

void KeyStore::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    grown_.notify_all();
}

std::uint64_t KeyStore::size() const {
    std::lock_guard lock(mutex_);
    return buffer_.size();
}

std::uint64_t KeyStore::available() const {
    std::lock_guard lock(mutex_);
    return buffer_.available();
}

std::uint64_t KeyStore::consumed_bits() const {
    std::lock_guard lock(mutex_);
    return buffer_.consumed_bits();
}

std::uint64_t KeyStore::consumed_upto() const {
    std::lock_guard lock(mutex_);
    return buffer_.consumed_upto();
}

KeyBuffer KeyStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return buffer_;
}

}  // namespace qkd
