#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>

#include "qkd/postproc.hpp"

namespace qkd {

/// KeyBuffer shared between the session that fills it and the messaging
/// layer that drains it. Reads past the end wait for fresh key.
class KeyStore {
  public:
    void append(const Bits& bits);

    /// Claims the next n bits at the cursor; throws InsufficientKey now if
    /// they are not there.
    Bits consume(std::uint64_t n);

    /// Claims [offset, offset + n), waiting up to `timeout` for the buffer to
    /// grow that far. Throws InsufficientKey on timeout or after close().
    Bits claim_blocking(std::uint64_t offset, std::uint64_t n, std::chrono::milliseconds timeout);

    /// Wakes every waiter; later waits fail immediately.
    void close();

    std::uint64_t size() const;
    std::uint64_t available() const;
    std::uint64_t consumed_bits() const;
    std::uint64_t consumed_upto() const;

    KeyBuffer snapshot() const;

  private:
    mutable std::mutex mutex_;
    std::condition_variable grown_;
    KeyBuffer buffer_;
    bool closed_ = false;
};

}  // namespace qkd
