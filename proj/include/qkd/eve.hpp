#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/rng.hpp"

namespace qkd {

struct EveLog {
    std::uint64_t intercepted = 0;
    Bits measured_bits;
    std::vector<Basis> measured_bases;
};

/// Measure in a random basis and re-prepare the measured state. The photon
/// number is left unchanged: the attack alters the encoding, not intensity.
PulseRecord intercept_resend(const PulseRecord& pulse, RandomStream& rng);

/// Stateful intercept-resend attacker placed in front of the receiver.
class InterceptResend {
  public:
    explicit InterceptResend(RandomStream rng, double fraction = 1.0, bool keep_log = false);

    PulseRecord apply(const PulseRecord& pulse);

    const EveLog& log() const noexcept { return log_; }
    double fraction() const noexcept { return fraction_; }

  private:
    RandomStream rng_;
    double fraction_;
    bool keep_log_;
    EveLog log_;
};

/// CSV `pulse_seq,basis,bit` of every measurement Eve made.
void write_eve_log_csv(std::ostream& out, const EveLog& log);

}  // namespace qkd
