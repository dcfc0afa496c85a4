#include "qkd/eve.hpp"

#include <ostream>
#include <stdexcept>

namespace qkd {

PulseRecord intercept_resend(const PulseRecord& pulse, RandomStream& rng) {
    const Basis eve_basis = rng.bit() ? Basis::Diagonal : Basis::Rectilinear;
    const std::uint8_t eve_bit = (eve_basis == pulse.basis) ? pulse.bit : rng.bit();
    PulseRecord out = pulse;
    out.basis = eve_basis;
    out.bit = eve_bit;
    return out;
}

InterceptResend::InterceptResend(RandomStream rng, double fraction, bool keep_log)
    : rng_(std::move(rng)), fraction_(fraction), keep_log_(keep_log) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("interception fraction must be in [0,1]");
    }
}

PulseRecord InterceptResend::apply(const PulseRecord& pulse) {
    if (fraction_ < 1.0 && !rng_.bernoulli(fraction_)) return pulse;
    PulseRecord out = intercept_resend(pulse, rng_);
    ++log_.intercepted;
    if (keep_log_) {
        log_.measured_bits.push_back(out.bit);
        log_.measured_bases.push_back(out.basis);
    }
    return out;
}

void write_eve_log_csv(std::ostream& out, const EveLog& log) {
    out << "pulse_seq,basis,bit\n";
    for (std::size_t i = 0; i < log.measured_bits.size(); ++i) {
        out << i << ',' << to_string(log.measured_bases[i]) << ','
            << static_cast<int>(log.measured_bits[i]) << '\n';
    }
}

}  // namespace qkd
