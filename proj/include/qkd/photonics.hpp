#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/rng.hpp"

namespace qkd {

class InterceptResend;

struct Prbs11Step {
    std::uint8_t bit;
    std::uint16_t state;
};

/// One step of the x^11 + x^9 + 1 Fibonacci LFSR. Zero (the degenerate
/// fixed point) and values wider than 11 bits throw std::invalid_argument.
Prbs11Step prbs11_next(std::uint16_t state);

class Prbs11 {
  public:
    explicit Prbs11(std::uint16_t seed);
    std::uint8_t next();
    std::uint16_t state() const noexcept { return state_; }

  private:
    std::uint16_t state_;
};

struct TxBurst {
    std::vector<PulseRecord> pulses;
    std::uint16_t basis_prbs_state = 1;
    std::uint16_t bit_prbs_state = 1;
};

struct RxBurst {
    std::vector<DetectionEvent> detections;  // sorted by (bin_index, channel)
    double realized_pps_offset_ns = 0.0;
    double realized_tof_ns = 0.0;
    /// Ground truth known only to the simulator: receiver bin of pulse k's
    /// central click is bins_per_frame * k + true_offset_bins.
    std::int64_t true_offset_bins = 0;
};

/// Bases and bits from two PRBS11 generators seeded from `rng`; photon
/// numbers are Poisson(mu).
TxBurst generate_burst(const SimConfig& cfg, RandomStream& rng);

/// Free-space channel, polarization decoding and detection for one burst.
/// `eve` (optional) transforms each pulse before it enters the channel.
RxBurst transmit_and_detect(const TxBurst& tx, const SimConfig& cfg, InterceptResend* eve,
                            RandomStream& rng);

/// Collection fraction min(1, (aperture / footprint)^2) where the footprint
/// grows linearly with distance.
double eta_geometric(double distance_m, double aperture_mm, double footprint0_mm,
                     double divergence_urad) noexcept;

double eta_geometric(const LinkBudget& link) noexcept;

/// Per-photon survival probability along the path (geometry x residual).
double path_efficiency(const LinkBudget& link) noexcept;

/// Per-photon efficiency of front-end optics, decoder and detector.
double receiver_efficiency(const LinkBudget& link) noexcept;

/// Number of distinct time bins holding at least one click.
std::size_t count_click_bins(const RxBurst& rx);

/// Burst dump: one `bin_index,channel,multi_flag` line per detection.
void write_detections(std::ostream& out, const RxBurst& rx);
std::vector<DetectionEvent> read_detections(std::istream& in);

}  // namespace qkd
