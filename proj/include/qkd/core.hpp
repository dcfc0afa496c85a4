#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkd {

/// One bit per element, values 0 or 1.
using Bits = std::vector<std::uint8_t>;

enum class Basis : std::uint8_t { Rectilinear = 0, Diagonal = 1 };

/// H = 0 deg, V = 90 deg, D = +45 deg, A = -45 deg.
enum class Polarization : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

constexpr Polarization encode_polarization(Basis basis, std::uint8_t bit) noexcept {
    return static_cast<Polarization>((static_cast<std::uint8_t>(basis) << 1) | (bit & 1U));
}

constexpr Basis basis_of(Polarization p) noexcept {
    return static_cast<Basis>(static_cast<std::uint8_t>(p) >> 1);
}

constexpr std::uint8_t bit_of(Polarization p) noexcept {
    return static_cast<std::uint8_t>(p) & 1U;
}

// Detector channels: ch1 = H, ch2 = V, ch3 = D, ch4 = A.
constexpr int channel_of(Polarization p) noexcept { return static_cast<int>(p) + 1; }

Polarization polarization_of_channel(int channel);

inline Basis basis_of_channel(int channel) { return basis_of(polarization_of_channel(channel)); }
inline std::uint8_t bit_of_channel(int channel) { return bit_of(polarization_of_channel(channel)); }

constexpr Basis other_basis(Basis b) noexcept {
    return b == Basis::Rectilinear ? Basis::Diagonal : Basis::Rectilinear;
}

const char* to_string(Basis b) noexcept;

/// One emitted weak coherent pulse.
struct PulseRecord {
    std::uint32_t frame_index = 0;
    Basis basis = Basis::Rectilinear;
    std::uint8_t bit = 0;
    std::uint16_t photon_count = 0;

    friend bool operator==(const PulseRecord&, const PulseRecord&) = default;
};

/// One receiver click at 12.5 ns time-tag resolution.
struct DetectionEvent {
    std::int64_t bin_index = 0;
    std::uint8_t channel = 1;
    bool multi_click = false;

    friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

struct LinkBudget {
    double mu = 0.15;
    double prf_hz = 2.0e7;
    double eta_frontend = 0.667;
    double eta_decode = 0.7547;
    double eta_detector = 0.70;
    double eta_residual = 0.3164 / (0.667 * 0.7547 * 0.70);
    double distance_m = 300.0;
    double aperture_mm = 80.0;
    double footprint0_mm = 30.2;
    double divergence_urad = 66.0;
    double dark_cps = 300.0;
    double e_pol = 0.025;
    double sync_efficiency = 0.995;
    double sift_fraction = 0.5;
    double qber_sample_fraction = 0.05;
    double pa_ratio = 11.0 / 16.0;

    friend bool operator==(const LinkBudget&, const LinkBudget&) = default;
};

struct SimConfig {
    LinkBudget link;
    double burst_seconds = 1.0;
    int bins_per_frame = 4;
    double pps_jitter_sigma_ns = 50.0;
    double pps_jitter_cap_ns = 100.0;
    int clock_spread_bins = 1;
    double clock_center_prob = 0.6;
    bool eve_enabled = false;
    double eve_fraction = 1.0;
    std::uint64_t rng_seed = 1;

    // Synchronization and distillation knobs.
    double sync_subset_fraction = 0.005;
    std::int64_t sync_search_min_frames = 0;
    std::int64_t sync_search_max_frames = 40;
    double lock_threshold = 0.35;
    double abort_threshold = 0.11;
    int winnow_block_bits = 8;
    int winnow_max_passes = 4;
    bool winnow_discard_leaked = false;
    double phase_timeout_s = 30.0;

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Product of the non-geometric per-photon efficiencies.
double channel_efficiency(const LinkBudget& link) noexcept;

/// Operating point of the 300 m inter-building link.
SimConfig default_config();

/// Throws ConfigError on any violated invariant.
void validate(const SimConfig& cfg);

double bin_width_ns(const SimConfig& cfg) noexcept;
std::uint64_t pulses_per_burst(const SimConfig& cfg) noexcept;
std::uint64_t sync_subset_size(const SimConfig& cfg) noexcept;
double time_of_flight_ns(const SimConfig& cfg) noexcept;

/// Parses `key=value` lines on top of `base`. Blank lines and `#` comments
/// are skipped; unknown keys and malformed values throw ConfigError.
SimConfig parse_config(std::istream& in, SimConfig base = default_config());
SimConfig load_config_file(const std::string& path, SimConfig base = default_config());
void set_config_value(SimConfig& cfg, const std::string& key, const std::string& value);
std::string to_config_text(const SimConfig& cfg);

}  // namespace qkd
