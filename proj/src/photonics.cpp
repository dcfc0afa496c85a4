#include "qkd/photonics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "qkd/eve.hpp"
#include "qkd/timing.hpp"

namespace qkd {

Prbs11Step prbs11_next(std::uint16_t state) {
    if (state == 0 || state > 0x7FF) {
        throw std::invalid_argument("PRBS11 state must be a nonzero 11-bit value");
    }
    const auto out = static_cast<std::uint8_t>((state >> 10) & 1U);
    const auto feedback = static_cast<std::uint16_t>(((state >> 10) ^ (state >> 8)) & 1U);
    return {out, static_cast<std::uint16_t>(((state << 1) | feedback) & 0x7FF)};
}

Prbs11::Prbs11(std::uint16_t seed) : state_(seed) {
    prbs11_next(seed);  // validates
}

std::uint8_t Prbs11::next() {
    const Prbs11Step s = prbs11_next(state_);
    state_ = s.state;
    return s.bit;
}

TxBurst generate_burst(const SimConfig& cfg, RandomStream& rng) {
    const std::uint64_t n = pulses_per_burst(cfg);
    Prbs11 basis_gen(static_cast<std::uint16_t>(1 + rng.below(0x7FF)));
    Prbs11 bit_gen(static_cast<std::uint16_t>(1 + rng.below(0x7FF)));

    TxBurst tx;
    tx.pulses.resize(n);
    const double mu = cfg.link.mu;
    for (std::uint64_t k = 0; k < n; ++k) {
        PulseRecord& p = tx.pulses[k];
        p.frame_index = static_cast<std::uint32_t>(k);
        p.basis = basis_gen.next() ? Basis::Diagonal : Basis::Rectilinear;
        p.bit = bit_gen.next();
        const std::uint64_t photons = mu > 0.0 ? rng.poisson(mu) : 0;
        p.photon_count = static_cast<std::uint16_t>(
            std::min<std::uint64_t>(photons, std::numeric_limits<std::uint16_t>::max()));
    }
    tx.basis_prbs_state = basis_gen.state();
    tx.bit_prbs_state = bit_gen.state();
    return tx;
}

double eta_geometric(double distance_m, double aperture_mm, double footprint0_mm,
                     double divergence_urad) noexcept {
    // footprint [mm] = footprint0 [mm] + divergence [urad] * distance [m] * 1e-3
    const double footprint = footprint0_mm + divergence_urad * distance_m * 1.0e-3;
    if (footprint <= aperture_mm) return 1.0;
    const double ratio = aperture_mm / footprint;
    return ratio * ratio;
}

double eta_geometric(const LinkBudget& link) noexcept {
    return eta_geometric(link.distance_m, link.aperture_mm, link.footprint0_mm,
                         link.divergence_urad);
}

double path_efficiency(const LinkBudget& link) noexcept {
    return eta_geometric(link) * link.eta_residual;
}

double receiver_efficiency(const LinkBudget& link) noexcept {
    return link.eta_frontend * link.eta_decode * link.eta_detector;
}

namespace {

// Offset in bins drawn from the relative clock spread: the central bin with
// probability clock_center_prob, the rest shared evenly by +-1..+-spread.
int clock_spread_draw(const SimConfig& cfg, RandomStream& rng) {
    const int spread = cfg.clock_spread_bins;
    if (spread == 0) return 0;
    const double u = rng.uniform();
    if (u < cfg.clock_center_prob) return 0;
    const auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * spread)));
    return pick < spread ? -(pick + 1) : (pick - spread + 1);
}

}  // namespace

RxBurst transmit_and_detect(const TxBurst& tx, const SimConfig& cfg, InterceptResend* eve,
                            RandomStream& rng) {
    RxBurst rx;
    rx.realized_tof_ns = time_of_flight_ns(cfg);
    rx.realized_pps_offset_ns = sample_pps_offset(cfg, rng);
    const double width = bin_width_ns(cfg);
    rx.true_offset_bins =
        std::llround((rx.realized_tof_ns - rx.realized_pps_offset_ns) / width);

    const std::int64_t bpf = cfg.bins_per_frame;
    const double p_path = path_efficiency(cfg.link);
    const double p_rx = receiver_efficiency(cfg.link);
    const double e_pol = cfg.link.e_pol;

    std::vector<DetectionEvent>& out = rx.detections;
    out.reserve(static_cast<std::size_t>(static_cast<double>(tx.pulses.size()) * 0.06) + 64);

    for (const PulseRecord& sent : tx.pulses) {
        const PulseRecord pulse = eve ? eve->apply(sent) : sent;
        if (pulse.photon_count == 0) continue;
        unsigned fired = 0;  // bit c-1 set when channel c clicks
        for (std::uint16_t i = 0; i < pulse.photon_count; ++i) {
            if (!rng.bernoulli(p_path)) continue;
            const Basis measured = rng.bit() ? Basis::Diagonal : Basis::Rectilinear;
            std::uint8_t bit;
            if (measured == pulse.basis) {
                bit = pulse.bit ^ static_cast<std::uint8_t>(rng.bernoulli(e_pol));
            } else {
                bit = rng.bit();
            }
            if (!rng.bernoulli(p_rx)) continue;
            fired |= 1U << (channel_of(encode_polarization(measured, bit)) - 1);
        }
        if (fired == 0) continue;
        const std::int64_t bin = bpf * static_cast<std::int64_t>(pulse.frame_index) +
                                 rx.true_offset_bins + clock_spread_draw(cfg, rng);
        if (bin < 0) continue;  // before the receiver counter started
        for (int c = 0; c < 4; ++c) {
            if (fired & (1U << c)) out.push_back({bin, static_cast<std::uint8_t>(c + 1), false});
        }
    }

    const std::int64_t span_bins =
        bpf * static_cast<std::int64_t>(tx.pulses.size()) + std::max<std::int64_t>(0, rx.true_offset_bins);
    const std::uint64_t n_dark = rng.poisson(cfg.link.dark_cps * cfg.burst_seconds);
    for (std::uint64_t i = 0; i < n_dark && span_bins > 0; ++i) {
        const auto bin = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span_bins)));
        const auto ch = static_cast<std::uint8_t>(1 + rng.below(4));
        out.push_back({bin, ch, false});
    }

    auto less = [](const DetectionEvent& a, const DetectionEvent& b) {
        return a.bin_index != b.bin_index ? a.bin_index < b.bin_index : a.channel < b.channel;
    };
    if (!std::is_sorted(out.begin(), out.end(), less)) std::sort(out.begin(), out.end(), less);
    out.erase(std::unique(out.begin(), out.end(),
                          [](const DetectionEvent& a, const DetectionEvent& b) {
                              return a.bin_index == b.bin_index && a.channel == b.channel;
                          }),
              out.end());
    for (std::size_t i = 0; i < out.size();) {
        std::size_t j = i + 1;
        while (j < out.size() && out[j].bin_index == out[i].bin_index) ++j;
        if (j - i > 1) {
            for (std::size_t k = i; k < j; ++k) out[k].multi_click = true;
        }
        i = j;
    }
    return rx;
}

std::size_t count_click_bins(const RxBurst& rx) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < rx.detections.size(); ++i) {
        if (i == 0 || rx.detections[i].bin_index != rx.detections[i - 1].bin_index) ++n;
    }
    return n;
}

void write_detections(std::ostream& out, const RxBurst& rx) {
    for (const DetectionEvent& d : rx.detections) {
        out << d.bin_index << ',' << static_cast<int>(d.channel) << ',' << (d.multi_click ? 1 : 0)
            << '\n';
    }
}

std::vector<DetectionEvent> read_detections(std::istream& in) {
    std::vector<DetectionEvent> events;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        long long bin = 0;
        int ch = 0, multi = 0;
        if (std::sscanf(line.c_str(), "%lld,%d,%d", &bin, &ch, &multi) != 3 || ch < 1 || ch > 4 ||
            (multi != 0 && multi != 1)) {
            throw std::runtime_error("malformed detection line: " + line);
        }
        events.push_back({bin, static_cast<std::uint8_t>(ch), multi == 1});
    }
    return events;
}

}  // namespace qkd
