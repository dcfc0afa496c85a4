#include "qkd/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string_view>
#include <utility>

namespace qkd {

Polarization polarization_of_channel(int channel) {
    if (channel < 1 || channel > 4) {
        throw std::out_of_range("detector channel must be in 1..4, got " + std::to_string(channel));
    }
    return static_cast<Polarization>(channel - 1);
}

const char* to_string(Basis b) noexcept {
    return b == Basis::Rectilinear ? "rectilinear" : "diagonal";
}

double channel_efficiency(const LinkBudget& link) noexcept {
    return link.eta_frontend * link.eta_decode * link.eta_detector * link.eta_residual;
}

SimConfig default_config() {
    SimConfig cfg;
    // Residual pointing/atmospheric factor is solved so the overall
    // channel efficiency is exactly 31.64 %.
    cfg.link.eta_residual =
        0.3164 / (cfg.link.eta_frontend * cfg.link.eta_decode * cfg.link.eta_detector);
    return cfg;
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid configuration: " + what);
}

bool is_fraction(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

void validate(const SimConfig& cfg) {
    const LinkBudget& l = cfg.link;
    require(std::isfinite(l.mu) && l.mu >= 0.0, "link.mu must be >= 0");
    require(std::isfinite(l.prf_hz) && l.prf_hz > 0.0, "link.prf_hz must be > 0");
    for (auto [name, v] : {std::pair{"link.eta_frontend", l.eta_frontend},
                           std::pair{"link.eta_decode", l.eta_decode},
                           std::pair{"link.eta_detector", l.eta_detector},
                           std::pair{"link.eta_residual", l.eta_residual},
                           std::pair{"link.e_pol", l.e_pol},
                           std::pair{"link.sync_efficiency", l.sync_efficiency},
                           std::pair{"link.sift_fraction", l.sift_fraction},
                           std::pair{"link.qber_sample_fraction", l.qber_sample_fraction},
                           std::pair{"link.pa_ratio", l.pa_ratio},
                           std::pair{"clock_center_prob", cfg.clock_center_prob},
                           std::pair{"eve_fraction", cfg.eve_fraction},
                           std::pair{"sync_subset_fraction", cfg.sync_subset_fraction},
                           std::pair{"lock_threshold", cfg.lock_threshold},
                           std::pair{"abort_threshold", cfg.abort_threshold}}) {
        require(is_fraction(v), std::string(name) + " must be in [0,1]");
    }
    require(l.distance_m >= 0.0, "link.distance_m must be >= 0");
    require(l.aperture_mm > 0.0, "link.aperture_mm must be > 0");
    require(l.footprint0_mm >= 0.0, "link.footprint0_mm must be >= 0");
    require(l.divergence_urad >= 0.0, "link.divergence_urad must be >= 0");
    require(l.dark_cps >= 0.0, "link.dark_cps must be >= 0");
    require(cfg.burst_seconds > 0.0, "burst_seconds must be > 0");
    require(cfg.bins_per_frame >= 2, "bins_per_frame must be >= 2");
    require(cfg.pps_jitter_sigma_ns >= 0.0, "pps_jitter_sigma_ns must be >= 0");
    require(cfg.pps_jitter_cap_ns >= cfg.pps_jitter_sigma_ns,
            "pps_jitter_cap_ns must be >= pps_jitter_sigma_ns");
    require(cfg.clock_spread_bins >= 0 && 2 * cfg.clock_spread_bins < cfg.bins_per_frame,
            "clock_spread_bins must fit inside one frame");
    require(cfg.sync_search_min_frames <= cfg.sync_search_max_frames,
            "sync search range is empty");
    require(cfg.winnow_block_bits == 8, "winnow_block_bits must be 8");
    require(cfg.winnow_max_passes >= 1, "winnow_max_passes must be >= 1");
    require(cfg.phase_timeout_s > 0.0, "phase_timeout_s must be > 0");
    require(pulses_per_burst(cfg) <= 0xFFFFFFFFULL, "burst too long for 32-bit frame indices");
}

double bin_width_ns(const SimConfig& cfg) noexcept {
    return 1.0e9 / (cfg.link.prf_hz * cfg.bins_per_frame);
}

std::uint64_t pulses_per_burst(const SimConfig& cfg) noexcept {
    return static_cast<std::uint64_t>(std::llround(cfg.link.prf_hz * cfg.burst_seconds));
}

std::uint64_t sync_subset_size(const SimConfig& cfg) noexcept {
    return static_cast<std::uint64_t>(
        std::llround(static_cast<double>(pulses_per_burst(cfg)) * cfg.sync_subset_fraction));
}

double time_of_flight_ns(const SimConfig& cfg) noexcept {
    constexpr double kSpeedOfLight = 299'792'458.0;
    return cfg.link.distance_m / kSpeedOfLight * 1.0e9;
}

namespace {

struct Field {
    std::string_view key;
    std::function<void(SimConfig&, const std::string&)> set;
    std::function<std::string(const SimConfig&)> get;
};

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + text + "'");
    }
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
    Int v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("bad integer value for " + key + ": '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("bad boolean value for " + key + ": '" + text + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

#define QKD_DOUBLE(name, member)                                                        \
    Field {                                                                             \
        name, [](SimConfig& c, const std::string& s) { c.member = parse_double(name, s); }, \
            [](const SimConfig& c) { return fmt_double(c.member); }                     \
    }
#define QKD_INT(name, member)                                                               \
    Field {                                                                                 \
        name,                                                                               \
            [](SimConfig& c, const std::string& s) {                                        \
                c.member = parse_int<decltype(c.member)>(name, s);                          \
            },                                                                              \
            [](const SimConfig& c) { return std::to_string(c.member); }                     \
    }
#define QKD_BOOL(name, member)                                                            \
    Field {                                                                               \
        name, [](SimConfig& c, const std::string& s) { c.member = parse_bool(name, s); }, \
            [](const SimConfig& c) { return std::string(c.member ? "true" : "false"); }   \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        QKD_DOUBLE("link.mu", link.mu),
        QKD_DOUBLE("link.prf_hz", link.prf_hz),
        QKD_DOUBLE("link.eta_frontend", link.eta_frontend),
        QKD_DOUBLE("link.eta_decode", link.eta_decode),
        QKD_DOUBLE("link.eta_detector", link.eta_detector),
        QKD_DOUBLE("link.eta_residual", link.eta_residual),
        QKD_DOUBLE("link.distance_m", link.distance_m),
        QKD_DOUBLE("link.aperture_mm", link.aperture_mm),
        QKD_DOUBLE("link.footprint0_mm", link.footprint0_mm),
        QKD_DOUBLE("link.divergence_urad", link.divergence_urad),
        QKD_DOUBLE("link.dark_cps", link.dark_cps),
        QKD_DOUBLE("link.e_pol", link.e_pol),
        QKD_DOUBLE("link.sync_efficiency", link.sync_efficiency),
        QKD_DOUBLE("link.sift_fraction", link.sift_fraction),
        QKD_DOUBLE("link.qber_sample_fraction", link.qber_sample_fraction),
        QKD_DOUBLE("link.pa_ratio", link.pa_ratio),
        QKD_DOUBLE("burst_seconds", burst_seconds),
        QKD_INT("bins_per_frame", bins_per_frame),
        QKD_DOUBLE("pps_jitter_sigma_ns", pps_jitter_sigma_ns),
        QKD_DOUBLE("pps_jitter_cap_ns", pps_jitter_cap_ns),
        QKD_INT("clock_spread_bins", clock_spread_bins),
        QKD_DOUBLE("clock_center_prob", clock_center_prob),
        QKD_BOOL("eve_enabled", eve_enabled),
        QKD_DOUBLE("eve_fraction", eve_fraction),
        QKD_INT("rng_seed", rng_seed),
        QKD_DOUBLE("sync_subset_fraction", sync_subset_fraction),
        QKD_INT("sync_search_min_frames", sync_search_min_frames),
        QKD_INT("sync_search_max_frames", sync_search_max_frames),
        QKD_DOUBLE("lock_threshold", lock_threshold),
        QKD_DOUBLE("abort_threshold", abort_threshold),
        QKD_INT("winnow_block_bits", winnow_block_bits),
        QKD_INT("winnow_max_passes", winnow_max_passes),
        QKD_BOOL("winnow_discard_leaked", winnow_discard_leaked),
        QKD_DOUBLE("phase_timeout_s", phase_timeout_s),
    };
    return table;
}

#undef QKD_DOUBLE
#undef QKD_INT
#undef QKD_BOOL

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

void set_config_value(SimConfig& cfg, const std::string& key, const std::string& value) {
    for (const Field& f : fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown configuration key: " + key);
}

SimConfig parse_config(std::istream& in, SimConfig base) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        }
        set_config_value(base, trim(std::string_view(t).substr(0, eq)),
                         trim(std::string_view(t).substr(eq + 1)));
    }
    validate(base);
    return base;
}

SimConfig load_config_file(const std::string& path, SimConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in, std::move(base));
}

std::string to_config_text(const SimConfig& cfg) {
    std::ostringstream out;
    for (const Field& f : fields()) out << f.key << '=' << f.get(cfg) << '\n';
    return out.str();
}

}  // namespace qkd
