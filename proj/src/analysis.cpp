#include "qkd/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "qkd/photonics.hpp"

namespace qkd {

double poisson_pmf(int i, double mu) {
    if (i < 0 || mu < 0.0) throw std::invalid_argument("poisson_pmf: need i >= 0 and mu >= 0");
    if (mu == 0.0) return i == 0 ? 1.0 : 0.0;
    return std::exp(i * std::log(mu) - mu - std::lgamma(i + 1.0));
}

double trigger_prob(int i, double eta) {
    if (i < 0 || eta < 0.0 || eta > 1.0) {
        throw std::invalid_argument("trigger_prob: need i >= 0 and eta in [0,1]");
    }
    return 1.0 - std::pow(1.0 - eta, i);
}

double click_prob(double mu, double eta) { return -std::expm1(-eta * mu); }

double click_prob_series(double mu, double eta, int max_photons) {
    double sum = 0.0;
    for (int i = 0; i <= max_photons; ++i) sum += trigger_prob(i, eta) * poisson_pmf(i, mu);
    return sum;
}

double total_efficiency(const LinkBudget& link) noexcept {
    return channel_efficiency(link) * eta_geometric(link);
}

double postprocessing_efficiency(const LinkBudget& link) noexcept {
    return link.sift_fraction * (1.0 - link.qber_sample_fraction) * link.pa_ratio;
}

RateEstimate estimate_rates(const LinkBudget& link) {
    RateEstimate e;
    e.eta_total = total_efficiency(link);
    e.q_mu = click_prob(link.mu, e.eta_total);
    e.clicks_per_s = link.prf_hz * e.q_mu;
    e.clicks_after_sync = e.clicks_per_s * link.sync_efficiency;
    e.sifted_rate = e.clicks_after_sync * link.sift_fraction;
    e.secure_rate = e.clicks_after_sync * postprocessing_efficiency(link);
    return e;
}

std::vector<SweepPoint> distance_sweep(const LinkBudget& link, std::span<const double> distances) {
    std::vector<SweepPoint> out;
    out.reserve(distances.size());
    for (double d : distances) {
        if (d < 0.0) throw std::invalid_argument("distance_sweep: distances must be >= 0");
        LinkBudget at = link;
        at.distance_m = d;
        out.push_back({d, estimate_rates(at).secure_rate});
    }
    return out;
}

std::vector<double> distance_grid(double from, double to, double step) {
    if (!(step > 0.0) || to < from || from < 0.0) {
        throw std::invalid_argument("distance_grid: need 0 <= from <= to and step > 0");
    }
    std::vector<double> out;
    const auto n = static_cast<long long>(std::floor((to - from) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
    return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
    out << "distance_m,secure_kbps\n";
    char buf[96];
    for (const SweepPoint& p : points) {
        std::snprintf(buf, sizeof buf, "%.1f,%.3f\n", p.distance_m, p.secure_rate / 1e3);
        out << buf;
    }
}

void print_rate_table(std::ostream& out, const LinkBudget& link, const RateEstimate& est) {
    char buf[160];
    auto row = [&](int n, const char* name, const char* fmt, double v) {
        char val[64];
        std::snprintf(val, sizeof val, fmt, v);
        std::snprintf(buf, sizeof buf, "%2d. %-30s %s\n", n, name, val);
        out << buf;
    };
    out << "Key rate estimation\n";
    row(1, "MPN", "%.2f", link.mu);
    row(2, "PRF", "%.0f MHz", link.prf_hz / 1e6);
    row(3, "Channel efficiency", "%.2f %%", est.eta_total * 100.0);
    row(4, "Synchronization efficiency", "%.1f %%", link.sync_efficiency * 100.0);
    row(5, "Post processing efficiency", "%.2f %%", postprocessing_efficiency(link) * 100.0);
    row(6, "Total clicks", "%.1f K", est.clicks_per_s / 1e3);
    row(7, "Clicks (after sync.)", "%.1f K", est.clicks_after_sync / 1e3);
    row(8, "Secure key rate", "%.1f Kbps", est.secure_rate / 1e3);
}

}  // namespace qkd
