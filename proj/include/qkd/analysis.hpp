#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "qkd/core.hpp"

namespace qkd {

/// mu^i e^-mu / i!
double poisson_pmf(int i, double mu);

/// Probability that at least one of i independent photons is detected.
double trigger_prob(int i, double eta);

/// Q_mu = 1 - exp(-eta mu).
double click_prob(double mu, double eta);

/// sum_{i=0}^{max_photons} trigger_prob(i, eta) * poisson_pmf(i, mu)
double click_prob_series(double mu, double eta, int max_photons = 100);

struct RateEstimate {
    double eta_total = 0.0;
    double q_mu = 0.0;
    double clicks_per_s = 0.0;
    double clicks_after_sync = 0.0;
    double sifted_rate = 0.0;
    double secure_rate = 0.0;
};

/// Overall per-photon efficiency including geometric collection.
double total_efficiency(const LinkBudget& link) noexcept;

/// Post-processing efficiency: sift x (1 - QBER sample) x PA ratio.
double postprocessing_efficiency(const LinkBudget& link) noexcept;

RateEstimate estimate_rates(const LinkBudget& link);

struct SweepPoint {
    double distance_m;
    double secure_rate;
};

std::vector<SweepPoint> distance_sweep(const LinkBudget& link, std::span<const double> distances);

/// Evenly spaced distances from `from` to `to` inclusive.
std::vector<double> distance_grid(double from, double to, double step);

/// CSV `distance_m,secure_kbps`.
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

/// Human-readable key-rate table in the layout of the link-budget summary.
void print_rate_table(std::ostream& out, const LinkBudget& link, const RateEstimate& est);

}  // namespace qkd
