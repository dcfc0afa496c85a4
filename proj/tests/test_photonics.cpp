#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "qkd/analysis.hpp"
#include "qkd/photonics.hpp"

using namespace qkd;

TEST_CASE("PRBS11 has period 2047 and the maximal-length balance") {
    std::uint16_t s = 1;
    int ones = 0;
    std::set<std::uint16_t> states;
    for (int i = 0; i < 2047; ++i) {
        states.insert(s);
        const Prbs11Step step = prbs11_next(s);
        ones += step.bit;
        s = step.state;
    }
    CHECK(s == 1);
    CHECK(states.size() == 2047);
    CHECK(ones == 1024);
    CHECK(2047 - ones == 1023);
}

TEST_CASE("PRBS11 feedback taps") {
    // Independent shift-register model: output bit 10, feedback bit10 ^ bit8.
    std::uint16_t s = 0x5A3;
    for (int i = 0; i < 100; ++i) {
        const unsigned out = (s >> 10) & 1U;
        const unsigned fb = ((s >> 10) ^ (s >> 8)) & 1U;
        const auto expected = static_cast<std::uint16_t>(((s << 1) | fb) & 0x7FF);
        const Prbs11Step step = prbs11_next(s);
        CHECK(step.bit == out);
        CHECK(step.state == expected);
        s = step.state;
    }
    CHECK_THROWS_AS(prbs11_next(0), std::invalid_argument);
    CHECK_THROWS_AS(prbs11_next(0x800), std::invalid_argument);
    CHECK_THROWS(Prbs11(0));
}

TEST_CASE("geometric collection") {
    CHECK(eta_geometric(300, 80, 30.2, 66) == 1.0);
    CHECK(eta_geometric(750, 80, 30.2, 66) == 1.0);  // 79.7 mm footprint
    const double w = 30.2 + 0.066 * 2500;
    CHECK(eta_geometric(2500, 80, 30.2, 66) == doctest::Approx((80 / w) * (80 / w)));
    CHECK(eta_geometric(2500, 80, 30.2, 66) == doctest::Approx(0.168).epsilon(0.01));
}

TEST_CASE("per-photon efficiencies compose to the link total") {
    const LinkBudget link = default_config().link;
    CHECK(path_efficiency(link) * receiver_efficiency(link) ==
          doctest::Approx(total_efficiency(link)).epsilon(1e-12));
}

TEST_CASE("generated burst statistics") {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.01;
    RandomStream rng(11, "gen");
    const TxBurst tx = generate_burst(cfg, rng);
    REQUIRE(tx.pulses.size() == 200000);
    double photons = 0;
    int diag = 0, ones = 0;
    for (std::size_t i = 0; i < tx.pulses.size(); ++i) {
        REQUIRE(tx.pulses[i].frame_index == i);
        photons += tx.pulses[i].photon_count;
        diag += tx.pulses[i].basis == Basis::Diagonal;
        ones += tx.pulses[i].bit;
    }
    const double n = static_cast<double>(tx.pulses.size());
    CHECK(std::abs(photons / n - 0.15) < 5 * std::sqrt(0.15 / n));
    CHECK(std::abs(diag / n - 0.5) < 0.01);
    CHECK(std::abs(ones / n - 0.5) < 0.01);
}

TEST_CASE("click frequency matches the closed form within 3 sigma") {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.1;
    cfg.link.dark_cps = 0.0;
    RandomStream tx_rng(12, "tx"), ch_rng(12, "ch");
    const TxBurst tx = generate_burst(cfg, tx_rng);
    const RxBurst rx = transmit_and_detect(tx, cfg, nullptr, ch_rng);
    // Clicks landing before bin 0 are dropped; with a positive offset none are.
    REQUIRE(rx.true_offset_bins > 0);
    const double n = static_cast<double>(tx.pulses.size());
    const double p = click_prob(cfg.link.mu, total_efficiency(cfg.link));
    const double freq = static_cast<double>(count_click_bins(rx)) / n;
    CHECK(std::abs(freq - p) < 3 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("detections are sorted, unique and flag multi-clicks") {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.01;
    cfg.link.mu = 5.0;  // plenty of multi-photon pulses
    RandomStream tx_rng(13, "tx"), ch_rng(13, "ch");
    const RxBurst rx = transmit_and_detect(generate_burst(cfg, tx_rng), cfg, nullptr, ch_rng);
    std::size_t multi = 0;
    for (std::size_t i = 0; i < rx.detections.size(); ++i) {
        const auto& d = rx.detections[i];
        const bool same_prev = i > 0 && rx.detections[i - 1].bin_index == d.bin_index;
        const bool same_next = i + 1 < rx.detections.size() && rx.detections[i + 1].bin_index == d.bin_index;
        if (i > 0) {
            const auto& p = rx.detections[i - 1];
            REQUIRE((p.bin_index < d.bin_index || (p.bin_index == d.bin_index && p.channel < d.channel)));
        }
        CHECK(d.multi_click == (same_prev || same_next));
        multi += d.multi_click;
    }
    CHECK(multi > 0);
}

TEST_CASE("dark counts alone when no light arrives") {
    SimConfig cfg = default_config();
    cfg.link.mu = 0.0;
    cfg.link.dark_cps = 5000;
    cfg.burst_seconds = 0.2;
    RandomStream tx_rng(14, "tx"), ch_rng(14, "ch");
    const RxBurst rx = transmit_and_detect(generate_burst(cfg, tx_rng), cfg, nullptr, ch_rng);
    CHECK(std::abs(static_cast<double>(rx.detections.size()) - 1000.0) < 5 * std::sqrt(1000.0));
}

TEST_CASE("clock spread puts 60 percent of clicks in the central bin") {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.05;
    cfg.link.dark_cps = 0.0;
    cfg.pps_jitter_sigma_ns = 0.0;
    RandomStream tx_rng(15, "tx"), ch_rng(15, "ch");
    const RxBurst rx = transmit_and_detect(generate_burst(cfg, tx_rng), cfg, nullptr, ch_rng);
    std::size_t centre = 0, total = 0;
    for (const auto& d : rx.detections) {
        const std::int64_t rel = ((d.bin_index - rx.true_offset_bins) % 4 + 4) % 4;
        REQUIRE((rel == 0 || rel == 1 || rel == 3));
        centre += rel == 0;
        ++total;
    }
    CHECK(static_cast<double>(centre) / static_cast<double>(total) == doctest::Approx(0.6).epsilon(0.02));
}

TEST_CASE("detection dump round trip") {
    RxBurst rx;
    rx.detections = {{5, 1, false}, {9, 2, true}, {9, 3, true}, {12345678901LL, 4, false}};
    std::stringstream s;
    write_detections(s, rx);
    CHECK(s.str().rfind("5,1,0\n", 0) == 0);
    CHECK(read_detections(s) == rx.detections);
    std::istringstream bad("1,7,0\n");
    CHECK_THROWS(read_detections(bad));
}
