#include <doctest.h>

#include <cmath>

#include "qkd/link.hpp"
#include "qkd/timing.hpp"

using namespace qkd;

namespace {

DetectionEvent det(std::int64_t bin, int ch, bool multi = false) {
    return {bin, static_cast<std::uint8_t>(ch), multi};
}

}  // namespace

TEST_CASE("PPS offsets respect the cap") {
    SimConfig cfg = default_config();
    RandomStream rng(31, "pps");
    double s2 = 0;
    for (int i = 0; i < 20000; ++i) {
        const double x = sample_pps_offset(cfg, rng);
        REQUIRE(std::abs(x) <= cfg.pps_jitter_cap_ns);
        s2 += x * x;
    }
    // Truncation at 2 sigma shrinks the spread below sigma.
    const double sd = std::sqrt(s2 / 20000);
    CHECK(sd < cfg.pps_jitter_sigma_ns);
    CHECK(sd > 0.8 * cfg.pps_jitter_sigma_ns);
    cfg.pps_jitter_sigma_ns = 0;
    CHECK(sample_pps_offset(cfg, rng) == 0.0);
}

TEST_CASE("framing with delay and negative bins") {
    const std::vector<DetectionEvent> d = {det(-1, 1), det(0, 2), det(3, 3), det(4, 4), det(9, 1)};
    const Fifo f1 = frame_detections(d, 4, 0);
    REQUIRE(f1.size() == 5);
    CHECK(f1[0] == FramedDetection{-1, 3, 1, false});
    CHECK(f1[1] == FramedDetection{0, 0, 2, false});
    CHECK(f1[2] == FramedDetection{0, 3, 3, false});
    CHECK(f1[3] == FramedDetection{1, 0, 4, false});
    CHECK(f1[4] == FramedDetection{2, 1, 1, false});
    const Fifo f2 = frame_detections(d, 4, kFifo2DelayBins);
    CHECK(f2[0] == FramedDetection{0, 1, 1, false});
    CHECK(f2[2] == FramedDetection{1, 1, 3, false});
}

TEST_CASE("adjacent same-channel clicks in one frame coalesce") {
    const std::vector<DetectionEvent> d = {det(4, 1), det(5, 1), det(5, 2), det(7, 3), det(8, 3)};
    const Fifo f = frame_detections(d, 4, 0);
    // 4,5 on ch1 merge; 5 ch2 stays; 7 and 8 are in different frames.
    REQUIRE(f.size() == 4);
    CHECK(f[0] == FramedDetection{1, 0, 1, false});
    CHECK(f[1] == FramedDetection{1, 1, 2, false});
    CHECK(f[2] == FramedDetection{1, 3, 3, false});
    CHECK(f[3] == FramedDetection{2, 0, 3, false});
    // Two bins apart: not merged.
    CHECK(frame_detections(std::vector{det(0, 1), det(2, 1)}, 4, 0).size() == 2);
}

TEST_CASE("histograms and boundary choice") {
    FrameHistogram a{{10, 60, 20, 10}}, b{{1, 20, 60, 9}};
    CHECK(a.total() == 100);
    CHECK(a.edge_count() == 20);
    CHECK(a.edge_fraction() == doctest::Approx(0.2));
    CHECK(a.mode_bin() == 1);
    CHECK(select_frame_boundary(a, b) == FifoChoice::Fifo2);
    CHECK(select_frame_boundary(b, a) == FifoChoice::Fifo1);
    CHECK(select_frame_boundary(a, a) == FifoChoice::Fifo1);  // ties keep FIFO#1
    CHECK(FrameHistogram{{5, 5, 1, 1}}.mode_bin() == 0);
    CHECK(FrameHistogram{}.edge_fraction() == 0.0);
    const Fifo f = frame_detections(std::vector{det(1, 1), det(5, 2), det(6, 1)}, 4, 0);
    CHECK(frame_histogram(f, 4).counts == std::vector<std::uint64_t>{0, 2, 1, 0});
}

TEST_CASE("nearest-neighbor correlation rules") {
    const FrameAlignment al{10, 1, 1};  // window bins 0..2
    Fifo f = {
        {10, 1, 1, false},                     // exact
        {11, 2, 3, false},                     // neighbor
        {12, 3, 2, false},                     // outside window
        {13, 0, 1, false}, {13, 2, 4, false},  // competing
        {14, 1, 2, true},                      // multi-click
        {15, 1, 1, false}, {15, 3, 4, false},  // second one outside window
    };
    const auto m = nnc_match(f, al, 0, 6);
    REQUIRE(m.size() == 3);
    CHECK(m[0] == MatchedPair{0, 1, Ambiguity::Exact});
    CHECK(m[1] == MatchedPair{1, 3, Ambiguity::NearestNeighbor});
    CHECK(m[2] == MatchedPair{5, 1, Ambiguity::Exact});
    CHECK(nnc_match(f, al, 1, 2).size() == 1);
    CHECK(nnc_match(f, al, 3, 3).empty());
    CHECK(count_split_events(f, 1, 1, 4) == 2);
}

TEST_CASE("offset search locks onto the true offset") {
    SimConfig cfg = default_config();
    cfg.burst_seconds = 0.05;
    cfg.rng_seed = 33;
    const TxBurst tx = prepare_burst(cfg, 0);
    const RxBurst rx = detect_burst(tx, cfg, 0);
    const std::span<const PulseRecord> subset(tx.pulses.data(), sync_subset_size(cfg));
    const SyncResult s = synchronize(subset, rx.detections, cfg);
    CHECK(total_offset_bins(s.choice, s.alignment, cfg.bins_per_frame) == rx.true_offset_bins);
    CHECK(s.interim_qber < 0.06);
    // Wrong offsets look random.
    for (const QberPoint& p : s.curve) {
        if (p.offset_frames != s.alignment.offset_frames) CHECK(p.qber > 0.35);
    }

    cfg.sync_search_max_frames = 5;  // true offset is about 20 frames
    const Fifo& f = s.fifo;
    CHECK_THROWS_AS(estimate_frame_offset(subset, f, s.alignment.central_bin, cfg), NoLockError);
}

TEST_CASE("interim QBER edge cases") {
    CHECK(interim_qber({}, {}, {}) == 0.5);
    const std::vector<PulseRecord> tx = {{0, Basis::Rectilinear, 1, 1}, {1, Basis::Diagonal, 0, 1}};
    // ch2 = V (rect, 1) correct; ch4 = A (diag, 1) wrong.
    const Fifo f = {{0, 0, 2, false}, {1, 0, 4, false}};
    CHECK(interim_qber(tx, f, {0, 0, 0}) == 0.5);
    const Fifo g = {{0, 0, 2, false}, {1, 0, 1, false}};  // second is a basis mismatch
    CHECK(interim_qber(tx, g, {0, 0, 0}) == 0.0);
}
