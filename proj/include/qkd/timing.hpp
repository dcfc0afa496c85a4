#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/rng.hpp"

namespace qkd {

/// Relative 1PPS error between the two receivers: zero-mean Gaussian with
/// sigma pps_jitter_sigma_ns, redrawn until it lies within +-pps_jitter_cap_ns.
double sample_pps_offset(const SimConfig& cfg, RandomStream& rng);

/// A detection placed into a frame of bins_per_frame bins.
struct FramedDetection {
    std::int64_t frame = 0;
    std::uint8_t bin = 0;
    std::uint8_t channel = 1;
    bool multi_click = false;

    friend bool operator==(const FramedDetection&, const FramedDetection&) = default;
};

/// Framed detections sorted by (frame, bin, channel).
using Fifo = std::vector<FramedDetection>;

enum class FifoChoice : std::uint8_t { Fifo1 = 1, Fifo2 = 2 };

/// FIFO#2 registers clicks two bins (25 ns at 80 MHz) late.
inline constexpr int kFifo2DelayBins = 2;

/// Frames `detections` after delaying each by `delay_bins`. Same-channel
/// clicks in adjacent bins of one frame are coalesced into the earlier one,
/// since the +-1 bin clock spread makes them a single registered event.
Fifo frame_detections(std::span<const DetectionEvent> detections, int bins_per_frame,
                      int delay_bins);

struct DualFifo {
    Fifo fifo1;
    Fifo fifo2;
};

DualFifo build_dual_fifo(std::span<const DetectionEvent> detections, const SimConfig& cfg);

struct FrameHistogram {
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const noexcept;
    std::uint64_t edge_count() const noexcept;
    /// Fraction of counts in the first and last bin; 0 when empty.
    double edge_fraction() const noexcept;
    /// Most populated bin, lowest index on ties.
    int mode_bin() const noexcept;
};

FrameHistogram frame_histogram(const Fifo& fifo, int bins_per_frame);

/// The FIFO whose histogram carries the smaller edge-bin fraction; FIFO#1 on ties.
FifoChoice select_frame_boundary(const FrameHistogram& h1, const FrameHistogram& h2);

enum class Ambiguity : std::uint8_t { Exact, NearestNeighbor };

struct MatchedPair {
    std::uint64_t tx_index = 0;
    std::uint8_t rx_channel = 1;
    Ambiguity ambiguity = Ambiguity::Exact;

    friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct FrameAlignment {
    std::int64_t offset_frames = 0;  // detection frame = tx index + offset
    int central_bin = 0;
    int window_bins = 1;
};

/// Nearest-neighbor correlation of pulses [tx_begin, tx_end) against the
/// framed detections. A pulse matches when exactly one detection lies in
/// the in-frame window around the central bin; windows holding a
/// multi-click or several competing detections are discarded.
std::vector<MatchedPair> nnc_match(const Fifo& fifo, const FrameAlignment& alignment,
                                   std::uint64_t tx_begin, std::uint64_t tx_end);

/// Detections that fall outside the NNC window of their frame.
std::size_t count_split_events(const Fifo& fifo, int central_bin, int window_bins,
                               int bins_per_frame);

struct QberPoint {
    std::int64_t offset_frames;
    double qber;
};

/// Mismatch fraction over basis-agreeing NNC matches of a contiguous pulse
/// subset under `alignment`; 0.5 when nothing sifts.
double interim_qber(std::span<const PulseRecord> tx_subset, const Fifo& fifo,
                    const FrameAlignment& alignment);

class NoLockError : public std::runtime_error {
  public:
    NoLockError(double min_qber, double threshold);
    double min_qber() const noexcept { return min_qber_; }

  private:
    double min_qber_;
};

struct OffsetSearch {
    std::int64_t offset_frames = 0;
    double min_qber = 0.5;
    std::vector<QberPoint> curve;
};

/// Full-frame sweep over [sync_search_min_frames, sync_search_max_frames]
/// returning the minimum interim QBER offset (lowest offset on ties).
/// Throws NoLockError when even the best offset exceeds cfg.lock_threshold.
OffsetSearch estimate_frame_offset(std::span<const PulseRecord> tx_subset, const Fifo& fifo,
                                   int central_bin, const SimConfig& cfg);

struct SyncResult {
    FifoChoice choice = FifoChoice::Fifo1;
    FrameAlignment alignment;
    double interim_qber = 0.5;
    std::vector<QberPoint> curve;
    FrameHistogram h1, h2;
    Fifo fifo;  // the selected one
};

/// Boundary selection, central-bin estimate and offset search in sequence.
SyncResult synchronize(std::span<const PulseRecord> tx_subset,
                       std::span<const DetectionEvent> detections, const SimConfig& cfg);

/// Receiver bin offset of pulse 0's central click implied by a sync result,
/// comparable with RxBurst::true_offset_bins.
std::int64_t total_offset_bins(FifoChoice choice, const FrameAlignment& alignment,
                               int bins_per_frame) noexcept;

void write_sync_curve_csv(std::ostream& out, const std::vector<QberPoint>& curve);

}  // namespace qkd
