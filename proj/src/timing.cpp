#include "qkd/timing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace qkd {

double sample_pps_offset(const SimConfig& cfg, RandomStream& rng) {
    const double sigma = cfg.pps_jitter_sigma_ns;
    if (sigma <= 0.0) return 0.0;
    const double cap = cfg.pps_jitter_cap_ns;
    for (;;) {
        const double x = sigma * rng.normal();
        if (std::abs(x) <= cap) return x;
    }
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

Fifo frame_detections(std::span<const DetectionEvent> detections, int bins_per_frame,
                      int delay_bins) {
    Fifo fifo;
    fifo.reserve(detections.size());
    const std::int64_t n = bins_per_frame;
    for (const DetectionEvent& d : detections) {
        const std::int64_t b = d.bin_index + delay_bins;
        const std::int64_t frame = floor_div(b, n);
        fifo.push_back({frame, static_cast<std::uint8_t>(b - frame * n), d.channel, d.multi_click});
    }
    // Input is sorted by (bin, channel) and the shift is uniform, so the
    // framed sequence is already sorted by (frame, bin, channel).
    Fifo out;
    out.reserve(fifo.size());
    for (std::size_t i = 0; i < fifo.size(); ++i) {
        const FramedDetection& cur = fifo[i];
        bool merged = false;
        for (auto it = out.rbegin(); it != out.rend() && it->frame == cur.frame; ++it) {
            if (it->channel == cur.channel && cur.bin - it->bin == 1) {
                it->multi_click = it->multi_click || cur.multi_click;
                merged = true;
                break;
            }
            if (cur.bin - it->bin > 1) break;
        }
        if (!merged) out.push_back(cur);
    }
    return out;
}

DualFifo build_dual_fifo(std::span<const DetectionEvent> detections, const SimConfig& cfg) {
    return {frame_detections(detections, cfg.bins_per_frame, 0),
            frame_detections(detections, cfg.bins_per_frame, kFifo2DelayBins)};
}

std::uint64_t FrameHistogram::total() const noexcept {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

std::uint64_t FrameHistogram::edge_count() const noexcept {
    if (counts.empty()) return 0;
    return counts.front() + (counts.size() > 1 ? counts.back() : 0);
}

double FrameHistogram::edge_fraction() const noexcept {
    const std::uint64_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(edge_count()) / static_cast<double>(t);
}

int FrameHistogram::mode_bin() const noexcept {
    if (counts.empty()) return 0;
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

FrameHistogram frame_histogram(const Fifo& fifo, int bins_per_frame) {
    FrameHistogram h;
    h.counts.assign(static_cast<std::size_t>(bins_per_frame), 0);
    for (const FramedDetection& d : fifo) ++h.counts[d.bin];
    return h;
}

FifoChoice select_frame_boundary(const FrameHistogram& h1, const FrameHistogram& h2) {
    // Compare e1/t1 < e2/t2 exactly, treating an empty histogram as 0.
    const std::uint64_t t1 = h1.total(), t2 = h2.total();
    const std::uint64_t e1 = t1 ? h1.edge_count() : 0, e2 = t2 ? h2.edge_count() : 0;
    const auto lhs = static_cast<unsigned __int128>(e2) * (t1 ? t1 : 1);
    const auto rhs = static_cast<unsigned __int128>(e1) * (t2 ? t2 : 1);
    return lhs < rhs ? FifoChoice::Fifo2 : FifoChoice::Fifo1;
}

std::vector<MatchedPair> nnc_match(const Fifo& fifo, const FrameAlignment& alignment,
                                   std::uint64_t tx_begin, std::uint64_t tx_end) {
    std::vector<MatchedPair> pairs;
    if (tx_end <= tx_begin) return pairs;
    const std::int64_t first = static_cast<std::int64_t>(tx_begin) + alignment.offset_frames;
    const std::int64_t last = static_cast<std::int64_t>(tx_end) + alignment.offset_frames;
    const int lo = alignment.central_bin - alignment.window_bins;
    const int hi = alignment.central_bin + alignment.window_bins;

    auto it = std::lower_bound(fifo.begin(), fifo.end(), first,
                               [](const FramedDetection& d, std::int64_t f) { return d.frame < f; });
    while (it != fifo.end() && it->frame < last) {
        const std::int64_t frame = it->frame;
        const FramedDetection* candidate = nullptr;
        int in_window = 0;
        bool multi = false;
        for (; it != fifo.end() && it->frame == frame; ++it) {
            if (it->bin < lo || it->bin > hi) continue;
            ++in_window;
            multi = multi || it->multi_click;
            candidate = &*it;
        }
        if (in_window == 1 && !multi) {
            pairs.push_back({static_cast<std::uint64_t>(frame - alignment.offset_frames),
                             candidate->channel,
                             candidate->bin == alignment.central_bin ? Ambiguity::Exact
                                                                      : Ambiguity::NearestNeighbor});
        }
    }
    return pairs;
}

std::size_t count_split_events(const Fifo& fifo, int central_bin, int window_bins,
                               int bins_per_frame) {
    const int lo = std::max(0, central_bin - window_bins);
    const int hi = std::min(bins_per_frame - 1, central_bin + window_bins);
    std::size_t n = 0;
    for (const FramedDetection& d : fifo) {
        if (d.bin < lo || d.bin > hi) ++n;
    }
    return n;
}

double interim_qber(std::span<const PulseRecord> tx_subset, const Fifo& fifo,
                    const FrameAlignment& alignment) {
    if (tx_subset.empty()) return 0.5;
    const std::uint64_t begin = tx_subset.front().frame_index;
    const auto pairs = nnc_match(fifo, alignment, begin, begin + tx_subset.size());
    std::uint64_t sifted = 0, errors = 0;
    for (const MatchedPair& m : pairs) {
        const PulseRecord& p = tx_subset[m.tx_index - begin];
        if (p.basis != basis_of_channel(m.rx_channel)) continue;
        ++sifted;
        if (p.bit != bit_of_channel(m.rx_channel)) ++errors;
    }
    return sifted == 0 ? 0.5 : static_cast<double>(errors) / static_cast<double>(sifted);
}

namespace {

std::string no_lock_message(double q, double t) {
    std::ostringstream s;
    s << "frame sync failed to lock: minimum interim QBER " << q << " exceeds " << t;
    return s.str();
}

}  // namespace

NoLockError::NoLockError(double min_qber, double threshold)
    : std::runtime_error(no_lock_message(min_qber, threshold)), min_qber_(min_qber) {}

OffsetSearch estimate_frame_offset(std::span<const PulseRecord> tx_subset, const Fifo& fifo,
                                   int central_bin, const SimConfig& cfg) {
    OffsetSearch result;
    bool first = true;
    for (std::int64_t off = cfg.sync_search_min_frames; off <= cfg.sync_search_max_frames; ++off) {
        const double q = interim_qber(tx_subset, fifo, {off, central_bin, cfg.clock_spread_bins});
        result.curve.push_back({off, q});
        if (first || q < result.min_qber) {
            result.min_qber = q;
            result.offset_frames = off;
            first = false;
        }
    }
    if (result.min_qber > cfg.lock_threshold) throw NoLockError(result.min_qber, cfg.lock_threshold);
    return result;
}

SyncResult synchronize(std::span<const PulseRecord> tx_subset,
                       std::span<const DetectionEvent> detections, const SimConfig& cfg) {
    DualFifo dual = build_dual_fifo(detections, cfg);
    SyncResult r;
    r.h1 = frame_histogram(dual.fifo1, cfg.bins_per_frame);
    r.h2 = frame_histogram(dual.fifo2, cfg.bins_per_frame);
    r.choice = select_frame_boundary(r.h1, r.h2);
    r.fifo = std::move(r.choice == FifoChoice::Fifo1 ? dual.fifo1 : dual.fifo2);
    const int central = (r.choice == FifoChoice::Fifo1 ? r.h1 : r.h2).mode_bin();
    OffsetSearch search = estimate_frame_offset(tx_subset, r.fifo, central, cfg);
    r.alignment = {search.offset_frames, central, cfg.clock_spread_bins};
    r.interim_qber = search.min_qber;
    r.curve = std::move(search.curve);
    return r;
}

std::int64_t total_offset_bins(FifoChoice choice, const FrameAlignment& alignment,
                               int bins_per_frame) noexcept {
    const int delay = choice == FifoChoice::Fifo2 ? kFifo2DelayBins : 0;
    return alignment.offset_frames * bins_per_frame + alignment.central_bin - delay;
}

void write_sync_curve_csv(std::ostream& out, const std::vector<QberPoint>& curve) {
    out << "offset_frames,qber\n";
    for (const QberPoint& p : curve) out << p.offset_frames << ',' << p.qber << '\n';
}

}  // namespace qkd
