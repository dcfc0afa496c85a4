#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qkd/session.hpp"

namespace qkd {

struct ReportRow {
    std::uint64_t burst_id = 0;
    std::uint64_t sifted_bits = 0;
    double qber = 0.0;
    std::uint64_t secure_bits = 0;
    std::int64_t offset_frames = 0;
    FifoChoice fifo = FifoChoice::Fifo1;
    double burst_seconds = 1.0;
    double elapsed_s = 0.0;
    bool aborted = false;
    AbortReason reason = AbortReason::None;

    double sifted_kbps() const noexcept { return static_cast<double>(sifted_bits) / burst_seconds / 1e3; }
    double secure_kbps() const noexcept { return static_cast<double>(secure_bits) / burst_seconds / 1e3; }
};

ReportRow make_row(const BurstOutcome& outcome);

/// Per-burst rows plus aggregates computed from them.
struct RunReport {
    std::vector<ReportRow> rows;

    void add(const ReportRow& row) { rows.push_back(row); }
    double mean_sifted_kbps() const noexcept;
    double mean_secure_kbps() const noexcept;
    double mean_qber() const noexcept;
    std::size_t aborted() const noexcept;
};

inline constexpr std::string_view kReportHeader =
    "burst_id,sifted_kbps,qber,secure_kbps,offset_frames,fifo_choice";

void write_report_header(std::ostream& out);
/// One CSV line, flushed so an interrupted run leaves a parseable prefix.
void write_report_row(std::ostream& out, const ReportRow& row);
void write_report_csv(std::ostream& out, const RunReport& report);

/// `event=<name> key=value ...` on one line.
void log_kv(std::ostream& out, std::string_view event,
            const std::vector<std::pair<std::string, std::string>>& fields);

std::string format_double(double v, int precision = 6);

}  // namespace qkd
