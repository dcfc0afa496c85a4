#include "qkd/report.hpp"

#include <cstdio>
#include <ostream>

namespace qkd {

ReportRow make_row(const BurstOutcome& o) {
    ReportRow r;
    r.burst_id = o.stats.burst_id;
    r.sifted_bits = o.stats.sifted_bits;
    r.qber = o.stats.qber;
    r.secure_bits = o.stats.secure_bits;
    r.offset_frames = o.stats.offset_frames;
    r.fifo = o.stats.fifo;
    r.burst_seconds = o.stats.burst_seconds;
    r.elapsed_s = o.stats.elapsed_s;
    r.aborted = o.aborted;
    r.reason = o.reason;
    return r;
}

namespace {

template <typename F>
double mean_of(const std::vector<ReportRow>& rows, F f) {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += f(r);
    return s / static_cast<double>(rows.size());
}

}  // namespace

double RunReport::mean_sifted_kbps() const noexcept {
    return mean_of(rows, [](const ReportRow& r) { return r.sifted_kbps(); });
}

double RunReport::mean_secure_kbps() const noexcept {
    return mean_of(rows, [](const ReportRow& r) { return r.secure_kbps(); });
}

double RunReport::mean_qber() const noexcept {
    return mean_of(rows, [](const ReportRow& r) { return r.qber; });
}

std::size_t RunReport::aborted() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.aborted;
    return n;
}

void write_report_header(std::ostream& out) { out << kReportHeader << '\n' << std::flush; }

void write_report_row(std::ostream& out, const ReportRow& r) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%llu,%.3f,%.6f,%.3f,%lld,%d\n",
                  static_cast<unsigned long long>(r.burst_id), r.sifted_kbps(), r.qber,
                  r.secure_kbps(), static_cast<long long>(r.offset_frames), static_cast<int>(r.fifo));
    out << buf << std::flush;
}

void write_report_csv(std::ostream& out, const RunReport& report) {
    write_report_header(out);
    for (const auto& r : report.rows) write_report_row(out, r);
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

void log_kv(std::ostream& out, std::string_view event,
            const std::vector<std::pair<std::string, std::string>>& fields) {
    std::string line = "event=";
    line += event;
    for (const auto& [k, v] : fields) {
        line += ' ';
        line += k;
        line += '=';
        const bool quote = v.find_first_of(" \t\"=") != std::string::npos || v.empty();
        if (quote) {
            line += '"';
            for (char c : v) {
                if (c == '"' || c == '\\') line += '\\';
                line += c;
            }
            line += '"';
        } else {
            line += v;
        }
    }
    line += '\n';
    out << line << std::flush;
}

}  // namespace qkd
