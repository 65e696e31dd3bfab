#pragma once

// Per-evaluation run records and their CSV form.

#include "ilbo/types.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace ilbo {

struct RunRecord {
    std::int64_t seed = 0;
    std::int64_t episode = 0;
    double eval_mean = 0.0;
    double eval_std = 0.0;
    double best_mean = 0.0;
    double td_loss = 0.0;
    double grad_norm = 0.0;
    double sigma = 0.0;
    double wall_ms = 0.0;

    bool operator==(const RunRecord&) const = default;
};

inline constexpr const char* kMetricsHeader = "seed,episode,eval_mean,eval_std,best_mean,td_loss,grad_norm,sigma,wall_ms";

inline std::string metrics_row(const RunRecord& r) {
    return std::to_string(r.seed) + "," + std::to_string(r.episode) + "," + format_double(r.eval_mean) + "," +
           format_double(r.eval_std) + "," + format_double(r.best_mean) + "," + format_double(r.td_loss) + "," +
           format_double(r.grad_norm) + "," + format_double(r.sigma) + "," + format_double(r.wall_ms);
}

inline void write_metrics(std::ostream& os, const std::vector<RunRecord>& records) {
    os << kMetricsHeader << '\n';
    for (const auto& r : records) os << metrics_row(r) << '\n';
}

inline void write_metrics(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open metrics file for writing: " + path);
    write_metrics(os, records);
    if (!os) throw std::runtime_error("metrics write failed: " + path);
}

/// Appends one row per record and flushes, so a killed run leaves a parseable prefix.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : os_(path) {
        if (!os_) throw std::runtime_error("cannot open metrics file for writing: " + path);
        os_ << kMetricsHeader << '\n' << std::flush;
    }
    void append(const RunRecord& r) { os_ << metrics_row(r) << '\n' << std::flush; }

private:
    std::ofstream os_;
};

inline std::vector<RunRecord> read_metrics(std::istream& is) {
    static const char* columns[] = {"seed", "episode", "eval_mean", "eval_std", "best_mean",
                                    "td_loss", "grad_norm", "sigma", "wall_ms"};
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("metrics: empty file (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) throw std::runtime_error("metrics: line 1: unexpected header '" + line + "'");
    std::vector<RunRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 9)
            throw std::runtime_error("metrics: line " + std::to_string(lineno) + ": expected 9 columns, got " +
                                     std::to_string(cells.size()));
        RunRecord r;
        for (std::size_t c = 0; c < 9; ++c) {
            try {
                switch (c) {
                    case 0: r.seed = parse_int(cells[c]); break;
                    case 1: r.episode = parse_int(cells[c]); break;
                    case 2: r.eval_mean = parse_double(cells[c]); break;
                    case 3: r.eval_std = parse_double(cells[c]); break;
                    case 4: r.best_mean = parse_double(cells[c]); break;
                    case 5: r.td_loss = parse_double(cells[c]); break;
                    case 6: r.grad_norm = parse_double(cells[c]); break;
                    case 7: r.sigma = parse_double(cells[c]); break;
                    default: r.wall_ms = parse_double(cells[c]); break;
                }
            } catch (const std::invalid_argument&) {
                throw std::runtime_error("metrics: line " + std::to_string(lineno) + ", column '" + columns[c] +
                                         "': not numeric: '" + cells[c] + "'");
            }
        }
        out.push_back(r);
    }
    return out;
}

inline std::vector<RunRecord> read_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open metrics file: " + path);
    return read_metrics(is);
}

}  // namespace ilbo
