#ifndef RERAND_IO_HPP
#define RERAND_IO_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Core>

#include "rerand/balance.hpp"
#include "rerand/errors.hpp"
#include "rerand/simlab.hpp"

namespace rerand {

/// Shortest decimal form that round-trips the exact double, so output files
/// are byte-stable across runs and lose no precision.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

struct CsvField {
    std::string text;
    std::size_t column = 0;  // 1-based character column of the field start
};

inline std::vector<CsvField> split_csv_line(const std::string& line) {
    std::vector<CsvField> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        const std::size_t end = comma == std::string::npos ? line.size() : comma;
        std::size_t lo = start, hi = end;
        while (lo < hi && (line[lo] == ' ' || line[lo] == '\t')) ++lo;
        while (hi > lo && (line[hi - 1] == ' ' || line[hi - 1] == '\t' ||
                           line[hi - 1] == '\r')) {
            --hi;
        }
        fields.push_back(CsvField{line.substr(lo, hi - lo), lo + 1});
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return fields;
}

inline bool parse_double_field(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto res = std::from_chars(first, last, out);
    // Non-finite tokens (nan/inf) are rejected: covariate readings must be real.
    return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

}  // namespace detail

/// How the first non-blank CSV row is treated: detect picks header vs data by
/// whether every field parses as a number; skip always drops it; data always
/// parses it (so a non-numeric first row is an error).
enum class CsvHeader { detect, skip, data };

/// Reads an n x d numeric CSV, comma-separated. Blank lines are skipped;
/// nan/inf tokens are rejected. source names the input in error messages.
inline CovariateMatrix read_covariates_csv(std::istream& in, const std::string& source,
                                           CsvHeader header = CsvHeader::detect) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first_row_pending = true;

    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() == 1 && fields[0].text.empty()) continue;

        if (first_row_pending && header == CsvHeader::skip) {
            first_row_pending = false;
            continue;
        }

        std::vector<double> row;
        row.reserve(fields.size());
        bool ok = true;
        std::size_t bad_field = 0;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            double v = 0.0;
            if (!detail::parse_double_field(fields[f].text, v)) {
                ok = false;
                bad_field = f;
                break;
            }
            row.push_back(v);
        }
        if (!ok) {
            if (first_row_pending && header == CsvHeader::detect) {
                first_row_pending = false;  // header row
                continue;
            }
            throw ParseError(source + ": expected a number, got '" +
                                 fields[bad_field].text + "'",
                             line_no, fields[bad_field].column);
        }
        first_row_pending = false;
        if (rows.empty()) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw ParseError(source + ": expected " + std::to_string(width) +
                                 " fields, got " + std::to_string(fields.size()),
                             line_no, 1);
        }
        rows.push_back(std::move(row));
    }

    if (rows.empty()) {
        throw ParseError(source + ": no data rows", line_no == 0 ? 1 : line_no, 1);
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j];
        }
    }
    return CovariateMatrix(std::move(x));
}

inline CovariateMatrix read_covariates_csv(const std::string& path,
                                           CsvHeader header = CsvHeader::detect) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open covariate file: " + path);
    return read_covariates_csv(in, path, header);
}

/// Writes content to path via a temporary file and rename, so readers never
/// observe a partial file.
inline void write_text_file_atomic(const std::string& path,
                                   const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open output file: " + tmp);
        out << content;
        if (!out.flush()) throw InputError("failed writing output file: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw InputError("failed to move " + tmp + " into place: " + ec.message());
    }
}

inline std::string assignment_csv_string(const Assignment& z) {
    std::string out = "unit_index,assignment\n";
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += z.z[i] == 1 ? '1' : '0';
        out += '\n';
    }
    return out;
}

/// Results table, one row per cell. with_hyper adds the delta/eta columns
/// (sensitivity sweeps); fields a study did not produce stay empty.
inline std::string results_csv_string(const ExperimentReport& report,
                                      bool with_hyper) {
    auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    std::string out = "method,d";
    if (with_hyper) out += ",delta,eta";
    out += ",mean_time_s,time_ci_lo,time_ci_hi,bias,sd_tau,coverage,power,"
           "r_squared,var_ratio,censored_reps\n";
    for (const CellResult& c : report.cells) {
        out += method_name(c.method);
        out += ',';
        out += std::to_string(c.d);
        if (with_hyper) {
            out += ',';
            out += opt(c.delta);
            out += ',';
            out += opt(c.eta);
        }
        for (const auto* f : {&c.mean_time_s, &c.time_ci_lo, &c.time_ci_hi, &c.bias,
                              &c.sd_tau, &c.coverage, &c.power, &c.r_squared,
                              &c.var_ratio}) {
            out += ',';
            out += opt(*f);
        }
        out += ',';
        out += std::to_string(c.censored_reps);
        out += '\n';
    }
    return out;
}

}  // namespace rerand

#endif  // RERAND_IO_HPP
