#pragma once

// Run telemetry and its CSV form. A RunRecord expands to one CSV row per
// layer:  step,loss,grad_fro,layer,sigma_max,tau,num_clamped,wall_ns

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "specclip/harness/config.hpp"

namespace specclip {

class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error("io error: " + path + ": " + what), path_{path} {}
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct LayerRecord {
    std::string layer;
    double sigma_max = 0.0;  // raw gradient, NaN when not computed
    double tau = 0.0;        // threshold applied at this step
    std::size_t num_clamped = 0;
};

struct RunRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double grad_fro = 0.0;
    std::vector<LayerRecord> layers;
    std::int64_t wall_ns = 0;  // since run start; excluded from determinism checks
};

inline constexpr std::string_view kRunCsvHeader = "step,loss,grad_fro,layer,sigma_max,tau,num_clamped,wall_ns";

inline std::string format_run_csv(const std::vector<RunRecord>& records) {
    std::string out(kRunCsvHeader);
    out += '\n';
    for (const auto& r : records) {
        for (const auto& l : r.layers) {
            out += std::to_string(r.step) + ',' + format_double(r.loss) + ',' + format_double(r.grad_fro) + ',' +
                   l.layer + ',' + format_double(l.sigma_max) + ',' + format_double(l.tau) + ',' +
                   std::to_string(l.num_clamped) + ',' + std::to_string(r.wall_ns) + '\n';
        }
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double csv_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    if (!parse_double(s, v)) throw std::runtime_error("csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace detail

/// Inverse of format_run_csv. Consecutive rows with the same step form one
/// record.
inline std::vector<RunRecord> parse_run_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kRunCsvHeader) throw std::runtime_error("csv: missing run header");
    std::vector<RunRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 8) throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected 8 fields");
        const auto step = static_cast<std::size_t>(std::stoull(cells[0]));
        if (out.empty() || out.back().step != step) {
            RunRecord r;
            r.step = step;
            r.loss = detail::csv_double(cells[1], line_no);
            r.grad_fro = detail::csv_double(cells[2], line_no);
            r.wall_ns = std::stoll(cells[7]);
            out.push_back(std::move(r));
        }
        LayerRecord l;
        l.layer = cells[3];
        l.sigma_max = detail::csv_double(cells[4], line_no);
        l.tau = detail::csv_double(cells[5], line_no);
        l.num_clamped = static_cast<std::size_t>(std::stoull(cells[6]));
        out.back().layers.push_back(std::move(l));
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw IoError(path, "cannot create directory: " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void emit_csv(const std::vector<RunRecord>& records, const std::string& path) {
    write_text_file(path, format_run_csv(records));
}

/// Generic table CSV: header row then rows of preformatted cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::string to_csv() const {
        std::string out;
        auto join = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        join(header);
        for (const auto& r : rows) join(r);
        return out;
    }

    static Table from_csv(const std::string& text) {
        Table t;
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
        t.header = detail::split_csv_line(line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            t.rows.push_back(detail::split_csv_line(line));
        }
        return t;
    }

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::invalid_argument("csv: no column named '" + name + "'");
    }

    [[nodiscard]] std::vector<std::string> column_values(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<std::string> out;
        out.reserve(rows.size());
        for (const auto& r : rows) {
            if (c >= r.size()) throw std::invalid_argument("csv: short row in column '" + name + "'");
            out.push_back(r[c]);
        }
        return out;
    }
};

inline void emit_csv(const Table& table, const std::string& path) { write_text_file(path, table.to_csv()); }

}  // namespace specclip
