#include "slopecpd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace slopecpd {

CsvError::CsvError(std::size_t row, const std::string& what)
    : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

double parse_double(std::string_view field, std::size_t row) {
    double value = 0.0;
    if (!field.empty() && field.front() == '+') {
        field.remove_prefix(1);
    }
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw CsvError(row, "cannot parse number '" + std::string(field) + "'");
    }
    if (!std::isfinite(value)) {
        throw CsvError(row, "non-finite value '" + std::string(field) + "'");
    }
    return value;
}

bool blank(std::string_view line) { return trim(line).empty(); }

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (blank(line)) {
            continue;
        }
        std::vector<double> values;
        for (auto field : split(line)) {
            values.push_back(parse_double(field, row));
        }
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw CsvError(row, "expected " + std::to_string(rows.front().size()) + " columns, found " +
                                    std::to_string(values.size()));
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw CsvError(1, "empty matrix file " + path.string());
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << format_double(m(i, j));
        }
        out << '\n';
    }
}

std::vector<ObservationFrame> read_stream_csv(std::istream& in) {
    std::string line;
    std::size_t row = 0;
    std::size_t n_sensors = 0;
    while (std::getline(in, line)) {
        ++row;
        if (blank(line)) {
            continue;
        }
        const auto header = split(line);
        if (header.size() < 2 || header.front() != "t") {
            throw CsvError(row, "expected header 't,s1,...,sN'");
        }
        for (std::size_t n = 1; n < header.size(); ++n) {
            if (header[n] != "s" + std::to_string(n)) {
                throw CsvError(row, "header column " + std::to_string(n + 1) + " should be 's" + std::to_string(n) + "'");
            }
        }
        n_sensors = header.size() - 1;
        break;
    }
    if (n_sensors == 0) {
        throw CsvError(1, "empty stream file");
    }

    std::vector<ObservationFrame> frames;
    while (std::getline(in, line)) {
        ++row;
        if (blank(line)) {
            continue;
        }
        const auto fields = split(line);
        if (fields.size() != n_sensors + 1) {
            throw CsvError(row, "expected " + std::to_string(n_sensors + 1) + " columns, found " +
                                    std::to_string(fields.size()));
        }
        ObservationFrame frame;
        std::int64_t t = 0;
        const auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), t);
        if (ec != std::errc() || ptr != fields[0].data() + fields[0].size()) {
            throw CsvError(row, "time index '" + std::string(fields[0]) + "' is not an integer");
        }
        if (!frames.empty() && t <= frames.back().t) {
            throw CsvError(row, "time index " + std::to_string(t) + " is not strictly increasing");
        }
        frame.t = t;
        frame.values.reserve(n_sensors);
        for (std::size_t n = 1; n < fields.size(); ++n) {
            frame.values.push_back(parse_double(fields[n], row));
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<ObservationFrame> read_stream_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_stream_csv(in);
}

void write_stream_csv(std::ostream& out, std::span<const ObservationFrame> frames) {
    const std::size_t n_sensors = frames.empty() ? 0 : frames.front().values.size();
    out << 't';
    for (std::size_t n = 1; n <= n_sensors; ++n) {
        out << ",s" << n;
    }
    out << '\n';
    for (const auto& frame : frames) {
        out << frame.t;
        for (double v : frame.values) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

void write_stream_csv(const std::filesystem::path& path, std::span<const ObservationFrame> frames) {
    auto out = open_out(path);
    write_stream_csv(out, frames);
}

SensorModel read_model_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    SensorModel model;
    while (std::getline(in, line)) {
        ++row;
        if (blank(line)) {
            continue;
        }
        const auto fields = split(line);
        if (!header_seen) {
            if (fields.size() != 3 || fields[0] != "sensor" || fields[1] != "mu" || fields[2] != "sigma") {
                throw CsvError(row, "expected header 'sensor,mu,sigma'");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 3) {
            throw CsvError(row, "expected 3 columns");
        }
        if (fields[0] != std::to_string(model.size() + 1)) {
            throw CsvError(row, "sensor ids must run 1..N in order");
        }
        model.mu.push_back(parse_double(fields[1], row));
        model.sigma.push_back(parse_double(fields[2], row));
    }
    if (model.size() == 0) {
        throw CsvError(std::max<std::size_t>(row, 1), "model file has no sensors");
    }
    model.validate();
    return model;
}

void write_model_csv(const std::filesystem::path& path, const SensorModel& model) {
    auto out = open_out(path);
    out << "sensor,mu,sigma\n";
    for (std::size_t n = 0; n < model.size(); ++n) {
        out << n + 1 << ',' << format_double(model.mu[n]) << ',' << format_double(model.sigma[n]) << '\n';
    }
}

void emit_series(std::ostream& out, std::span<const SeriesPoint> series, SeriesFormat format) {
    if (format == SeriesFormat::csv) {
        out << "x,y,stderr\n";
        for (const auto& p : series) {
            out << format_double(p.x) << ',' << format_double(p.y) << ',';
            if (p.stderr_value) {
                out << format_double(*p.stderr_value);
            }
            out << '\n';
        }
        return;
    }
    for (const auto& p : series) {
        out << "{\"x\":" << format_double(p.x) << ",\"y\":" << format_double(p.y) << ",\"stderr\":"
            << (p.stderr_value ? format_double(*p.stderr_value) : std::string("null")) << "}\n";
    }
}

void emit_series(const std::filesystem::path& path, std::span<const SeriesPoint> series, SeriesFormat format) {
    if (series.empty()) {
        throw std::invalid_argument("emit_series: trace is empty");
    }
    auto out = open_out(path);
    emit_series(out, series, format);
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

std::vector<SeriesPoint> parse_series_csv(std::istream& in) {
    std::string line;
    std::size_t row = 0;
    std::vector<SeriesPoint> series;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        if (blank(line)) {
            continue;
        }
        if (!header_seen) {
            if (trim(line) != "x,y,stderr") {
                throw CsvError(row, "expected header 'x,y,stderr'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split(line);
        if (fields.size() != 3) {
            throw CsvError(row, "expected 3 columns");
        }
        SeriesPoint p{parse_double(fields[0], row), parse_double(fields[1], row), std::nullopt};
        if (!fields[2].empty()) {
            p.stderr_value = parse_double(fields[2], row);
        }
        series.push_back(p);
    }
    return series;
}

}  // namespace slopecpd
