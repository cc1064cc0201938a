#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slopecpd/model.hpp"

namespace slopecpd {

/// Malformed CSV input; `row()` is the 1-based line number in the file.
class CsvError : public std::runtime_error {
public:
    CsvError(std::size_t row, const std::string& what);
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

/// Headerless numeric CSV (e.g. a covariance matrix, N rows x N columns).
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// Stream CSV: header "t,s1,...,sN", then one row per time step with t
/// strictly increasing.
std::vector<ObservationFrame> read_stream_csv(std::istream& in);
std::vector<ObservationFrame> read_stream_csv(const std::filesystem::path& path);
void write_stream_csv(std::ostream& out, std::span<const ObservationFrame> frames);
void write_stream_csv(const std::filesystem::path& path, std::span<const ObservationFrame> frames);

/// Sensor model CSV: header "sensor,mu,sigma", one row per sensor (1-based ids in order).
SensorModel read_model_csv(const std::filesystem::path& path);
void write_model_csv(const std::filesystem::path& path, const SensorModel& model);

/// A point of a plot series. A missing standard error is written as an empty field.
struct SeriesPoint {
    double x{0.0};
    double y{0.0};
    std::optional<double> stderr_value;

    bool operator==(const SeriesPoint&) const = default;
};

enum class SeriesFormat { csv, jsonl };

/// Writes "x,y,stderr" CSV or one JSON object per line. Numbers use the
/// shortest representation that parses back to the same double.
void emit_series(std::ostream& out, std::span<const SeriesPoint> series, SeriesFormat format);
void emit_series(const std::filesystem::path& path, std::span<const SeriesPoint> series, SeriesFormat format);
std::vector<SeriesPoint> parse_series_csv(std::istream& in);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace slopecpd
