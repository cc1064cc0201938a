#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "slopecpd/io.hpp"
#include "slopecpd/model.hpp"

using namespace slopecpd;

namespace {

std::filesystem::path tmp(const std::string& name) {
    std::filesystem::path dir = SLOPECPD_TEST_TMP;
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::size_t error_row(const std::string& text) {
    std::istringstream in(text);
    try {
        read_stream_csv(in);
    } catch (const CsvError& e) {
        return e.row();
    }
    return 0;
}

}  // namespace

TEST_CASE("stream CSV round trip is exact") {
    ScenarioSpec spec;
    spec.n_sensors = 4;
    spec.horizon = 50;
    const auto frames = generate_scenario(spec, SensorModel::standard(4), 3);
    std::stringstream buf;
    write_stream_csv(buf, frames);
    const auto back = read_stream_csv(buf);
    REQUIRE(back.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        REQUIRE(back[i].t == frames[i].t);
        REQUIRE(back[i].values == frames[i].values);
    }
    const auto path = tmp("roundtrip.csv");
    write_stream_csv(path, frames);
    REQUIRE(read_stream_csv(path).back().values == frames.back().values);
}

TEST_CASE("stream CSV errors carry the line number") {
    REQUIRE(error_row("") == 1);
    REQUIRE(error_row("x,s1\n1,0\n") == 1);
    REQUIRE(error_row("t,s1,s3\n") == 1);
    REQUIRE(error_row("t,s1,s2\n1,0,0\n2,0\n") == 3);
    REQUIRE(error_row("t,s1\n1,0\n2,abc\n") == 3);
    REQUIRE(error_row("t,s1\n1,0\n1,0\n") == 3);
    REQUIRE(error_row("t,s1\n1.5,0\n") == 2);
    REQUIRE(error_row("t,s1\n1,nan\n") == 2);
    REQUIRE(error_row("t,s1\n\n1,0\n\n2,inf\n") == 5);
    std::istringstream header_only("t,s1,s2\n");
    REQUIRE(read_stream_csv(header_only).empty());
}

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 123456789.125, std::numeric_limits<double>::denorm_min()}) {
        REQUIRE(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
    REQUIRE(format_double(0.5) == "0.5");
}

TEST_CASE("emit_series writes CSV and JSON lines") {
    const std::vector<SeriesPoint> pts{{0.01, 12.5, 0.25}, {0.03, 1.0 / 3.0, std::nullopt}, {0.05, 2.0, 0.125}};
    std::ostringstream csv;
    emit_series(csv, pts, SeriesFormat::csv);
    const std::string text = csv.str();
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 4);
    REQUIRE(text.rfind("x,y,stderr\n", 0) == 0);
    REQUIRE(text.find("0.03,0.3333333333333333,\n") != std::string::npos);
    std::istringstream in(text);
    REQUIRE(parse_series_csv(in) == pts);

    std::ostringstream jl;
    emit_series(jl, pts, SeriesFormat::jsonl);
    const std::string lines = jl.str();
    REQUIRE(std::count(lines.begin(), lines.end(), '\n') == 3);
    REQUIRE(lines.find("\"stderr\":null") != std::string::npos);

    const auto path = tmp("series.csv");
    emit_series(path, pts, SeriesFormat::csv);
    std::ifstream f(path);
    REQUIRE(parse_series_csv(f) == pts);
    REQUIRE_THROWS_AS(emit_series(path, std::span<const SeriesPoint>{}, SeriesFormat::csv), std::invalid_argument);
}

TEST_CASE("model and matrix files") {
    const SensorModel m{{1.5, -2.0}, {0.5, 3.0}};
    const auto path = tmp("model.csv");
    write_model_csv(path, m);
    const SensorModel back = read_model_csv(path);
    REQUIRE(back.mu == m.mu);
    REQUIRE(back.sigma == m.sigma);

    {
        std::ofstream bad(tmp("bad_model.csv"));
        bad << "sensor,mu,sigma\n1,0,1\n3,0,1\n";
    }
    try {
        read_model_csv(tmp("bad_model.csv"));
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        REQUIRE(e.row() == 3);
    }

    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.3, 0.3, 1.0;
    write_matrix_csv(tmp("cov.csv"), cov);
    REQUIRE(read_matrix_csv(tmp("cov.csv")) == cov);
    { std::ofstream empty(tmp("empty.csv")); }
    REQUIRE_THROWS_AS(read_matrix_csv(tmp("empty.csv")), CsvError);
}

TEST_CASE("scenario file") {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
    cov(0, 1) = cov(1, 0) = 0.2;
    write_matrix_csv(tmp("scenario_cov.csv"), cov);
    {
        std::ofstream f(tmp("scenario.json"));
        f << R"({"n_sensors": 3, "kappa": 10, "affected": [1, 3], "rates": [0.2],
                 "cov_path": "scenario_cov.csv", "horizon": 20, "seed": 9, "sigma": [1, 1, 2]})";
    }
    const ScenarioFile file = load_scenario_file(tmp("scenario.json"));
    REQUIRE(file.spec.affected == std::vector<std::size_t>{0, 2});
    REQUIRE(file.spec.rates == std::vector<double>{0.2, 0.2});
    REQUIRE(file.spec.kappa == 10);
    REQUIRE(file.seed == 9);
    REQUIRE(file.spec.cov->isApprox(cov));
    REQUIRE(file.model.sigma[2] == 2.0);

    {
        std::ofstream f(tmp("scenario_null.json"));
        f << R"({"n_sensors": 2, "kappa": null, "horizon": 5})";
    }
    REQUIRE_FALSE(load_scenario_file(tmp("scenario_null.json")).spec.kappa.has_value());
    {
        std::ofstream f(tmp("scenario_bad.json"));
        f << R"({"n_sensors": 2, "kappa": 3, "affected": [0], "rates": [1], "horizon": 5})";
    }
    REQUIRE_THROWS_AS(load_scenario_file(tmp("scenario_bad.json")), std::invalid_argument);
    REQUIRE_THROWS(load_scenario_file(tmp("does_not_exist.json")));
}
