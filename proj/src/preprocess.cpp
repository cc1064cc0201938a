#include "slopecpd/preprocess.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace slopecpd {

WhitenTransform build_whitener(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mu) {
    if (cov.rows() == 0 || cov.rows() != cov.cols()) {
        throw std::invalid_argument("covariance must be a non-empty square matrix");
    }
    if (mu.size() != cov.rows()) {
        throw std::invalid_argument("mean vector and covariance dimensions differ");
    }
    const double scale = cov.cwiseAbs().maxCoeff();
    if (!((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale)) {
        throw std::invalid_argument("covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw std::invalid_argument("eigendecomposition of the covariance failed");
    }
    const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
    const double lo = ev(0);
    const double hi = ev(ev.size() - 1);
    if (!(lo > 1e-10 * hi)) {
        std::ostringstream msg;
        msg << "covariance is not positive definite (min eigenvalue " << lo << ", max " << hi << ")";
        throw std::invalid_argument(msg.str());
    }
    const Eigen::MatrixXd& v = eig.eigenvectors();
    WhitenTransform tr;
    tr.root_inverse = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    tr.root = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
    // Symmetrize away rounding so the transform is exactly symmetric.
    tr.root_inverse = 0.5 * (tr.root_inverse + tr.root_inverse.transpose()).eval();
    tr.root = 0.5 * (tr.root + tr.root.transpose()).eval();
    tr.mu = mu;
    return tr;
}

namespace {

void check_width(const WhitenTransform& tr, const ObservationFrame& f) {
    if (f.values.size() != tr.size()) {
        throw std::invalid_argument("frame has " + std::to_string(f.values.size()) + " values, transform expects " +
                                    std::to_string(tr.size()));
    }
}

}  // namespace

ObservationFrame whiten(const WhitenTransform& transform, const ObservationFrame& frame) {
    check_width(transform, frame);
    const Eigen::Map<const Eigen::VectorXd> y(frame.values.data(), static_cast<Eigen::Index>(frame.values.size()));
    const Eigen::VectorXd x = transform.root_inverse * (y - transform.mu);
    return {frame.t, std::vector<double>(x.data(), x.data() + x.size())};
}

ObservationFrame unwhiten(const WhitenTransform& transform, const ObservationFrame& frame) {
    check_width(transform, frame);
    const Eigen::Map<const Eigen::VectorXd> x(frame.values.data(), static_cast<Eigen::Index>(frame.values.size()));
    const Eigen::VectorXd y = transform.root * x + transform.mu;
    return {frame.t, std::vector<double>(y.data(), y.data() + y.size())};
}

ObservationFrame LinearTrend::residual(const ObservationFrame& frame) const {
    if (frame.values.size() != slope.size()) {
        throw std::invalid_argument("frame width does not match the fitted trend");
    }
    ObservationFrame out{frame.t, frame.values};
    const double t = static_cast<double>(frame.t);
    for (std::size_t n = 0; n < out.values.size(); ++n) {
        out.values[n] -= intercept[n] + slope[n] * t;
    }
    return out;
}

SensorModel LinearTrend::residual_model() const {
    SensorModel m;
    m.mu.assign(residual_sd.size(), 0.0);
    m.sigma = residual_sd;
    return m;
}

LinearTrend detrend_linear(std::span<const ObservationFrame> history, std::size_t fit_horizon) {
    if (fit_horizon < 2) {
        throw std::invalid_argument("fit_horizon must be at least 2");
    }
    if (history.size() < fit_horizon) {
        throw std::invalid_argument("history has " + std::to_string(history.size()) + " frames, fit_horizon is " +
                                    std::to_string(fit_horizon));
    }
    const std::size_t n = history.front().values.size();
    if (n == 0) {
        throw std::invalid_argument("frames have no sensors");
    }
    // Centered time makes the normal equations well conditioned.
    double t_mean = 0.0;
    for (std::size_t i = 0; i < fit_horizon; ++i) {
        if (history[i].values.size() != n) {
            throw std::invalid_argument("inconsistent frame widths in history");
        }
        t_mean += static_cast<double>(history[i].t);
    }
    t_mean /= static_cast<double>(fit_horizon);
    double stt = 0.0;
    for (std::size_t i = 0; i < fit_horizon; ++i) {
        const double d = static_cast<double>(history[i].t) - t_mean;
        stt += d * d;
    }
    if (!(stt > 0.0)) {
        throw std::invalid_argument("time column is constant over the fit horizon");
    }
    LinearTrend tr;
    tr.fit_horizon = fit_horizon;
    tr.intercept.resize(n);
    tr.slope.resize(n);
    tr.residual_sd.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        double y_mean = 0.0;
        for (std::size_t i = 0; i < fit_horizon; ++i) {
            y_mean += history[i].values[s];
        }
        y_mean /= static_cast<double>(fit_horizon);
        double sty = 0.0;
        for (std::size_t i = 0; i < fit_horizon; ++i) {
            sty += (static_cast<double>(history[i].t) - t_mean) * (history[i].values[s] - y_mean);
        }
        const double b = sty / stt;
        const double a = y_mean - b * t_mean;
        double rss = 0.0;
        for (std::size_t i = 0; i < fit_horizon; ++i) {
            const double r = history[i].values[s] - (a + b * static_cast<double>(history[i].t));
            rss += r * r;
        }
        tr.intercept[s] = a;
        tr.slope[s] = b;
        tr.residual_sd[s] = fit_horizon > 2 ? std::sqrt(rss / static_cast<double>(fit_horizon - 2)) : 0.0;
    }
    return tr;
}

std::vector<double> difference(std::span<const double> series) {
    if (series.size() < 2) {
        throw std::invalid_argument("difference needs at least two points");
    }
    std::vector<double> out(series.size() - 1);
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        out[i] = series[i + 1] - series[i];
    }
    return out;
}

}  // namespace slopecpd
