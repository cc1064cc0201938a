#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "slopecpd/model.hpp"

namespace slopecpd {

/// y -> Sigma0^{-1/2} (y - mu) for a known covariance Sigma0.
struct WhitenTransform {
    Eigen::MatrixXd root_inverse;  // symmetric Sigma0^{-1/2}
    Eigen::MatrixXd root;          // symmetric Sigma0^{1/2}, for the inverse map
    Eigen::VectorXd mu;

    std::size_t size() const { return static_cast<std::size_t>(mu.size()); }
};

/// Symmetric inverse square root through the eigendecomposition of `cov`.
/// Throws std::invalid_argument for non-symmetric or non-positive-definite
/// input (min eigenvalue <= 1e-10 * max), reporting the smallest eigenvalue.
WhitenTransform build_whitener(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mu);

/// Whitened residual frame; the detector downstream should run with p0 = 1.
ObservationFrame whiten(const WhitenTransform& transform, const ObservationFrame& frame);
/// Inverse map y = Sigma0^{1/2} x + mu.
ObservationFrame unwhiten(const WhitenTransform& transform, const ObservationFrame& frame);

/// Per-sensor line a + b t fitted by ordinary least squares on the first
/// fit_horizon frames of a history.
struct LinearTrend {
    std::vector<double> intercept;
    std::vector<double> slope;
    /// Residual standard deviation of each fit (n - 2 degrees of freedom).
    std::vector<double> residual_sd;
    std::size_t fit_horizon{0};

    /// Residual y_n - (a_n + b_n t) of a frame.
    ObservationFrame residual(const ObservationFrame& frame) const;
    /// Model for the residual stream: mu = 0, sigma = residual_sd.
    SensorModel residual_model() const;
};

/// Throws std::invalid_argument when fit_horizon < 2, the history is shorter
/// than fit_horizon, or the frames have inconsistent widths.
LinearTrend detrend_linear(std::span<const ObservationFrame> history, std::size_t fit_horizon);

/// First differences x_{i+1} - x_i. Throws std::invalid_argument for fewer than two points.
std::vector<double> difference(std::span<const double> series);

}  // namespace slopecpd
