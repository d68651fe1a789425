#pragma once

#include <vector>

#include "gridloop/linalg.hpp"

namespace gridloop {

/// Filter state after an update: estimate, covariance, last gain.
struct EstimatorState {
    Vec v_hat;
    Mat p;
    Mat k;
    long step = 0;
};

/// Process-noise covariance of the load-driven state disturbance, with its
/// rank status recorded: B_l diag(step_std^2) B_l^T is rank deficient
/// whenever fewer load entries than states are stochastic, and only the
/// diagonal floor keeps the filter covariance bounded away from zero then.
struct ProcessNoiseModel {
    Mat sigma_l;  // 2N x 2N symmetric PSD
    bool full_rank = false;
};

ProcessNoiseModel make_process_noise(const Mat& b_l, const Vec& step_std, double floor,
                                     double rank_tol = 1e-12);

/// K = (P + Sigma_l) H^T (H (P + Sigma_l) H^T + Sigma_y)^{-1}, computed via
/// a positive-definite solve on the innovation covariance.
Mat kalman_gain(const Mat& p_prev, const Mat& sigma_l, const Mat& h, const Mat& sigma_y);

/// One filter update:
///   v_hat <- (I - K H)(v_hat + B_c dS_c) + K y
///   P     <- (I - K H)(P + Sigma_l), then symmetrized.
EstimatorState kalman_step(const EstimatorState& est, const Vec& y, const Vec& delta_s_c,
                           const Mat& b_c, const Mat& h, const Mat& sigma_l,
                           const Mat& sigma_y);

struct CovarianceBounds {
    double sigma_lo = 0.0;  // min eigenvalue of P over the run
    double sigma_hi = 0.0;  // max eigenvalue of P over the run
};

CovarianceBounds covariance_bounds(const std::vector<Mat>& p_history);

/// Covariance/gain recursion for a fixed horizon. The P and K sequences do
/// not depend on the measured data, so one schedule serves an entire
/// ensemble of runs.
struct CovarianceSchedule {
    std::vector<Mat> p_history;  // P_0 .. P_T (p_history[0] is the prior)
    std::vector<Mat> k_history;  // K_1 .. K_T
};

CovarianceSchedule covariance_schedule(const Mat& p0, const Mat& sigma_l, const Mat& h,
                                       const Mat& sigma_y, long steps);

}  // namespace gridloop
