#include "gridloop/state_estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gridloop/error.hpp"

namespace gridloop {

ProcessNoiseModel make_process_noise(const Mat& b_l, const Vec& step_std, double floor,
                                     double rank_tol) {
    if (floor < 0.0) throw Error::schema("process noise floor must be nonnegative");
    ProcessNoiseModel model;
    const Mat sigma_delta = step_std.array().square().matrix().asDiagonal();
    model.sigma_l = b_l * sigma_delta * b_l.transpose();
    model.sigma_l += floor * Mat::Identity(model.sigma_l.rows(), model.sigma_l.cols());
    symmetrize(model.sigma_l);
    Eigen::SelfAdjointEigenSolver<Mat> eig(model.sigma_l, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo < -1e-12 * std::max(hi, 1.0))
        throw Error::numeric("process noise covariance is not positive semidefinite");
    model.full_rank = lo > rank_tol * std::max(hi, 0.0);
    return model;
}

Mat kalman_gain(const Mat& p_prev, const Mat& sigma_l, const Mat& h, const Mat& sigma_y) {
    const Mat p_pred = p_prev + sigma_l;
    Mat innovation = h * p_pred * h.transpose() + sigma_y;
    symmetrize(innovation);
    Eigen::LLT<Mat> llt(innovation);
    if (llt.info() != Eigen::Success)
        throw Error::numeric("innovation covariance factorization failed (Sigma_y not PD?)");
    // K = P_pred H^T S^{-1}  ==  (S^{-1} H P_pred)^T since P_pred, S symmetric.
    return llt.solve(h * p_pred).transpose();
}

EstimatorState kalman_step(const EstimatorState& est, const Vec& y, const Vec& delta_s_c,
                           const Mat& b_c, const Mat& h, const Mat& sigma_l,
                           const Mat& sigma_y) {
    EstimatorState next;
    next.k = kalman_gain(est.p, sigma_l, h, sigma_y);
    const Vec predicted = est.v_hat + b_c * delta_s_c;
    next.v_hat = predicted + next.k * (y - h * predicted);
    next.p = (Mat::Identity(est.p.rows(), est.p.cols()) - next.k * h) * (est.p + sigma_l);
    symmetrize(next.p);
    next.step = est.step + 1;
    return next;
}

CovarianceBounds covariance_bounds(const std::vector<Mat>& p_history) {
    if (p_history.empty()) throw Error::schema("covariance history is empty");
    CovarianceBounds b;
    bool first = true;
    for (const Mat& p : p_history) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(p, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (first) {
            b.sigma_lo = lo;
            b.sigma_hi = hi;
            first = false;
        } else {
            b.sigma_lo = std::min(b.sigma_lo, lo);
            b.sigma_hi = std::max(b.sigma_hi, hi);
        }
    }
    return b;
}

CovarianceSchedule covariance_schedule(const Mat& p0, const Mat& sigma_l, const Mat& h,
                                       const Mat& sigma_y, long steps) {
    CovarianceSchedule sched;
    sched.p_history.reserve(steps + 1);
    sched.k_history.reserve(steps);
    sched.p_history.push_back(p0);
    Mat p = p0;
    const Mat id = Mat::Identity(p0.rows(), p0.cols());
    for (long t = 0; t < steps; ++t) {
        Mat k = kalman_gain(p, sigma_l, h, sigma_y);
        p = (id - k * h) * (p + sigma_l);
        symmetrize(p);
        sched.k_history.push_back(std::move(k));
        sched.p_history.push_back(p);
    }
    return sched;
}

}  // namespace gridloop
