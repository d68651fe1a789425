#include "gridloop/measurement.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "gridloop/error.hpp"

namespace gridloop {

MeasurementModel build_measurement_model(const std::vector<SensorSpec>& sensors,
                                         const LinearPowerFlowModel& lin,
                                         const Vec& nominal_loads) {
    if (sensors.empty()) throw Error::schema("sensor list is empty");
    const int n = lin.n_state;
    const int nl2 = static_cast<int>(lin.b_l.cols());
    if (nominal_loads.size() != nl2)
        throw Error::schema("nominal load vector has wrong dimension");

    std::vector<Vec> rows;
    std::vector<double> stds;
    MeasurementModel model;

    // Pseudo-measurements observe the load injections themselves. Inverting
    // V = V0 + B [P;Q] gives S_l = I_l^T B^{-1} (V - V0); the constant
    // -I_l^T B^{-1} V0 offset is folded into the reported value, so the rows
    // stay linear in V and Sigma_y is expressed in load units.
    Mat pseudo_rows;
    bool have_pseudo = false;
    for (const SensorSpec& s : sensors) have_pseudo |= (s.kind == SensorKind::PseudoLoad);
    if (have_pseudo) {
        Eigen::PartialPivLU<Mat> lu(lin.b);
        const Mat selector_load = lu.solve(lin.b_l);  // recovers I_l since B_l = B I_l
        const Mat b_inv = lu.inverse();
        pseudo_rows = selector_load.transpose() * b_inv;  // nl2 x 2N
        if (!pseudo_rows.allFinite())
            throw Error::physics("sensitivity matrix B is not invertible; cannot form "
                                 "pseudo-measurement rows");
    }

    for (int si = 0; si < static_cast<int>(sensors.size()); ++si) {
        const SensorSpec& s = sensors[si];
        if (s.sigma <= 0.0)
            throw Error::schema("sensor " + std::to_string(si) +
                                " has non-positive standard deviation");
        if (s.targets.empty())
            throw Error::schema("sensor " + std::to_string(si) + " has no targets");
        int row_in_sensor = 0;
        auto push = [&](const Vec& row, double std_abs, bool pseudo) {
            rows.push_back(row);
            stds.push_back(std_abs);
            model.provenance.push_back({si, row_in_sensor++, pseudo});
        };
        switch (s.kind) {
            case SensorKind::VoltagePhasor:
                for (int t : s.targets) {
                    if (t < 0 || t >= n)
                        throw Error::schema("voltage sensor target out of range");
                    Vec mag = Vec::Zero(2 * n);
                    mag[t] = 1.0;
                    push(mag, s.sigma, false);
                    Vec ang = Vec::Zero(2 * n);
                    ang[n + t] = 1.0;
                    push(ang, s.sigma, false);
                }
                break;
            case SensorKind::VoltageMagnitude:
                for (int t : s.targets) {
                    if (t < 0 || t >= n)
                        throw Error::schema("voltage sensor target out of range");
                    Vec mag = Vec::Zero(2 * n);
                    mag[t] = 1.0;
                    push(mag, s.sigma, false);
                }
                break;
            case SensorKind::StateSubset:
                for (int t : s.targets) {
                    if (t < 0 || t >= 2 * n)
                        throw Error::schema("state sensor target out of range");
                    Vec row = Vec::Zero(2 * n);
                    row[t] = 1.0;
                    push(row, s.sigma, false);
                }
                break;
            case SensorKind::PseudoLoad:
                for (int t : s.targets) {
                    if (t < 0 || t >= nl2)
                        throw Error::schema("pseudo-load target out of range");
                    Vec row = pseudo_rows.row(t).transpose();
                    const double scale = std::max(std::abs(nominal_loads[t]), kPseudoScaleFloor);
                    push(row, s.sigma * scale, true);
                }
                break;
        }
    }

    const int m = static_cast<int>(rows.size());
    model.h.resize(m, 2 * n);
    model.sigma_y = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        model.h.row(i) = rows[i].transpose();
        model.sigma_y(i, i) = stds[i] * stds[i];
    }

    const ObservabilityResult obs = observability_check(model.h);
    if (!obs.observable)
        throw Error::physics("measurement model is rank deficient: rank " +
                             std::to_string(obs.rank) + " < " + std::to_string(2 * n) +
                             " (unobservable subspace dimension " +
                             std::to_string(2 * n - obs.rank) + ")");

    Eigen::LLT<Mat> llt(model.sigma_y);
    if (llt.info() != Eigen::Success)
        throw Error::numeric("measurement covariance is not positive definite");
    model.noise_factor = llt.matrixL();
    return model;
}

ObservabilityResult observability_check(const Mat& h, double tol) {
    ObservabilityResult r;
    if (h.rows() == 0 || h.cols() == 0) return r;
    Eigen::JacobiSVD<Mat> svd(h);
    const auto& sv = svd.singularValues();
    const double cutoff = tol * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    r.rank = rank;
    r.observable = (rank == h.cols());
    return r;
}

Vec sample_measurement(const Vec& v_true, const MeasurementModel& model, RngStream& rng) {
    const Eigen::Index m = model.rows();
    if (v_true.size() != model.h.cols())
        throw Error::schema("state vector has wrong dimension for measurement model");
    Mat fallback;
    const Mat* factor = &model.noise_factor;
    if (factor->rows() != m) {  // hand-built model without a cached factor
        Eigen::LLT<Mat> llt(model.sigma_y);
        if (llt.info() != Eigen::Success)
            throw Error::numeric("measurement covariance is not positive definite");
        fallback = llt.matrixL();
        factor = &fallback;
    }
    return model.h * v_true + (*factor) * rng.gaussian_vec(m);
}

}  // namespace gridloop
