#pragma once

#include <string>
#include <vector>

#include "gridloop/grid_model.hpp"
#include "gridloop/linalg.hpp"
#include "gridloop/rng.hpp"

namespace gridloop {

enum class SensorKind {
    VoltagePhasor,     // |U|_i and angle(U)_i rows per target node
    VoltageMagnitude,  // |U|_i row per target node
    StateSubset,       // raw state index rows
    PseudoLoad         // load forecast rows mapped through B_l columns
};

/// One sensor (or forecast channel). `sigma` is a fractional standard
/// deviation relative to the nominal scale of the measured quantity.
struct SensorSpec {
    SensorKind kind = SensorKind::VoltageMagnitude;
    std::vector<int> targets;
    double sigma = 0.01;
};

/// Linear measurement model y = H V + w, w ~ N(0, Sigma_y).
struct MeasurementModel {
    Mat h;        // m x 2N
    Mat sigma_y;  // m x m, symmetric positive definite

    struct RowProvenance {
        int sensor = 0;        // index into the sensor list
        int row_in_sensor = 0; // row offset within that sensor's block
        bool pseudo = false;
    };
    std::vector<RowProvenance> provenance;

    Mat noise_factor;  // lower Cholesky factor of sigma_y, cached at build

    Eigen::Index rows() const { return h.rows(); }
};

/// Nominal scale floor used when a pseudo-measured load is (near) zero, so
/// its row variance stays positive.
inline constexpr double kPseudoScaleFloor = 1e-2;

/// Stack sensor rows into (H, Sigma_y). `nominal_loads` (length 2N_l) sets
/// the pseudo-measurement noise scale: row std = sigma * max(|load|, floor).
/// Throws if the stacked H is column-rank deficient.
MeasurementModel build_measurement_model(const std::vector<SensorSpec>& sensors,
                                         const LinearPowerFlowModel& lin,
                                         const Vec& nominal_loads);

struct ObservabilityResult {
    bool observable = false;
    int rank = 0;
};

/// Numerical column rank of H at relative tolerance `tol`.
ObservabilityResult observability_check(const Mat& h, double tol = 1e-8);

/// Draw y = H v_true + L xi with L the Cholesky factor of Sigma_y.
Vec sample_measurement(const Vec& v_true, const MeasurementModel& model, RngStream& rng);

}  // namespace gridloop
