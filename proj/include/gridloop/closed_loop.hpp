#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridloop/controller.hpp"
#include "gridloop/grid_model.hpp"
#include "gridloop/linalg.hpp"
#include "gridloop/measurement.hpp"
#include "gridloop/rng.hpp"
#include "gridloop/state_estimator.hpp"

namespace gridloop {

enum class PlantMode { Linear, Nonlinear };

/// Random-walk load process: S_l(t) = S_l(t-1) + delta_t,
/// delta_t ~ N(0, diag(step_std^2)).
struct LoadProcessSpec {
    Vec base;      // 2 N_l
    Vec step_std;  // 2 N_l
};

/// How much a run records. Metrics keeps the norm series only; Standard adds
/// the state/measurement tables needed for CSV export; Full adds the P/K
/// history needed to certify from a recorded run.
enum class RecordLevel { Metrics, Standard, Full };

/// A fully resolved experiment: grid + derived models + every knob.
struct Scenario {
    std::string name;
    std::string schema_version = "1.0";

    GridModel grid;
    LinearPowerFlowModel lin;
    std::vector<SensorSpec> sensors;
    MeasurementModel meas;
    ObjectiveParams objective;
    FeasibleSet feasible;
    LoadProcessSpec loads;

    double sigma_l_floor = 0.0;  // diagonal added to Sigma_l (fictitious process noise)
    double eps = 1e-3;
    long horizon = 1000;
    std::uint64_t seed = 1;
    PlantMode plant = PlantMode::Nonlinear;
    int ensemble_size = 100;
    double p0_variance = 1.0;          // diffuse prior: P_0 = p0_variance * I
    bool allow_eps_above_max = false;  // skip the eps < eps_max guard

    // Harness switches (not part of the file schema).
    bool noise_enabled = true;
    bool freeze_controller = false;  // hold S_c at its initial value
    bool exact_feedback = false;     // controller sees the true state
    RecordLevel record = RecordLevel::Standard;

    /// Process noise covariance B_l diag(step_std^2) B_l^T + floor * I,
    /// with its rank status.
    ProcessNoiseModel process_noise() const;
    Mat sigma_l() const;

    /// Initial set-point: the projection of zero onto the feasible set.
    Vec initial_s_c() const;

    void validate() const;
};

/// Per-step record of one closed-loop run. All series have length
/// `horizon`; matrices hold one row per step.
struct Trajectory {
    std::vector<double> est_err_norm;  // |v_hat - v|
    std::vector<double> opt_err_norm;  // |S_c - S_c*|
    std::vector<double> norm_sc_star;
    std::vector<double> norm_sc_max;   // |upper bound| (static feasible set)
    std::vector<double> penalty;       // g(V_true)

    // RecordLevel::Standard and up:
    Mat v_true;    // T x 2N
    Mat v_hat;     // T x 2N
    Mat y;         // T x m
    Mat s_c;       // T x 2N_c
    Mat s_l;       // T x 2N_l
    Mat s_c_star;  // T x 2N_c
    Mat volt_mag;  // T x N

    // RecordLevel::Full only:
    std::vector<Mat> p_history;  // P_0 .. P_T
    std::vector<Mat> k_history;  // K_1 .. K_T

    long steps() const { return static_cast<long>(est_err_norm.size()); }
};

/// Random-walk load series, `count` rows starting at the base profile.
Mat generate_loads(const LoadProcessSpec& spec, RngStream& rng, long count);

/// Projected-gradient solver for the instantaneous optimum of
/// f(S_c) + g(V0 + B_c S_c + B_l S_l) over the feasible box. Keeps a warm
/// start so per-step tracking inside the simulation loop is cheap.
class OptimumSolver {
public:
    OptimumSolver(const LinearPowerFlowModel& lin, const ObjectiveParams& params,
                  const FeasibleSet& feasible, double tol = 1e-10);

    /// Solve for the given loads; iterates until |phi_eps| < tol.
    Vec solve(const Vec& s_l);

    double step_size() const { return eps_; }

private:
    const LinearPowerFlowModel* lin_;
    const ObjectiveParams* params_;
    const FeasibleSet* feasible_;
    double tol_;
    double eps_;
    Vec warm_;
};

/// One-shot instantaneous optimum (cold start).
Vec instantaneous_optimum(const Vec& s_l, const LinearPowerFlowModel& lin,
                          const ObjectiveParams& params, const FeasibleSet& feasible,
                          double tol = 1e-10);

/// Run the full plant / measurement / estimator / controller loop.
Trajectory run_closed_loop(const Scenario& scenario);

/// Independent seeded runs (seed + run index), executed concurrently.
/// Members are recorded at Metrics level.
std::vector<Trajectory> run_ensemble(const Scenario& scenario, int runs);

struct MetricsSummary {
    double est_tail_mean = 0.0;
    double opt_tail_mean = 0.0;
    long est_settling = -1;  // first step after which the error stays below
    long opt_settling = -1;  // 2x its tail mean; -1 if never
    long violation_count = 0;
    double max_violation_depth = 0.0;
};

MetricsSummary compute_metrics(const Trajectory& traj, const ObjectiveParams& params,
                               double tail_fraction = 0.2);

}  // namespace gridloop
