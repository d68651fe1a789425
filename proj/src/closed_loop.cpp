#include "gridloop/closed_loop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <thread>

#include "gridloop/certificates.hpp"
#include "gridloop/error.hpp"
#include "gridloop/state_estimator.hpp"

namespace gridloop {

namespace {

// Substream ids: load increments and measurement noise must never share
// draws, or freezing the controller would shift the realizations.
constexpr std::uint64_t kLoadStream = 1;
constexpr std::uint64_t kMeasStream = 2;

}  // namespace

ProcessNoiseModel Scenario::process_noise() const {
    return make_process_noise(lin.b_l, loads.step_std, sigma_l_floor);
}

Mat Scenario::sigma_l() const { return process_noise().sigma_l; }

Vec Scenario::initial_s_c() const {
    return project_box(Vec::Zero(feasible.lower.size()), feasible);
}

void Scenario::validate() const {
    objective.validate();
    feasible.validate();
    if (meas.rows() == 0) throw Error::schema("scenario has no measurement model");
    const int nc = grid.num_controllable();
    const int nl = grid.num_load();
    if (objective.p_target.size() != nc)
        throw Error::schema("objective.p_target length must equal the number of "
                            "controllable injections (" + std::to_string(nc) + ")");
    if (feasible.lower.size() != 2 * nc)
        throw Error::schema("feasible set must have 2 N_c entries");
    if (loads.base.size() != 2 * nl || loads.step_std.size() != 2 * nl)
        throw Error::schema("load process vectors must have 2 N_l entries");
    for (Eigen::Index i = 0; i < loads.step_std.size(); ++i)
        if (loads.step_std[i] < 0.0)
            throw Error::schema("load step std must be nonnegative");
    if (sigma_l_floor < 0.0) throw Error::schema("sigma_l_floor must be nonnegative");
    if (horizon < 1) throw Error::schema("simulation horizon must be >= 1");
    if (!(eps > 0.0)) throw Error::schema("descent rate eps must be > 0");
    if (ensemble_size < 1) throw Error::schema("ensemble size must be >= 1");
    if (!(p0_variance > 0.0)) throw Error::schema("p0_variance must be > 0");
}

Mat generate_loads(const LoadProcessSpec& spec, RngStream& rng, long count) {
    const Eigen::Index dim = spec.base.size();
    if (spec.step_std.size() != dim)
        throw Error::schema("load process base/std dimension mismatch");
    Mat series(count, dim);
    if (count == 0) return series;
    series.row(0) = spec.base.transpose();
    for (long t = 1; t < count; ++t) {
        for (Eigen::Index j = 0; j < dim; ++j) {
            const double delta = spec.step_std[j] > 0.0 ? spec.step_std[j] * rng.gaussian() : 0.0;
            series(t, j) = series(t - 1, j) + delta;
        }
    }
    return series;
}

OptimumSolver::OptimumSolver(const LinearPowerFlowModel& lin, const ObjectiveParams& params,
                             const FeasibleSet& feasible, double tol)
    : lin_(&lin), params_(&params), feasible_(&feasible), tol_(tol) {
    if (!(tol > 0.0)) throw Error::schema("optimum solver tolerance must be > 0");
    // eta / L^2 minimizes the contraction factor, so tracking converges in a
    // handful of iterations from a warm start.
    const double opnorm_bc = opnorm_power_iteration(lin.b_c);
    const double lip = composite_lipschitz(params.l_f, params.l_g, opnorm_bc);
    eps_ = params.eta / (lip * lip);
    warm_ = project_box(Vec::Zero(feasible.lower.size()), feasible);
}

Vec OptimumSolver::solve(const Vec& s_l) {
    constexpr long kMaxIter = 1000000;
    Vec s = warm_;
    for (long it = 0; it < kMaxIter; ++it) {
        const Vec v = lin_->evaluate(s, s_l);
        const Vec next = control_step(s, v, eps_, *params_, *feasible_, lin_->b_c);
        const double phi_norm = (s - next).norm() / eps_;
        s = next;
        if (phi_norm < tol_) {
            warm_ = s;
            return s;
        }
    }
    throw Error::numeric("instantaneous optimum did not converge within iteration cap");
}

Vec instantaneous_optimum(const Vec& s_l, const LinearPowerFlowModel& lin,
                          const ObjectiveParams& params, const FeasibleSet& feasible,
                          double tol) {
    OptimumSolver solver(lin, params, feasible, tol);
    return solver.solve(s_l);
}

Trajectory run_closed_loop(const Scenario& scenario) {
    scenario.validate();

    const LinearPowerFlowModel& lin = scenario.lin;
    const int n = lin.n_state;
    const int n2 = 2 * n;
    const long horizon = scenario.horizon;
    const Mat sigma_l = scenario.sigma_l();
    const Mat& h = scenario.meas.h;
    const Eigen::Index m = scenario.meas.rows();

    if (!scenario.allow_eps_above_max) {
        const double opnorm_bc = opnorm_power_iteration(lin.b_c);
        const double eps_max = max_step_size(scenario.objective.eta, scenario.objective.l_f,
                                             scenario.objective.l_g, opnorm_bc);
        if (scenario.eps >= eps_max)
            throw Error::schema("eps " + std::to_string(scenario.eps) +
                                " is not below the certificate bound eps_max " +
                                std::to_string(eps_max));
    }

    RngStream load_rng(scenario.seed, kLoadStream);
    RngStream meas_rng(scenario.seed, kMeasStream);

    Mat load_series = generate_loads(scenario.loads, load_rng, horizon);
    if (!scenario.noise_enabled)
        for (long t = 0; t < horizon; ++t) load_series.row(t) = scenario.loads.base.transpose();

    PlantSolver plant(scenario.grid);
    OptimumSolver oracle(lin, scenario.objective, scenario.feasible);

    const bool standard = scenario.record != RecordLevel::Metrics;
    const bool full = scenario.record == RecordLevel::Full;

    Trajectory traj;
    traj.est_err_norm.resize(horizon);
    traj.opt_err_norm.resize(horizon);
    traj.norm_sc_star.resize(horizon);
    traj.norm_sc_max.resize(horizon);
    traj.penalty.resize(horizon);
    if (standard) {
        traj.v_true.resize(horizon, n2);
        traj.v_hat.resize(horizon, n2);
        traj.y.resize(horizon, m);
        traj.s_c.resize(horizon, scenario.feasible.lower.size());
        traj.s_l.resize(horizon, scenario.loads.base.size());
        traj.s_c_star.resize(horizon, scenario.feasible.lower.size());
        traj.volt_mag.resize(horizon, n);
    }
    if (full) {
        traj.p_history.reserve(horizon + 1);
        traj.k_history.reserve(horizon);
    }

    EstimatorState est;
    est.v_hat = lin.v0;
    est.p = scenario.p0_variance * Mat::Identity(n2, n2);
    if (full) traj.p_history.push_back(est.p);

    Vec s_c = scenario.initial_s_c();
    Vec s_c_prev = s_c;
    Vec v_true(n2);
    const double sc_max_norm = scenario.feasible.upper.norm();

    for (long t = 0; t < horizon; ++t) {
        const Vec s_l = load_series.row(t).transpose();

        // Plant.
        if (scenario.plant == PlantMode::Linear) {
            if (t == 0) {
                v_true = lin.evaluate(s_c, s_l);
            } else {
                const Vec omega_l =
                    lin.b_l * (s_l - Vec(load_series.row(t - 1).transpose()));
                v_true += lin.b_c * (s_c - s_c_prev) + omega_l;
            }
        } else {
            const Vec pq = scenario.grid.stack_injections(s_c, s_l);
            const CVec u = plant.solve(pq.head(n), pq.tail(n));
            v_true = polar_state(u);
        }

        // Measurement.
        Vec y;
        if (scenario.noise_enabled) {
            y = sample_measurement(v_true, scenario.meas, meas_rng);
        } else {
            y = h * v_true;
        }

        // Estimator.
        est = kalman_step(est, y, s_c - s_c_prev, lin.b_c, h, sigma_l, scenario.meas.sigma_y);
        if (full) {
            traj.p_history.push_back(est.p);
            traj.k_history.push_back(est.k);
        }

        // Oracle optimum for the true loads.
        const Vec s_star = oracle.solve(s_l);

        traj.est_err_norm[t] = (est.v_hat - v_true).norm();
        traj.opt_err_norm[t] = (s_c - s_star).norm();
        traj.norm_sc_star[t] = s_star.norm();
        traj.norm_sc_max[t] = sc_max_norm;
        traj.penalty[t] = penalty_g(v_true, scenario.objective);
        if (standard) {
            traj.v_true.row(t) = v_true.transpose();
            traj.v_hat.row(t) = est.v_hat.transpose();
            traj.y.row(t) = y.transpose();
            traj.s_c.row(t) = s_c.transpose();
            traj.s_l.row(t) = s_l.transpose();
            traj.s_c_star.row(t) = s_star.transpose();
            traj.volt_mag.row(t) = v_true.head(n).transpose();
        }

        // Controller.
        s_c_prev = s_c;
        if (!scenario.freeze_controller) {
            const Vec& feedback = scenario.exact_feedback ? v_true : est.v_hat;
            s_c = control_step(s_c, feedback, scenario.eps, scenario.objective,
                               scenario.feasible, lin.b_c);
        }
    }

    return traj;
}

std::vector<Trajectory> run_ensemble(const Scenario& scenario, int runs) {
    if (runs < 1) throw Error::schema("ensemble needs at least one run");
    std::vector<Trajectory> out(runs);

    const unsigned workers =
        std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                        static_cast<unsigned>(runs)));
    std::vector<std::future<void>> futures;
    futures.reserve(workers);
    std::atomic<int> next{0};
    for (unsigned w = 0; w < workers; ++w) {
        futures.push_back(std::async(std::launch::async, [&]() {
            for (int i = next.fetch_add(1); i < runs; i = next.fetch_add(1)) {
                Scenario member = scenario;
                member.seed = scenario.seed + static_cast<std::uint64_t>(i);
                member.record = RecordLevel::Metrics;
                out[i] = run_closed_loop(member);
            }
        }));
    }
    for (auto& f : futures) f.get();
    return out;
}

namespace {

double tail_mean(const std::vector<double>& series, double tail_fraction) {
    const std::size_t n = series.size();
    const std::size_t start =
        n - std::max<std::size_t>(1, static_cast<std::size_t>(tail_fraction * n));
    double acc = 0.0;
    for (std::size_t i = start; i < n; ++i) acc += series[i];
    return acc / (n - start);
}

long settling_step(const std::vector<double>& series, double threshold) {
    // First index after which the series stays strictly below the threshold.
    long settle = -1;
    for (long i = 0; i < static_cast<long>(series.size()); ++i) {
        if (series[i] < threshold) {
            if (settle < 0) settle = i;
        } else {
            settle = -1;
        }
    }
    return settle;
}

}  // namespace

MetricsSummary compute_metrics(const Trajectory& traj, const ObjectiveParams& params,
                               double tail_fraction) {
    MetricsSummary s;
    if (traj.est_err_norm.empty()) return s;
    s.est_tail_mean = tail_mean(traj.est_err_norm, tail_fraction);
    s.opt_tail_mean = tail_mean(traj.opt_err_norm, tail_fraction);
    s.est_settling = settling_step(traj.est_err_norm, 2.0 * s.est_tail_mean);
    s.opt_settling = settling_step(traj.opt_err_norm, 2.0 * s.opt_tail_mean);

    if (traj.volt_mag.size() > 0) {
        for (Eigen::Index t = 0; t < traj.volt_mag.rows(); ++t) {
            for (Eigen::Index i = 0; i < traj.volt_mag.cols(); ++i) {
                const double v = traj.volt_mag(t, i);
                const double depth =
                    std::max(std::max(0.0, v - params.v_max), std::max(0.0, params.v_min - v));
                if (depth > 0.0) {
                    ++s.violation_count;
                    s.max_violation_depth = std::max(s.max_violation_depth, depth);
                }
            }
        }
    }
    return s;
}

}  // namespace gridloop
