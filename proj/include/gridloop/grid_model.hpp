#pragma once

#include <string>
#include <vector>

#include "gridloop/linalg.hpp"

namespace gridloop {

enum class BusRole { Slack, Load, Controllable };

struct Bus {
    int id = 0;
    int phases = 1;  // 1..3
    BusRole role = BusRole::Load;
};

/// Series branch between two buses with matching phase counts. The
/// admittance block is n_phi x n_phi; a plain scalar line is a 1x1 block.
struct Branch {
    int from = 0;
    int to = 0;
    CMat admittance;
};

/// Shunt admittance block attached to one bus (adds to the Y diagonal only).
struct Shunt {
    int bus = 0;
    CMat admittance;
};

/// Network model with the admittance matrix partitioned around the slack bus:
///
///   [ I_pcc ]   [ Y00  Y01 ] [ U_pcc ]
///   [  I    ] = [ Y01^T Y11] [  U    ]
///
/// State ordering: non-slack buses in input order, phases consecutive.
struct GridModel {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Shunt> shunts;
    CVec u_pcc;  // one entry per slack phase

    CMat y00, y01, y11;

    int n_state = 0;    // N = total non-slack phase count
    int slack_bus = 0;  // index into `buses`

    /// First state index of each bus (-1 for the slack).
    std::vector<int> state_offset;

    /// State indices owned by controllable / load buses, in bus order.
    std::vector<int> controllable_states;
    std::vector<int> load_states;

    int num_controllable() const { return static_cast<int>(controllable_states.size()); }
    int num_load() const { return static_cast<int>(load_states.size()); }

    /// 0/1 selector mapping S_c = [P_c; Q_c] into the stacked [P; Q] vector.
    Mat selector_controllable() const;
    /// Same for S_l.
    Mat selector_load() const;

    /// Stacked injection [P; Q] (length 2N) from the partitioned vectors.
    Vec stack_injections(const Vec& s_c, const Vec& s_l) const;
};

/// Linearization of the power flow around the no-load point:
///   V = V0 + B_c S_c + B_l S_l,  V = [|U|; angle(U)].
struct LinearPowerFlowModel {
    Vec v0;    // length 2N
    Mat b;     // 2N x 2N
    Mat b_c;   // 2N x 2N_c
    Mat b_l;   // 2N x 2N_l
    CMat z_v;  // N x N
    int n_state = 0;

    Vec evaluate(const Vec& s_c, const Vec& s_l) const {
        return v0 + b_c * s_c + b_l * s_l;
    }
};

/// Assemble the partitioned admittance matrix by Laplacian stamping.
/// Rejects duplicate branches on the same ordered bus pair, self-loops,
/// phase-count mismatches and a numerically singular Y11.
GridModel build_admittance(std::vector<Bus> buses, std::vector<Branch> branches,
                           const CVec& u_pcc, std::vector<Shunt> shunts = {});

/// Zero-injection solution U0 = -Y11^{-1} Y01^T U_pcc.
CVec no_load_voltage(const GridModel& grid);

/// Sensitivity model at U0 (entries of U0 must be nonzero).
LinearPowerFlowModel linearize(const GridModel& grid, const CVec& u0);

struct PfOptions {
    double tol = 1e-10;
    int max_iter = 200;
};

/// Caches the Y11 factorization so repeated plant solves inside the
/// simulation loop only pay for back-substitutions.
class PlantSolver {
public:
    explicit PlantSolver(const GridModel& grid);

    /// Fixed-point power flow solve seeded at the no-load point.
    CVec solve(const Vec& p, const Vec& q, const PfOptions& opts = {}) const;

    /// Max-norm of diag(U) conj(Y01^T U_pcc + Y11 U) - (P + jQ).
    double residual(const CVec& u, const Vec& p, const Vec& q) const;

    const CVec& no_load() const { return u0_; }

private:
    const GridModel* grid_;
    Eigen::PartialPivLU<CMat> y11_lu_;
    CVec y01t_upcc_;
    CVec u0_;
};

/// One-shot wrapper over PlantSolver.
CVec nonlinear_pf_solve(const GridModel& grid, const Vec& p, const Vec& q,
                        const PfOptions& opts = {});

/// Polar state [|U|; angle(U)] with angles in (-pi, pi].
Vec polar_state(const CVec& u);

}  // namespace gridloop
