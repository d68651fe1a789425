#pragma once

#include "gridloop/linalg.hpp"

namespace gridloop {

/// Box of per-element injection limits for the controllable resources.
struct FeasibleSet {
    Vec lower;
    Vec upper;

    void validate() const;
    bool contains(const Vec& x, double slack = 0.0) const;
};

/// Parameters of the composite objective f(S_c) + g(V):
///   f = 1/2 |P_c - P_target|^2 + 1/2 |Q_c|^2     (eta = L_f = 1)
///   g = rho/2 sum_i max(0,|U|_i - v_max)^2 + max(0, v_min - |U|_i)^2
struct ObjectiveParams {
    Vec p_target;       // length N_c
    double rho = 100.0;
    double v_min = 0.94;
    double v_max = 1.06;
    double eta = 1.0;
    double l_f = 1.0;
    double l_g = 100.0;  // equals rho for the quadratic penalty

    void validate() const;
};

double objective_f(const Vec& s_c, const ObjectiveParams& params);
Vec grad_f(const Vec& s_c, const ObjectiveParams& params);

/// Value of the voltage penalty at a polar state V = [|U|; angle].
double penalty_g(const Vec& v, const ObjectiveParams& params);

/// Gradient of g. Angle components are identically zero; at the exact kink
/// |U|_i == v_max (or v_min) the one-sided-from-inside value 0 is used,
/// which keeps g continuously differentiable with global constant rho.
Vec grad_g(const Vec& v, const ObjectiveParams& params);

/// Elementwise clamp, the Euclidean projection onto the box.
Vec project_box(const Vec& x, const FeasibleSet& feasible);

/// One projected-gradient step driven by the state estimate:
///   Pi_F[ S_c - eps (grad f(S_c) + B_c^T grad g(v_hat)) ].
Vec control_step(const Vec& s_c, const Vec& v_hat, double eps, const ObjectiveParams& params,
                 const FeasibleSet& feasible, const Mat& b_c);

/// Generalized gradient mapping (1/eps)(S_c - control_step(...)); zero
/// exactly at instantaneous optima.
Vec gradient_mapping(const Vec& v_hat, const Vec& s_c, double eps, const ObjectiveParams& params,
                     const FeasibleSet& feasible, const Mat& b_c);

}  // namespace gridloop
