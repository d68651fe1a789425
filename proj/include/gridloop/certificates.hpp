#pragma once

#include <vector>

#include "gridloop/controller.hpp"
#include "gridloop/linalg.hpp"

namespace gridloop {

/// Every constant of the convergence analysis for one scenario, plus the
/// decay-envelope parameters read off the error chains.
struct CertificateReport {
    double eta = 0.0;
    double l_f = 0.0;
    double l_g = 0.0;
    double opnorm_bc = 0.0;
    double lipschitz = 0.0;  // L = L_f + |B_c|^2 L_g
    double eps = 0.0;        // step size the report was evaluated at
    double eps_max = 0.0;
    double r_eps = 0.0;      // contraction factor at eps
    double psi = 0.0;
    double tau = 0.0;
    double sigma_lo = 0.0;   // min eigenvalue of P over the run
    double sigma_hi = 0.0;   // max eigenvalue of P over the run
    double c_v = 0.0;        // asymptotic bound on E|v_hat - v|^2
    double c_s = 0.0;        // asymptotic bound on E|S_c - S_c*|
    double l_s_opt = 0.0;
    double trace_sigma_l = 0.0;
    double trace_sigma_y = 0.0;
    double est_envelope = 0.0;    // 1 - psi * sigma_lo
    double opt_envelope = 0.0;    // r(eps)
    double mixed_envelope = 0.0;  // max(r, sqrt(1 - psi sigma_lo))
    double cond_ratio = 0.0;      // sigma_hi / sigma_lo

    void validate() const;
};

/// Spectral norm via power iteration on A^T A.
double opnorm_power_iteration(const Mat& a, double rel_tol = 1e-10, int max_iter = 10000);

/// L = L_f + |B_c|^2 L_g.
double composite_lipschitz(double l_f, double l_g, double opnorm_bc);

/// Admissible step-size bound 2 eta / ((L_f + |B_c|^2 L_g)^2 + |B_c|^2 L_g^2).
double max_step_size(double eta, double l_f, double l_g, double opnorm_bc);

/// r(eps) = sqrt(1 - 2 eta eps + eps^2 L^2); throws on negative radicand.
double contraction_factor(double eps, double eta, double lipschitz);

struct PsiTau {
    double psi = 0.0;
    double tau = 0.0;
};

/// psi: 99% of the running minimum of lambda_min(H^T (H(P+Sigma_l)H^T +
/// Sigma_y)^{-1} H), capped so psi * sigma_lo < 1. tau: running maximum of
/// max(|K|^2, |I - K H|^2) / sigma_lo. Spectral norms throughout.
PsiTau psi_tau(const Mat& h, const Mat& sigma_l, const Mat& sigma_y,
               const std::vector<Mat>& p_history, const std::vector<Mat>& k_history);

struct AsymptoticBounds {
    double c_v = 0.0;
    double c_s = 0.0;
};

AsymptoticBounds asymptotic_bounds(double psi, double tau, double sigma_lo, double sigma_hi,
                                   const Mat& sigma_l, const Mat& sigma_y, double eps,
                                   double r_eps, double l_g, double opnorm_bc, double l_s_opt);

/// min over the grid of eps / (1 - r(eps)), restricted to r(eps) < 1.
double optimal_map_lipschitz(const std::vector<double>& eps_grid, double eta, double lipschitz);

/// Uniform grid over the admissible interval (0, 2 eta / L^2).
std::vector<double> make_eps_grid(double eta, double lipschitz, int points = 4000);

/// Assemble the full report for a scenario: covariance schedule over
/// `horizon` steps from prior p0, then all constants.
CertificateReport build_certificate_report(const Mat& b_c, const ObjectiveParams& params,
                                           double eps, const Mat& sigma_l, const Mat& sigma_y,
                                           const Mat& h, const Mat& p0, long horizon);

struct BoundCheck {
    double empirical = 0.0;
    double bound = 0.0;
    bool pass = false;
    double margin = 0.0;  // bound / empirical (inf-safe)
};

struct BoundCheckRecord {
    BoundCheck estimation;    // tail E|v_hat - v|^2 vs C_V (+ decay envelope)
    BoundCheck optimization;  // tail E|S_c - S_c*| vs C_S
};

struct Trajectory;  // closed_loop.hpp

/// Ensemble check of the asymptotic bounds over the tail window.
BoundCheckRecord verify_bounds(const std::vector<Trajectory>& ensemble,
                               const CertificateReport& report, double tail_fraction = 0.2);

}  // namespace gridloop
