#include "gridloop/certificates.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "gridloop/closed_loop.hpp"
#include "gridloop/error.hpp"
#include "gridloop/state_estimator.hpp"

namespace gridloop {

void CertificateReport::validate() const {
    if (!(eps_max > 0.0)) throw Error::numeric("certificate: eps_max is not positive");
    if (eps > 0.0 && eps < eps_max && !(r_eps >= 0.0 && r_eps < 1.0))
        throw Error::numeric("certificate: r(eps) outside [0,1) for admissible eps");
    if (sigma_lo > sigma_hi) throw Error::numeric("certificate: sigma_lo > sigma_hi");
    if (!(psi * sigma_lo < 1.0)) throw Error::numeric("certificate: psi * sigma_lo >= 1");
    if (!std::isfinite(c_v) || !std::isfinite(c_s))
        throw Error::numeric("certificate: non-finite bound");
}

double opnorm_power_iteration(const Mat& a, double rel_tol, int max_iter) {
    if (a.size() == 0) return 0.0;
    const Mat ata = a.transpose() * a;
    // Deterministic start with no structural symmetry, so it cannot sit in
    // an invariant subspace of a symmetric network's top singular direction.
    Vec v(ata.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.013 * (i % 7) + 1e-3 * i;
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec w = ata * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        w /= norm;
        const double lambda_new = w.dot(ata * w);
        if (std::abs(lambda_new - lambda) <= rel_tol * std::abs(lambda_new)) {
            lambda = lambda_new;
            break;
        }
        lambda = lambda_new;
        v = w;
    }
    return std::sqrt(std::max(0.0, lambda));
}

double composite_lipschitz(double l_f, double l_g, double opnorm_bc) {
    return l_f + opnorm_bc * opnorm_bc * l_g;
}

double max_step_size(double eta, double l_f, double l_g, double opnorm_bc) {
    const double bc2 = opnorm_bc * opnorm_bc;
    const double lip = l_f + bc2 * l_g;
    return 2.0 * eta / (lip * lip + bc2 * l_g * l_g);
}

double contraction_factor(double eps, double eta, double lipschitz) {
    const double radicand = 1.0 - 2.0 * eta * eps + eps * eps * lipschitz * lipschitz;
    if (radicand < 0.0)
        throw Error::numeric("contraction factor radicand negative (inconsistent constants)");
    return std::sqrt(radicand);
}

namespace {

// Called once per history step; the eigensolver route is both tighter and
// cheaper than iterating to high accuracy.
double spectral_norm(const Mat& a) {
    Mat ata = a.transpose() * a;
    symmetrize(ata);
    Eigen::SelfAdjointEigenSolver<Mat> eig(ata, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

}  // namespace

PsiTau psi_tau(const Mat& h, const Mat& sigma_l, const Mat& sigma_y,
               const std::vector<Mat>& p_history, const std::vector<Mat>& k_history) {
    if (p_history.empty() || k_history.empty())
        throw Error::schema("psi_tau: empty covariance or gain history");

    const CovarianceBounds bounds = covariance_bounds(p_history);
    if (!(bounds.sigma_lo > 0.0))
        throw Error::numeric("psi_tau: covariance lower bound is not positive");

    const Mat id = Mat::Identity(h.cols(), h.cols());
    double min_lambda = std::numeric_limits<double>::infinity();
    for (const Mat& p : p_history) {
        Mat innovation = h * (p + sigma_l) * h.transpose() + sigma_y;
        symmetrize(innovation);
        Eigen::LLT<Mat> llt(innovation);
        if (llt.info() != Eigen::Success)
            throw Error::numeric("psi_tau: innovation covariance not positive definite");
        Mat info = h.transpose() * llt.solve(h);
        symmetrize(info);
        Eigen::SelfAdjointEigenSolver<Mat> eig(info, Eigen::EigenvaluesOnly);
        min_lambda = std::min(min_lambda, eig.eigenvalues().minCoeff());
    }
    if (!(min_lambda > 0.0))
        throw Error::numeric("psi_tau: information matrix not positive definite "
                             "(observability failure)");

    PsiTau out;
    out.psi = 0.99 * min_lambda;
    if (out.psi * bounds.sigma_lo >= 1.0) out.psi = 0.99 / bounds.sigma_lo;

    double worst = 0.0;
    for (const Mat& k : k_history) {
        const double nk = spectral_norm(k);
        const double nikh = spectral_norm(id - k * h);
        worst = std::max(worst, std::max(nk * nk, nikh * nikh));
    }
    out.tau = worst / bounds.sigma_lo;
    return out;
}

AsymptoticBounds asymptotic_bounds(double psi, double tau, double sigma_lo, double sigma_hi,
                                   const Mat& sigma_l, const Mat& sigma_y, double eps,
                                   double r_eps, double l_g, double opnorm_bc, double l_s_opt) {
    if (!(psi > 0.0)) throw Error::numeric("asymptotic bounds require psi > 0");
    if (!(r_eps < 1.0)) throw Error::numeric("asymptotic bounds require r(eps) < 1");
    if (sigma_lo > sigma_hi) throw Error::numeric("sigma_lo exceeds sigma_hi");
    const double tr_l = sigma_l.trace();
    const double tr_y = sigma_y.trace();
    AsymptoticBounds b;
    b.c_v = tau / psi * (tr_y + tr_l);
    b.c_s = 1.0 / (1.0 - r_eps) *
            (l_s_opt * std::sqrt(tr_l) + eps * opnorm_bc * l_g * std::sqrt(b.c_v));
    return b;
}

double optimal_map_lipschitz(const std::vector<double>& eps_grid, double eta, double lipschitz) {
    double best = std::numeric_limits<double>::infinity();
    for (double eps : eps_grid) {
        if (eps <= 0.0) continue;
        const double radicand =
            1.0 - 2.0 * eta * eps + eps * eps * lipschitz * lipschitz;
        if (radicand < 0.0) continue;
        const double r = std::sqrt(radicand);
        if (r >= 1.0) continue;
        best = std::min(best, eps / (1.0 - r));
    }
    if (!std::isfinite(best))
        throw Error::numeric("optimal_map_lipschitz: no admissible step size in grid");
    return best;
}

std::vector<double> make_eps_grid(double eta, double lipschitz, int points) {
    const double hi = 2.0 * eta / (lipschitz * lipschitz);
    std::vector<double> grid;
    grid.reserve(points);
    for (int i = 1; i <= points; ++i) grid.push_back(hi * i / (points + 1.0));
    return grid;
}

CertificateReport build_certificate_report(const Mat& b_c, const ObjectiveParams& params,
                                           double eps, const Mat& sigma_l, const Mat& sigma_y,
                                           const Mat& h, const Mat& p0, long horizon) {
    params.validate();
    CertificateReport rep;
    rep.eta = params.eta;
    rep.l_f = params.l_f;
    rep.l_g = params.l_g;
    rep.eps = eps;
    rep.opnorm_bc = opnorm_power_iteration(b_c);
    rep.lipschitz = composite_lipschitz(params.l_f, params.l_g, rep.opnorm_bc);
    rep.eps_max = max_step_size(params.eta, params.l_f, params.l_g, rep.opnorm_bc);
    rep.r_eps = contraction_factor(eps, params.eta, rep.lipschitz);

    const CovarianceSchedule sched = covariance_schedule(p0, sigma_l, h, sigma_y, horizon);
    const CovarianceBounds bounds = covariance_bounds(sched.p_history);
    rep.sigma_lo = bounds.sigma_lo;
    rep.sigma_hi = bounds.sigma_hi;

    const PsiTau pt = psi_tau(h, sigma_l, sigma_y, sched.p_history, sched.k_history);
    rep.psi = pt.psi;
    rep.tau = pt.tau;

    rep.l_s_opt = optimal_map_lipschitz(make_eps_grid(params.eta, rep.lipschitz), params.eta,
                                        rep.lipschitz);

    const AsymptoticBounds ab =
        asymptotic_bounds(rep.psi, rep.tau, rep.sigma_lo, rep.sigma_hi, sigma_l, sigma_y, eps,
                          rep.r_eps, params.l_g, rep.opnorm_bc, rep.l_s_opt);
    rep.c_v = ab.c_v;
    rep.c_s = ab.c_s;
    rep.trace_sigma_l = sigma_l.trace();
    rep.trace_sigma_y = sigma_y.trace();

    rep.est_envelope = 1.0 - rep.psi * rep.sigma_lo;
    rep.opt_envelope = rep.r_eps;
    rep.mixed_envelope = std::max(rep.r_eps, std::sqrt(rep.est_envelope));
    rep.cond_ratio = rep.sigma_hi / rep.sigma_lo;

    rep.validate();
    return rep;
}

BoundCheckRecord verify_bounds(const std::vector<Trajectory>& ensemble,
                               const CertificateReport& report, double tail_fraction) {
    if (ensemble.empty()) throw Error::schema("verify_bounds: empty ensemble");
    const std::size_t steps = ensemble.front().est_err_norm.size();
    for (const Trajectory& t : ensemble)
        if (t.est_err_norm.size() != steps || t.opt_err_norm.size() != steps)
            throw Error::schema("verify_bounds: ensemble members have mismatched horizons");

    // Ensemble means: E|e_t|^2 and E|S_c - S_c*| per step.
    std::vector<double> msq_est(steps, 0.0), mean_opt(steps, 0.0);
    for (const Trajectory& t : ensemble) {
        for (std::size_t i = 0; i < steps; ++i) {
            msq_est[i] += t.est_err_norm[i] * t.est_err_norm[i];
            mean_opt[i] += t.opt_err_norm[i];
        }
    }
    for (std::size_t i = 0; i < steps; ++i) {
        msq_est[i] /= ensemble.size();
        mean_opt[i] /= ensemble.size();
    }

    const std::size_t tail_start =
        steps - std::max<std::size_t>(1, static_cast<std::size_t>(tail_fraction * steps));

    BoundCheckRecord rec;
    // (a): per-step bound C_V + (sigma_hi/sigma_lo)(1 - psi sigma_lo)^t E|e_0|^2
    //      must dominate the empirical mean square on the whole tail window.
    rec.estimation.pass = true;
    double worst_emp = 0.0;
    for (std::size_t t = tail_start; t < steps; ++t) {
        const double envelope =
            report.cond_ratio * std::pow(report.est_envelope, static_cast<double>(t)) *
            msq_est[0];
        const double bound = report.c_v + envelope;
        if (msq_est[t] > bound) rec.estimation.pass = false;
        worst_emp = std::max(worst_emp, msq_est[t]);
    }
    rec.estimation.empirical = worst_emp;
    rec.estimation.bound = report.c_v;
    rec.estimation.margin =
        worst_emp > 0.0 ? report.c_v / worst_emp : std::numeric_limits<double>::infinity();

    rec.optimization.pass = true;
    double worst_opt = 0.0;
    for (std::size_t t = tail_start; t < steps; ++t) {
        if (mean_opt[t] > report.c_s) rec.optimization.pass = false;
        worst_opt = std::max(worst_opt, mean_opt[t]);
    }
    rec.optimization.empirical = worst_opt;
    rec.optimization.bound = report.c_s;
    rec.optimization.margin =
        worst_opt > 0.0 ? report.c_s / worst_opt : std::numeric_limits<double>::infinity();

    return rec;
}

}  // namespace gridloop
