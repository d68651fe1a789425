#include "gridloop/controller.hpp"

#include <cmath>

#include "gridloop/error.hpp"

namespace gridloop {

void FeasibleSet::validate() const {
    if (lower.size() != upper.size())
        throw Error::schema("feasible set bound vectors differ in length");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (lower[i] > upper[i])
            throw Error::schema("feasible set has lower > upper at index " + std::to_string(i));
}

bool FeasibleSet::contains(const Vec& x, double slack) const {
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
    return true;
}

void ObjectiveParams::validate() const {
    if (rho <= 0.0) throw Error::schema("objective: rho must be > 0");
    if (!(v_min < v_max)) throw Error::schema("objective: v_min must be < v_max");
    if (eta <= 0.0) throw Error::schema("objective: eta must be > 0");
    if (l_f < eta) throw Error::schema("objective: L_f must be >= eta");
    if (l_g != rho) throw Error::schema("objective: L_g must equal rho for the quadratic penalty");
}

double objective_f(const Vec& s_c, const ObjectiveParams& params) {
    const Eigen::Index nc = params.p_target.size();
    if (s_c.size() != 2 * nc) throw Error::schema("control vector has wrong dimension");
    const Vec dp = s_c.head(nc) - params.p_target;
    const Vec q = s_c.tail(nc);
    return 0.5 * dp.squaredNorm() + 0.5 * q.squaredNorm();
}

Vec grad_f(const Vec& s_c, const ObjectiveParams& params) {
    const Eigen::Index nc = params.p_target.size();
    if (s_c.size() != 2 * nc) throw Error::schema("control vector has wrong dimension");
    Vec g(2 * nc);
    g.head(nc) = s_c.head(nc) - params.p_target;
    g.tail(nc) = s_c.tail(nc);
    return g;
}

double penalty_g(const Vec& v, const ObjectiveParams& params) {
    const Eigen::Index n = v.size() / 2;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double over = std::max(0.0, v[i] - params.v_max);
        const double under = std::max(0.0, params.v_min - v[i]);
        acc += over * over + under * under;
    }
    return 0.5 * params.rho * acc;
}

Vec grad_g(const Vec& v, const ObjectiveParams& params) {
    const Eigen::Index n = v.size() / 2;
    Vec g = Vec::Zero(v.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        g[i] = params.rho * (std::max(0.0, v[i] - params.v_max) -
                             std::max(0.0, params.v_min - v[i]));
    }
    return g;
}

Vec project_box(const Vec& x, const FeasibleSet& feasible) {
    if (x.size() != feasible.lower.size())
        throw Error::schema("projection input has wrong dimension");
    return x.cwiseMax(feasible.lower).cwiseMin(feasible.upper);
}

Vec control_step(const Vec& s_c, const Vec& v_hat, double eps, const ObjectiveParams& params,
                 const FeasibleSet& feasible, const Mat& b_c) {
    if (eps <= 0.0) throw Error::schema("descent rate eps must be > 0");
    const Vec descent = grad_f(s_c, params) + b_c.transpose() * grad_g(v_hat, params);
    return project_box(s_c - eps * descent, feasible);
}

Vec gradient_mapping(const Vec& v_hat, const Vec& s_c, double eps, const ObjectiveParams& params,
                     const FeasibleSet& feasible, const Mat& b_c) {
    return (s_c - control_step(s_c, v_hat, eps, params, feasible, b_c)) / eps;
}

}  // namespace gridloop
