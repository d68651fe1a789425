#include "gridloop/grid_model.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

std::string pair_str(int a, int b) {
    return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

}  // namespace

Mat GridModel::selector_controllable() const {
    const int n = n_state;
    const int nc = num_controllable();
    Mat sel = Mat::Zero(2 * n, 2 * nc);
    for (int j = 0; j < nc; ++j) {
        sel(controllable_states[j], j) = 1.0;           // P block
        sel(n + controllable_states[j], nc + j) = 1.0;  // Q block
    }
    return sel;
}

Mat GridModel::selector_load() const {
    const int n = n_state;
    const int nl = num_load();
    Mat sel = Mat::Zero(2 * n, 2 * nl);
    for (int j = 0; j < nl; ++j) {
        sel(load_states[j], j) = 1.0;
        sel(n + load_states[j], nl + j) = 1.0;
    }
    return sel;
}

Vec GridModel::stack_injections(const Vec& s_c, const Vec& s_l) const {
    const int n = n_state;
    const int nc = num_controllable();
    const int nl = num_load();
    if (s_c.size() != 2 * nc || s_l.size() != 2 * nl)
        throw Error::schema("injection vectors do not match partition sizes");
    Vec pq = Vec::Zero(2 * n);
    for (int j = 0; j < nc; ++j) {
        pq[controllable_states[j]] += s_c[j];
        pq[n + controllable_states[j]] += s_c[nc + j];
    }
    for (int j = 0; j < nl; ++j) {
        pq[load_states[j]] += s_l[j];
        pq[n + load_states[j]] += s_l[nl + j];
    }
    return pq;
}

GridModel build_admittance(std::vector<Bus> buses, std::vector<Branch> branches,
                           const CVec& u_pcc, std::vector<Shunt> shunts) {
    GridModel g;
    g.buses = std::move(buses);
    g.branches = std::move(branches);
    g.shunts = std::move(shunts);

    const int nbus = static_cast<int>(g.buses.size());
    if (nbus == 0) throw Error::schema("grid has no buses");

    int slack = -1;
    for (int i = 0; i < nbus; ++i) {
        const Bus& b = g.buses[i];
        if (b.phases < 1 || b.phases > 3)
            throw Error::schema("bus " + std::to_string(b.id) + " has invalid phase count " +
                                std::to_string(b.phases));
        if (b.role == BusRole::Slack) {
            if (slack >= 0) throw Error::schema("more than one slack bus");
            slack = i;
        }
    }
    if (slack < 0) throw Error::schema("grid has no slack bus");
    g.slack_bus = slack;

    if (u_pcc.size() != g.buses[slack].phases)
        throw Error::schema("slack voltage has " + std::to_string(u_pcc.size()) +
                            " entries, slack bus has " + std::to_string(g.buses[slack].phases) +
                            " phases");
    g.u_pcc = u_pcc;

    // Position of each bus in the full (slack-first) matrix and in the state.
    std::vector<int> bus_index(nbus, -1);  // id -> position in `buses`
    for (int i = 0; i < nbus; ++i) {
        const int id = g.buses[i].id;
        if (id < 0 || id >= nbus || bus_index[id] >= 0)
            throw Error::schema("bus ids must be a permutation of 0..N_bus-1 (bad id " +
                                std::to_string(id) + ")");
        bus_index[id] = i;
    }

    const int n_slack = g.buses[slack].phases;
    g.state_offset.assign(nbus, -1);
    int offset = 0;
    for (int i = 0; i < nbus; ++i) {
        if (i == slack) continue;
        g.state_offset[i] = offset;
        offset += g.buses[i].phases;
    }
    g.n_state = offset;

    // Full-matrix row offset: slack phases first, then the state ordering.
    auto full_offset = [&](int i) {
        return i == slack ? 0 : n_slack + g.state_offset[i];
    };

    const int dim = n_slack + g.n_state;
    CMat y = CMat::Zero(dim, dim);

    std::set<std::pair<int, int>> seen;
    for (const Branch& br : g.branches) {
        if (br.from < 0 || br.from >= nbus || br.to < 0 || br.to >= nbus)
            throw Error::schema("branch " + pair_str(br.from, br.to) +
                                " references a nonexistent bus");
        if (br.from == br.to)
            throw Error::schema("branch " + pair_str(br.from, br.to) +
                                " is a self-loop; use a shunt instead");
        if (!seen.insert({br.from, br.to}).second)
            throw Error::schema("duplicate branch between ordered bus pair " +
                                pair_str(br.from, br.to));
        const Bus& bf = g.buses[bus_index[br.from]];
        const Bus& bt = g.buses[bus_index[br.to]];
        if (br.admittance.rows() != bf.phases || br.admittance.cols() != bt.phases)
            throw Error::schema("branch " + pair_str(br.from, br.to) + " admittance block is " +
                                std::to_string(br.admittance.rows()) + "x" +
                                std::to_string(br.admittance.cols()) + ", expected " +
                                std::to_string(bf.phases) + "x" + std::to_string(bt.phases));
        if (bf.phases != bt.phases)
            throw Error::schema("branch " + pair_str(br.from, br.to) +
                                " endpoints have mismatched phase counts");

        const int fi = full_offset(bus_index[br.from]);
        const int ti = full_offset(bus_index[br.to]);
        const int nf = bf.phases;
        const int nt = bt.phases;
        const CMat& w = br.admittance;
        y.block(fi, fi, nf, nf) += w;
        y.block(ti, ti, nt, nt) += w.transpose();
        y.block(fi, ti, nf, nt) -= w;
        y.block(ti, fi, nt, nf) -= w.transpose();
    }

    for (const Shunt& sh : g.shunts) {
        if (sh.bus < 0 || sh.bus >= nbus)
            throw Error::schema("shunt references nonexistent bus " + std::to_string(sh.bus));
        const Bus& b = g.buses[bus_index[sh.bus]];
        if (sh.admittance.rows() != b.phases || sh.admittance.cols() != b.phases)
            throw Error::schema("shunt at bus " + std::to_string(sh.bus) +
                                " has wrong block size");
        const int fi = full_offset(bus_index[sh.bus]);
        y.block(fi, fi, b.phases, b.phases) += sh.admittance;
    }

    g.y00 = y.topLeftCorner(n_slack, n_slack);
    g.y01 = y.topRightCorner(n_slack, g.n_state);
    g.y11 = y.bottomRightCorner(g.n_state, g.n_state);

    // Partition maps, in bus order.
    for (int i = 0; i < nbus; ++i) {
        if (i == slack) continue;
        for (int ph = 0; ph < g.buses[i].phases; ++ph) {
            const int idx = g.state_offset[i] + ph;
            if (g.buses[i].role == BusRole::Controllable)
                g.controllable_states.push_back(idx);
            else
                g.load_states.push_back(idx);
        }
    }

    if (g.n_state > 0) {
        Eigen::JacobiSVD<CMat> svd(g.y11);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(svd.singularValues().size() - 1);
        if (smin <= 0.0 || smax / smin > 1e12) {
            std::ostringstream os;
            os << "Y11 is numerically singular (condition number ";
            if (smin <= 0.0)
                os << "inf";
            else
                os << smax / smin;
            os << ")";
            throw Error::physics(os.str());
        }
    }

    return g;
}

CVec no_load_voltage(const GridModel& grid) {
    if (grid.n_state == 0) return CVec();
    Eigen::PartialPivLU<CMat> lu(grid.y11);
    CVec rhs = -(grid.y01.transpose() * grid.u_pcc);
    CVec u0 = lu.solve(rhs);
    if (!u0.allFinite()) throw Error::physics("no-load solve produced non-finite voltages");
    return u0;
}

LinearPowerFlowModel linearize(const GridModel& grid, const CVec& u0) {
    const int n = grid.n_state;
    if (u0.size() != n) throw Error::schema("operating point has wrong dimension");
    for (int i = 0; i < n; ++i)
        if (std::abs(u0[i]) == 0.0)
            throw Error::physics("operating point has zero magnitude at state index " +
                                 std::to_string(i));

    LinearPowerFlowModel lin;
    lin.n_state = n;

    Eigen::PartialPivLU<CMat> lu(grid.y11);
    CMat dconj_inv = CMat::Zero(n, n);
    for (int i = 0; i < n; ++i) dconj_inv(i, i) = 1.0 / std::conj(u0[i]);
    lin.z_v = lu.solve(dconj_inv);

    const Mat re = lin.z_v.real();
    const Mat im = lin.z_v.imag();

    Mat rect(2 * n, 2 * n);  // [Re Z, Im Z; Im Z, -Re Z], maps [P;Q] -> [Re dU; Im dU]
    rect.topLeftCorner(n, n) = re;
    rect.topRightCorner(n, n) = im;
    rect.bottomLeftCorner(n, n) = im;
    rect.bottomRightCorner(n, n) = -re;

    Vec mag(n), ang(n);
    for (int i = 0; i < n; ++i) {
        mag[i] = std::abs(u0[i]);
        ang[i] = std::arg(u0[i]);
    }

    // Polar rotation: d|U| and d angle(U) from the rectangular perturbation.
    Mat rot = Mat::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        const double c = std::cos(ang[i]);
        const double s = std::sin(ang[i]);
        rot(i, i) = c;
        rot(i, n + i) = s;
        rot(n + i, i) = -s / mag[i];
        rot(n + i, n + i) = c / mag[i];
    }

    lin.b = rot * rect;
    lin.b_c = lin.b * grid.selector_controllable();
    lin.b_l = lin.b * grid.selector_load();

    lin.v0.resize(2 * n);
    lin.v0.head(n) = mag;
    lin.v0.tail(n) = ang;

    if (!lin.b.allFinite()) throw Error::numeric("linearization produced non-finite entries");
    return lin;
}

PlantSolver::PlantSolver(const GridModel& grid)
    : grid_(&grid), y11_lu_(grid.y11), y01t_upcc_(grid.y01.transpose() * grid.u_pcc) {
    u0_ = y11_lu_.solve(CVec(-y01t_upcc_));
    if (!u0_.allFinite()) throw Error::physics("no-load solve produced non-finite voltages");
}

double PlantSolver::residual(const CVec& u, const Vec& p, const Vec& q) const {
    CVec i_inj = y01t_upcc_ + grid_->y11 * u;
    CVec s = u.array() * i_inj.conjugate().array();
    CVec target = p.cast<Complex>() + Complex(0, 1) * q.cast<Complex>();
    return (s - target).cwiseAbs().maxCoeff();
}

CVec PlantSolver::solve(const Vec& p, const Vec& q, const PfOptions& opts) const {
    if (opts.tol <= 0.0) throw Error::schema("power flow tolerance must be > 0");
    const int n = grid_->n_state;
    if (p.size() != n || q.size() != n)
        throw Error::schema("injection vectors have wrong dimension");

    CVec s_conj = p.cast<Complex>() - Complex(0, 1) * q.cast<Complex>();  // P - jQ
    CVec u = u0_;
    double res = residual(u, p, q);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (res < opts.tol) return u;
        CVec rhs(n);
        for (int i = 0; i < n; ++i) {
            const Complex uc = std::conj(u[i]);
            if (std::abs(uc) < 1e-8)
                throw Error::numeric("power flow iterate collapsed to zero voltage at index " +
                                     std::to_string(i));
            rhs[i] = s_conj[i] / uc;
        }
        u = y11_lu_.solve(CVec(rhs - y01t_upcc_));
        res = residual(u, p, q);
    }
    if (res < opts.tol) return u;
    std::ostringstream os;
    os << "power flow did not converge in " << opts.max_iter << " iterations (residual " << res
       << ", tol " << opts.tol << ")";
    throw Error::numeric(os.str());
}

CVec nonlinear_pf_solve(const GridModel& grid, const Vec& p, const Vec& q,
                        const PfOptions& opts) {
    return PlantSolver(grid).solve(p, q, opts);
}

Vec polar_state(const CVec& u) {
    const auto n = u.size();
    Vec v(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = std::abs(u[i]);
        double a = std::arg(u[i]);  // std::arg already yields (-pi, pi]
        if (a <= -M_PI) a = M_PI;
        v[n + i] = a;
    }
    return v;
}

}  // namespace gridloop
