#include <doctest.h>

#include <cmath>

#include "gridloop/error.hpp"
#include "gridloop/grid_model.hpp"
#include "gridloop/rng.hpp"
#include "oracles.hpp"

using namespace gridloop;
using oracles::chain_grid;

namespace {

CMat block1(Complex y) {
    CMat m(1, 1);
    m(0, 0) = y;
    return m;
}

}  // namespace

TEST_CASE("two-node network assembles the 2x2 Laplacian") {
    const Complex y(4.0, -8.0);
    GridModel g = chain_grid(1, y);
    CHECK(g.n_state == 1);
    CHECK(g.y00(0, 0) == y);
    CHECK(g.y01(0, 0) == -y);
    CHECK(g.y11(0, 0) == y);
}

TEST_CASE("3-bus chain Y11 matches hand-assembled Laplacian") {
    const Complex ya(10.0, -20.0), yb(5.0, -8.0);
    std::vector<Bus> buses = {{0, 1, BusRole::Slack}, {1, 1, BusRole::Load}, {2, 1, BusRole::Load}};
    std::vector<Branch> branches = {{0, 1, block1(ya)}, {1, 2, block1(yb)}};
    CVec u_pcc(1);
    u_pcc[0] = 1.0;
    GridModel g = build_admittance(buses, branches, u_pcc);

    CMat expected(2, 2);  // [[ya+yb, -yb], [-yb, yb]]
    expected << ya + yb, -yb, -yb, yb;
    CHECK((g.y11 - expected).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.y01(0, 0) == -ya);
    CHECK(g.y01(0, 1) == Complex(0, 0));
}

TEST_CASE("full matrix is (N+3)x(N+3) with a 3-phase slack") {
    CMat w = CMat::Zero(3, 3);
    w(0, 0) = Complex(30, -60);
    w(1, 1) = Complex(30, -60);
    w(2, 2) = Complex(30, -60);
    w(0, 1) = w(1, 0) = Complex(-5, 10);
    std::vector<Bus> buses = {{0, 3, BusRole::Slack}, {1, 3, BusRole::Load},
                              {2, 3, BusRole::Controllable}};
    std::vector<Branch> branches = {{0, 1, w}, {1, 2, w}};
    CVec u_pcc(3);
    const double deg120 = 2.0 * M_PI / 3.0;
    u_pcc << Complex(1, 0), std::polar(1.0, -deg120), std::polar(1.0, deg120);
    GridModel g = build_admittance(buses, branches, u_pcc);
    CHECK(g.n_state == 6);  // N
    CHECK(g.y00.rows() == 3);
    CHECK(g.y01.cols() == 6);
    CHECK(g.y11.rows() == 6);
    // (N+3)x(N+3) in total
    CHECK(g.y00.rows() + g.y11.rows() == g.n_state + 3);

    // Laplacian row sums vanish without shunts, over the full matrix.
    for (int r = 0; r < 3; ++r) {
        Complex acc = g.y00.row(r).sum() + g.y01.row(r).sum();
        CHECK(std::abs(acc) < 1e-12);
    }
    for (int r = 0; r < 6; ++r) {
        Complex acc = g.y01.transpose().row(r).sum() + g.y11.row(r).sum();
        CHECK(std::abs(acc) < 1e-12);
    }
}

TEST_CASE("rejects malformed networks") {
    CVec u_pcc(1);
    u_pcc[0] = 1.0;
    std::vector<Bus> buses = {{0, 1, BusRole::Slack}, {1, 1, BusRole::Load}};

    SUBCASE("duplicate ordered branch") {
        std::vector<Branch> branches = {{0, 1, block1({1, -2})}, {0, 1, block1({3, -4})}};
        CHECK_THROWS_WITH_AS(build_admittance(buses, branches, u_pcc),
                             doctest::Contains("duplicate branch"), Error);
    }
    SUBCASE("self loop") {
        std::vector<Branch> branches = {{1, 1, block1({1, -2})}};
        CHECK_THROWS_AS(build_admittance(buses, branches, u_pcc), Error);
    }
    SUBCASE("singular Y11 carries a condition diagnostic") {
        // Bus 1 connected only through a zero branch: Y11 = 0.
        std::vector<Branch> branches = {{0, 1, block1({0, 0})}};
        CHECK_THROWS_WITH_AS(build_admittance(buses, branches, u_pcc),
                             doctest::Contains("condition"), Error);
    }
    SUBCASE("no slack") {
        std::vector<Bus> no_slack = {{0, 1, BusRole::Load}, {1, 1, BusRole::Load}};
        std::vector<Branch> branches = {{0, 1, block1({1, -2})}};
        CHECK_THROWS_AS(build_admittance(no_slack, branches, u_pcc), Error);
    }
    SUBCASE("phase mismatch between endpoints") {
        std::vector<Bus> mixed = {{0, 1, BusRole::Slack}, {1, 3, BusRole::Load}};
        CMat w(1, 3);
        w.setConstant(Complex(1, -1));
        std::vector<Branch> branches = {{0, 1, w}};
        CHECK_THROWS_AS(build_admittance(mixed, branches, u_pcc), Error);
    }
}

TEST_CASE("no-load voltage") {
    SUBCASE("pure series chain carries no current: U0 = U_pcc per bus") {
        GridModel g = chain_grid(4, Complex(50, -100));
        CVec u0 = no_load_voltage(g);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(u0[i] - Complex(1, 0)) < 1e-14);
    }
    SUBCASE("shunt at bus 1 shifts the open-circuit voltage (1x1 solve)") {
        const Complex y(10, -20), ysh(0.0, 0.5);
        std::vector<Bus> buses = {{0, 1, BusRole::Slack}, {1, 1, BusRole::Load}};
        std::vector<Branch> branches = {{0, 1, block1(y)}};
        std::vector<Shunt> shunts = {{1, block1(ysh)}};
        CVec u_pcc(1);
        u_pcc[0] = Complex(1.0, 0.0);
        GridModel g = build_admittance(buses, branches, u_pcc, shunts);
        // Direct solve: (y + ysh) u = y * 1.
        const Complex expected = y / (y + ysh);
        CVec u0 = no_load_voltage(g);
        CHECK(std::abs(u0[0] - expected) < 1e-14);
    }
    SUBCASE("zero injections at U0 solve the power flow to 1e-12") {
        GridModel g = chain_grid(5, Complex(40, -90), {3});
        CVec u0 = no_load_voltage(g);
        PlantSolver plant(g);
        CHECK(plant.residual(u0, Vec::Zero(5), Vec::Zero(5)) < 1e-12);
        // The non-slack currents themselves vanish.
        const CVec currents = g.y01.transpose() * g.u_pcc + g.y11 * u0;
        CHECK(currents.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("linearization") {
    GridModel g = chain_grid(6, Complex(50, -100), {2, 5});
    CVec u0 = no_load_voltage(g);
    LinearPowerFlowModel lin = linearize(g, u0);
    const int n = 6;

    SUBCASE("zero injection evaluates to V0") {
        Vec v = lin.evaluate(Vec::Zero(2 * g.num_controllable()), Vec::Zero(2 * g.num_load()));
        CHECK((v - lin.v0).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("columns match finite differences of the nonlinear plant") {
        PlantSolver plant(g);
        const double delta = 1e-4;
        PfOptions opts;
        opts.tol = 1e-12;
        for (int j = 0; j < 2 * n; ++j) {
            Vec pq = Vec::Zero(2 * n);
            pq[j] = delta;
            const Vec fd =
                (polar_state(plant.solve(pq.head(n), pq.tail(n), opts)) - lin.v0) / delta;
            const Vec col = lin.b.col(j);
            CHECK((fd - col).norm() < 1e-2 * col.norm());
        }
    }

    SUBCASE("top-left block is cos(angle) Re Z_V + sin(angle) Im Z_V") {
        Mat expected(n, n);
        for (int i = 0; i < n; ++i) {
            const double a = std::arg(u0[i]);
            expected.row(i) =
                std::cos(a) * lin.z_v.real().row(i) + std::sin(a) * lin.z_v.imag().row(i);
        }
        CHECK((lin.b.topLeftCorner(n, n) - expected).cwiseAbs().maxCoeff() < 1e-15);
    }

    SUBCASE("selector identities hold exactly") {
        const Mat bc = lin.b * g.selector_controllable();
        const Mat bl = lin.b * g.selector_load();
        CHECK((bc - lin.b_c).cwiseAbs().maxCoeff() == 0.0);
        CHECK((bl - lin.b_l).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("zero magnitude operating point is rejected") {
        CVec bad = u0;
        bad[0] = Complex(0, 0);
        CHECK_THROWS_AS(linearize(g, bad), Error);
    }
}

TEST_CASE("linearization remainder is second order in the injection") {
    GridModel g = chain_grid(6, Complex(50, -100), {2, 5});
    CVec u0 = no_load_voltage(g);
    LinearPowerFlowModel lin = linearize(g, u0);
    PlantSolver plant(g);
    RngStream rng(99);
    // Frozen from a sweep of this feeder; ample slack over the worst
    // observed ratio while still forcing O(|S|^2) scaling.
    const double c_bound = 5.0;
    for (int trial = 0; trial < 40; ++trial) {
        Vec pq(12);
        for (int i = 0; i < 12; ++i) pq[i] = 0.02 * rng.gaussian();
        if (pq.norm() > 0.05) pq *= 0.05 / pq.norm();
        const Vec v_pred = lin.v0 + lin.b * pq;
        const Vec v_true = polar_state(plant.solve(pq.head(6), pq.tail(6)));
        const double remainder = (v_true - v_pred).cwiseAbs().maxCoeff();
        CHECK(remainder <= c_bound * pq.squaredNorm());
    }
}

TEST_CASE("nonlinear power flow") {
    SUBCASE("zero injection returns the no-load point") {
        GridModel g = chain_grid(4, Complex(30, -60));
        CVec u = nonlinear_pf_solve(g, Vec::Zero(4), Vec::Zero(4));
        CVec u0 = no_load_voltage(g);
        CHECK((u - u0).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("two-bus load matches the closed-form quadratic root") {
        const Complex y(8.0, -14.0);
        GridModel g = chain_grid(1, y);
        const Complex s(-0.12, -0.06);  // load, generation-positive convention
        Vec p(1), q(1);
        p[0] = s.real();
        q[0] = s.imag();
        PfOptions opts;
        opts.tol = 1e-12;
        CVec u = nonlinear_pf_solve(g, p, q, opts);
        const Complex expected = oracles::two_bus_voltage(s, y);
        CHECK(std::abs(u[0] - expected) < 1e-11);
    }
    SUBCASE("returned point satisfies the residual bound") {
        GridModel g = chain_grid(5, Complex(50, -100), {4});
        Vec p(5), q(5);
        p << -0.02, -0.01, 0.03, -0.02, 0.01;
        q << -0.01, 0.0, 0.01, -0.005, 0.0;
        PfOptions opts;
        opts.tol = 1e-11;
        CVec u = nonlinear_pf_solve(g, p, q, opts);
        CHECK(PlantSolver(g).residual(u, p, q) < opts.tol);
    }
    SUBCASE("an infeasible load reports non-convergence") {
        GridModel g = chain_grid(1, Complex(1.0, -2.0));
        Vec p(1), q(1);
        p[0] = -50.0;  // far beyond the deliverable power
        q[0] = 0.0;
        CHECK_THROWS_AS(nonlinear_pf_solve(g, p, q), Error);
    }
}

TEST_CASE("polar state") {
    CVec u(2);
    u << Complex(1, 0), Complex(0, 1);
    Vec v = polar_state(u);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == 0.0);
    CHECK(v[3] == doctest::Approx(M_PI / 2).epsilon(1e-15));

    SUBCASE("round trip recovers the phasor") {
        RngStream rng(7);
        CVec x(5);
        for (int i = 0; i < 5; ++i) x[i] = Complex(rng.gaussian(), rng.gaussian());
        Vec polar = polar_state(x);
        for (int i = 0; i < 5; ++i) {
            const Complex back = std::polar(polar[i], polar[5 + i]);
            CHECK(std::abs(back - x[i]) < 1e-14 * std::abs(x[i]) + 1e-16);
        }
    }
}

TEST_CASE("three-phase network: linearization and plant agree") {
    // Two 3-phase buses behind a 3-phase slack, with inter-phase coupling.
    CMat w = CMat::Zero(3, 3);
    for (int i = 0; i < 3; ++i) w(i, i) = Complex(40, -80);
    w(0, 1) = w(1, 0) = Complex(-4, 9);
    w(1, 2) = w(2, 1) = Complex(-3, 7);
    std::vector<Bus> buses = {{0, 3, BusRole::Slack}, {1, 3, BusRole::Load},
                              {2, 3, BusRole::Controllable}};
    std::vector<Branch> branches = {{0, 1, w}, {1, 2, w}};
    CVec u_pcc(3);
    const double deg120 = 2.0 * M_PI / 3.0;
    u_pcc << Complex(1, 0), std::polar(1.0, -deg120), std::polar(1.0, deg120);
    GridModel g = build_admittance(buses, branches, u_pcc);
    REQUIRE(g.n_state == 6);

    const CVec u0 = no_load_voltage(g);
    LinearPowerFlowModel lin = linearize(g, u0);
    CHECK(lin.b_c.cols() == 6);
    CHECK(lin.b_l.cols() == 6);

    PlantSolver plant(g);
    PfOptions opts;
    opts.tol = 1e-12;
    const double delta = 1e-4;
    for (int j = 0; j < 12; ++j) {
        Vec pq = Vec::Zero(12);
        pq[j] = delta;
        const Vec fd = (polar_state(plant.solve(pq.head(6), pq.tail(6), opts)) - lin.v0) / delta;
        const Vec col = lin.b.col(j);
        CHECK((fd - col).norm() < 1e-2 * col.norm());
    }

    // A balanced three-phase load keeps the plant solvable and the polar
    // angles near the nominal 120-degree separation.
    Vec p = Vec::Constant(6, -0.03), q = Vec::Constant(6, -0.01);
    const CVec u = plant.solve(p, q, opts);
    CHECK(plant.residual(u, p, q) < opts.tol);
    const Vec v = polar_state(u);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(v[i] - 1.0) < 0.05);
}

TEST_CASE("row sums of the full admittance vanish on random radial feeders") {
    RngStream rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform() * 6);
        std::vector<Bus> buses;
        buses.push_back({0, 1, BusRole::Slack});
        std::vector<Branch> branches;
        for (int i = 1; i <= n; ++i) {
            buses.push_back({i, 1, BusRole::Load});
            const int parent = static_cast<int>(rng.uniform() * i);  // random tree
            CMat w(1, 1);
            w(0, 0) = Complex(20 + 60 * rng.uniform(), -40 - 80 * rng.uniform());
            branches.push_back({parent, i, w});
        }
        CVec u_pcc(1);
        u_pcc[0] = 1.0;
        GridModel g = build_admittance(buses, branches, u_pcc);
        CHECK(std::abs(g.y00.row(0).sum() + g.y01.row(0).sum()) < 1e-12);
        for (int r = 0; r < n; ++r)
            CHECK(std::abs(g.y01.transpose().row(r).sum() + g.y11.row(r).sum()) < 1e-12);
    }
}
