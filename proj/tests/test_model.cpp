#include <doctest.h>

#include <random>

#include "cplnet/model.hpp"
#include "test_helpers.hpp"

using namespace cplnet;

TEST_SUITE("model") {

TEST_CASE("cpl current follows P/v inside the design range") {
    const CPLoad load{1000.0, 20.0, 120.0, 48.0};
    CHECK(cpl_current(load, 50.0) == doctest::Approx(20.0));
    CHECK(cpl_current(CPLoad{0.0, 20.0, 120.0, 48.0}, 50.0) == 0.0);
    CHECK(cpl_current(load, 10.0) == 0.0);   // below V_min: shutoff
    CHECK(cpl_current(load, 121.0) == 0.0);  // above V_max: shutoff
    CHECK_THROWS_AS(cpl_current(load, 0.0), SpecError);
    CHECK_THROWS_AS(cpl_current(load, -5.0), SpecError);
}

TEST_CASE("spec invariants are enforced") {
    NetworkSpec s = testutil::paper_single();
    CHECK_NOTHROW(s.validate());
    s.converters[0].L = 0.0;
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = testutil::paper_single();
    s.loads[0].V_min = 60.0;  // V_min > V_nominal
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = testutil::paper_single();
    s.loads.clear();
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = testutil::paper_network(2, -0.1);
    CHECK_THROWS_AS(s.validate(), SpecError);
}

TEST_CASE("zero line drop gives the closed-form operating point") {
    const OperatingPoint op = solve_operating_point(testutil::paper_single(0.0));
    CHECK(op.duty[0] == 48.0 / 110.0);  // exact: no drop to iterate over
    CHECK(op.i_ind[0] == doctest::Approx(1000.0 / 48.0).epsilon(1e-15));
    CHECK(op.v_node[0] == 110.0);
    CHECK(op.v_out[0] == 48.0);
}

TEST_CASE("n=1 with line drop matches an independent scalar bisection") {
    const NetworkSpec spec = testutil::paper_single(0.5);
    const OperatingPoint op = solve_operating_point(spec);

    // Oracle: the node voltage solves v = V_g - R*P/v on the high branch;
    // bisection on g(v) = v - V_g + R*P/v, independent of the solver's damped
    // fixed-point path.
    auto g = [](double v) { return v - 110.0 + 0.5 * 1000.0 / v; };
    double lo = 48.0, hi = 110.0;
    REQUIRE(g(lo) < 0.0);
    REQUIRE(g(hi) > 0.0);
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? hi : lo) = mid;
    }
    const double v_node_oracle = 0.5 * (lo + hi);

    CHECK(op.v_node[0] == doctest::Approx(v_node_oracle).epsilon(1e-9));
    CHECK(op.duty[0] == doctest::Approx(48.0 / v_node_oracle).epsilon(1e-9));
    CHECK(operating_point_residual(spec, op, CouplingConvention::PhysicalAveraged) <= 1e-9);
}

TEST_CASE("buck cannot step up: infeasibility is reported with the converter") {
    NetworkSpec s = testutil::paper_single();
    s.source.V_g = 10.0;  // target 48 V from a 10 V source
    try {
        solve_operating_point(s);
        FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
        CHECK(e.converter == 0);
    }
}

TEST_CASE("paper-exact convention drops more voltage than the physical one") {
    const NetworkSpec spec = testutil::paper_network(2, 0.1);
    const OperatingPoint pe = solve_operating_point(spec, CouplingConvention::PaperExact);
    const OperatingPoint ph =
        solve_operating_point(spec, CouplingConvention::PhysicalAveraged);
    for (int k = 0; k < 2; ++k) {
        // line currents carry no duty factor under PaperExact, so they are larger
        CHECK(pe.v_node[k] < ph.v_node[k]);
        CHECK(operating_point_residual(spec, pe, CouplingConvention::PaperExact) <= 1e-9);
    }
}

TEST_CASE("power balances at every node for random feasible networks") {
    std::mt19937 rng(20260809);
    std::uniform_int_distribution<int> n_dist(1, 4);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int solved = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const int n = n_dist(rng);
        NetworkSpec s;
        s.source.V_g = 80.0 + 320.0 * u01(rng);
        s.line = {n, 0.2 * u01(rng)};
        for (int k = 0; k < n; ++k) {
            s.converters.push_back({testutil::log_uniform(rng, 1e-6, 1e-3),
                                    testutil::log_uniform(rng, 1e-6, 1e-3), 200e3});
            const double vnom = 24.0 + 36.0 * u01(rng);
            s.loads.push_back({2000.0 * u01(rng), 10.0, 2.0 * vnom, vnom});
        }
        OperatingPoint op;
        try {
            op = solve_operating_point(s);
        } catch (const InfeasibleError&) {
            continue;  // heavy load through a long line; skip
        }
        ++solved;
        const Vector seg = segment_currents(op, CouplingConvention::PhysicalAveraged);
        double downstream_loss = 0.0;
        double downstream_load = 0.0;
        for (int k = n - 1; k >= 0; --k) {
            downstream_load += s.loads[k].P;
            const double upstream_v = (k == 0) ? s.source.V_g : op.v_node[k - 1];
            const double p_in = upstream_v * seg[k];
            downstream_loss += s.line.R * seg[k] * seg[k];
            const double scale = std::max(1.0, downstream_load);
            CHECK(std::abs(p_in - (downstream_load + downstream_loss)) / scale <= 1e-7);
        }
    }
    CHECK(solved >= 80);
}

TEST_CASE("raising the line resistance never raises a node voltage") {
    const double Rs[] = {0.0, 0.05, 0.1, 0.2, 0.4};
    OperatingPoint prev;
    for (size_t i = 0; i < std::size(Rs); ++i) {
        const OperatingPoint op = solve_operating_point(testutil::paper_network(3, Rs[i]));
        if (i > 0)
            for (int k = 0; k < 3; ++k) CHECK(op.v_node[k] <= prev.v_node[k] + 1e-12);
        prev = op;
    }
}

}  // TEST_SUITE
