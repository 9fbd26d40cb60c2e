#include <doctest.h>

#include <cmath>

#include "cplnet/analysis.hpp"
#include "cplnet/simulate.hpp"
#include "test_helpers.hpp"

using namespace cplnet;

namespace {

const double kT = 5e-6;  // switching period of the paper instance

SimConfig switched_cfg(double t_end, Controller ctl) {
    SimConfig cfg;
    cfg.model = SimModel::Switched;
    cfg.dt = kT / 100.0;
    cfg.t_end = t_end;
    cfg.controller = std::move(ctl);
    cfg.decimate = 1;
    return cfg;
}

SimConfig averaged_cfg(double t_end, Controller ctl, double dt = 1e-6) {
    SimConfig cfg;
    cfg.model = SimModel::Averaged;
    cfg.dt = dt;
    cfg.t_end = t_end;
    cfg.controller = std::move(ctl);
    cfg.decimate = 1;
    return cfg;
}

StateFeedbackCtl default_sf(const NetworkSpec& spec, double scale = 1.0) {
    StateFeedbackCtl ctl;
    ctl.gains = default_gains(spec, scale);
    ctl.op = solve_operating_point(spec);
    return ctl;
}

// Period-T moving average, sampled at the trailing edge.
std::vector<double> moving_average(const std::vector<double>& t, const std::vector<double>& x,
                                   double T) {
    std::vector<double> out(x.size(), std::numeric_limits<double>::quiet_NaN());
    size_t lo = 0;
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        acc += x[i];
        while (t[i] - t[lo] > T) {
            acc -= x[lo];
            ++lo;
        }
        if (t[i] >= T) out[i] = acc / static_cast<double>(i - lo + 1);
    }
    return out;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("config validation catches the obvious misuses") {
    const NetworkSpec spec = testutil::paper_single();
    SimConfig cfg = switched_cfg(1e-3, OpenLoopCtl{Vector::Constant(1, 0.4)});
    CHECK_NOTHROW(cfg.validate(spec));
    cfg.dt = kT / 10.0;  // coarser than T/50
    CHECK_THROWS_AS(cfg.validate(spec), SpecError);
    cfg = switched_cfg(1e-3, OpenLoopCtl{Vector::Constant(2, 0.4)});
    CHECK_THROWS_AS(cfg.validate(spec), SpecError);
    cfg = averaged_cfg(1e-3, OpenLoopCtl{Vector::Constant(1, 0.4)});
    cfg.initial_v = Vector::Constant(3, 48.0);
    CHECK_THROWS_AS(cfg.validate(spec), SpecError);
    cfg = averaged_cfg(1e-3, OpenLoopCtl{Vector::Constant(1, 0.4)});
    cfg.initial_design = Vector::Constant(1, 110.0);  // no design variant
    CHECK_THROWS_AS(cfg.validate(spec), SpecError);
}

TEST_CASE("metrics: constants, sinusoids, shutoffs, windows") {
    Trace tr;
    tr.columns = {"t", "V1", "I1", "Iload1"};
    tr.data.resize(4);
    const double a = 3.0;
    for (int i = 0; i <= 1000; ++i) {
        const double t = i * 1e-5;
        tr.data[0].push_back(t);
        tr.data[1].push_back(5.0);
        tr.data[2].push_back(a * std::sin(2.0 * M_PI * 1000.0 * t));
        tr.data[3].push_back(i == 500 ? 0.0 : 2.0);  // one dropout sample
    }
    const TraceMetrics m = trace_metrics(tr, 0.0, 0.01);
    CHECK(m.of("V1").pkpk == 0.0);
    CHECK(m.of("V1").mean == doctest::Approx(5.0));
    CHECK(m.of("I1").pkpk == doctest::Approx(2.0 * a).epsilon(1e-3));
    CHECK(m.shutoff_events == 1);
    CHECK_THROWS_AS(trace_metrics(tr, 0.2, 0.3), SpecError);
    CHECK_THROWS_AS(trace_metrics(tr, 0.3, 0.2), SpecError);
}

TEST_CASE("lossless open loop started at equilibrium stays in the ripple band") {
    NetworkSpec spec = testutil::paper_single();
    spec.loads[0].P = 0.0;
    const double D = 48.0 / 110.0;
    SimConfig cfg = switched_cfg(2e-3, OpenLoopCtl{Vector::Constant(1, D)});
    cfg.initial_i = Vector::Constant(1, 0.0);
    cfg.initial_v = Vector::Constant(1, D * 110.0);
    const Trace tr = simulate_switched(spec, cfg);
    const TraceMetrics m = trace_metrics(tr, 0.0, 2e-3);
    CHECK(std::abs(m.of("V1").max - D * 110.0) < 1.0);
    CHECK(std::abs(m.of("V1").min - D * 110.0) < 1.0);
    CHECK(m.of("V1").pkpk < 1.0);  // switching ripple only, no drift
}

TEST_CASE("open-loop CPL instance swings across the load's design range") {
    const NetworkSpec spec = testutil::paper_single();
    const OperatingPoint op = solve_operating_point(spec);
    const Trace tr = simulate_switched(spec, switched_cfg(8e-3, OpenLoopCtl{op.duty}));
    const TraceMetrics m = trace_metrics(tr, 6e-3, 8e-3);
    CHECK(m.of("V1").pkpk >= 20.0);
    CHECK(m.shutoff_events > 0);
}

TEST_CASE("latched state feedback holds the output to the switching ripple") {
    const NetworkSpec spec = testutil::paper_single();
    const Trace tr = simulate_switched(spec, switched_cfg(6e-3, default_sf(spec)));
    const TraceMetrics m = trace_metrics(tr, 4e-3, 6e-3);
    CHECK(m.of("V1").pkpk <= 1.0);
    CHECK(m.of("V1").mean == doctest::Approx(48.0).epsilon(0.01));
    CHECK(m.shutoff_events == 0);
}

TEST_CASE("proportional output feedback cannot quiet the CPL oscillation") {
    // trace(A + B F) = P/(C Vbar^2) for any v-only gain: no k_p is linearly
    // stabilizing, so the scan sees a large limit cycle at every gain.
    const NetworkSpec spec = testutil::paper_single();
    const OperatingPoint op = solve_operating_point(spec);
    for (double kp : {0.01, 0.1, 1.0}) {
        ProportionalCtl ctl{kp, 48.0, op.duty};
        const Trace tr = simulate_switched(spec, switched_cfg(6e-3, ctl));
        const TraceMetrics m = trace_metrics(tr, 4e-3, 6e-3);
        CHECK(m.of("V1").pkpk > 5.0);
    }
}

TEST_CASE("averaged and switched closed loops agree through a period average") {
    const NetworkSpec spec = testutil::paper_single();
    const StateFeedbackCtl ctl = default_sf(spec);
    SimConfig scfg = switched_cfg(2e-3, ctl);
    scfg.initial_v = Vector::Constant(1, 46.0);  // start off the set point
    scfg.initial_i = Vector::Constant(1, 1000.0 / 48.0);
    SimConfig acfg = averaged_cfg(2e-3, ctl, 1e-7);
    acfg.initial_v = scfg.initial_v;
    acfg.initial_i = scfg.initial_i;

    const Trace sw = simulate_switched(spec, scfg);
    const Trace av = simulate_averaged(spec, acfg);
    const auto ma = moving_average(sw["t"], sw["V1"], kT);

    // steady state well past 10 closed-loop time constants (~0.5 ms)
    const auto& ts = sw["t"];
    const auto& va = av["V1"];
    double worst = 0.0;
    for (size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < 1e-3 || std::isnan(ma[i])) continue;
        // same dt and decimation: sample indices align
        worst = std::max(worst, std::abs(ma[i] - va[i]));
    }
    CHECK(worst <= 0.02 * 48.0);
}

TEST_CASE("averaged trajectory follows the matrix exponential in the linear regime") {
    const double R = 0.3;
    const NetworkSpec spec = testutil::paper_network(2, R);
    const OperatingPoint op = solve_operating_point(spec);
    StateFeedbackCtl ctl;
    ctl.gains = default_gains(spec);
    ctl.op = op;

    // 0.1% output-voltage perturbation on converter 1
    const double dv = 48.0 * 1e-3;
    SimConfig cfg = averaged_cfg(2.5e-4, ctl, 1e-7);
    cfg.initial_i = op.i_ind;
    cfg.initial_v = op.v_out;
    (*cfg.initial_v)[0] += dv;
    const Trace tr = simulate_averaged(spec, cfg);

    // Exact Jacobian of the closed nonlinear averaged model: the
    // PhysicalAveraged build with its duty-coupled B.
    const StateSpace ss =
        build_network(spec, op, CouplingConvention::PhysicalAveraged);
    const Matrix F = assemble_for_labels(ctl.gains, ss.state_labels);
    const Matrix Acl = ss.A + ss.B * F;

    Vector x0 = Vector::Zero(4);
    x0[1] = dv;
    const auto& ts = tr["t"];
    double worst = 0.0;
    for (size_t i = 0; i < ts.size(); i += 25) {
        const Vector x = (testutil::expm(Acl * ts[i]) * x0).eval();
        const double e = std::hypot(
            std::hypot(tr["I1"][i] - op.i_ind[0] - x[0], tr["V1"][i] - op.v_out[0] - x[1]),
            std::hypot(tr["I2"][i] - op.i_ind[1] - x[2], tr["V2"][i] - op.v_out[1] - x[3]));
        worst = std::max(worst, e);
    }
    CHECK(worst <= 0.01 * x0.norm());
}

TEST_CASE("step halving shows fourth-order convergence on a smooth run") {
    const NetworkSpec spec = testutil::paper_single();
    const StateFeedbackCtl ctl = default_sf(spec);
    auto final_state = [&](double dt) {
        SimConfig cfg = averaged_cfg(4e-4, ctl, dt);
        cfg.initial_v = Vector::Constant(1, 47.0);
        cfg.initial_i = Vector::Constant(1, 1000.0 / 48.0);
        const Trace tr = simulate_averaged(spec, cfg);
        const int last = tr.rows() - 1;
        return std::pair{tr["I1"][last], tr["V1"][last]};
    };
    const auto [i1, v1] = final_state(2e-6);
    const auto [i2, v2] = final_state(1e-6);
    const auto [i3, v3] = final_state(5e-7);
    const double d1 = std::hypot(i1 - i2, v1 - v2);
    const double d2 = std::hypot(i2 - i3, v2 - v3);
    const double order = std::log2(d1 / d2);
    CHECK(order >= 3.5);
}

TEST_CASE("averaged lossless LC conserves its energy for a thousand cycles") {
    NetworkSpec spec = testutil::paper_single();
    spec.loads[0].P = 0.0;
    const double D = 48.0 / 110.0, L = 20e-6, C = 29e-6;
    const double v_eq = D * 110.0;
    SimConfig cfg = averaged_cfg(0.152, OpenLoopCtl{Vector::Constant(1, D)});
    cfg.initial_i = Vector::Constant(1, 0.0);
    cfg.initial_v = Vector::Constant(1, v_eq + 5.0);
    cfg.decimate = 1000;
    const Trace tr = simulate_averaged(spec, cfg);
    auto energy = [&](int row) {
        const double i = tr["I1"][row], v = tr["V1"][row];
        return 0.5 * L * i * i + 0.5 * C * (v - v_eq) * (v - v_eq);
    };
    const double e0 = energy(0);
    const double e1 = energy(tr.rows() - 1);
    CHECK(std::abs(e1 - e0) <= 1e-3 * e0);
}

TEST_CASE("a network past its threshold diverges from the nominal set point") {
    // No steady state exists at this line resistance; the trajectory leaves
    // the neighborhood of the nominal operating point and keeps swinging.
    const NetworkSpec nominal = testutil::paper_network(2, 0.0);
    StateFeedbackCtl ctl;
    ctl.gains = default_gains(nominal);
    ctl.op = solve_operating_point(nominal);

    const NetworkSpec spec = testutil::paper_network(2, 1.3);
    SimConfig cfg = averaged_cfg(4e-3, ctl, 1e-6);
    const Trace tr = simulate_averaged(spec, cfg);
    const TraceMetrics early = trace_metrics(tr, 0.0, 4e-4);
    const TraceMetrics late = trace_metrics(tr, 3.6e-3, 4e-3);
    const double dev_early =
        std::max(std::abs(early.of("V1").max - 48.0), std::abs(early.of("V1").min - 48.0));
    const double dev_late =
        std::max(std::abs(late.of("V1").max - 48.0), std::abs(late.of("V1").min - 48.0));
    CHECK(dev_late > 5.0 * std::max(dev_early, 0.01));
}

TEST_CASE("input-capacitor network integrates its node states") {
    const NetworkSpec spec = testutil::paper_network(2, 0.5);
    StateFeedbackCtl ctl;
    ctl.gains = default_gains(spec);
    ctl.op = solve_operating_point(spec);
    SimConfig cfg = averaged_cfg(1e-3, ctl, 1e-6);
    cfg.design = InputShuntC{100e-6};
    const Trace tr = simulate_averaged(spec, cfg);
    CHECK(tr.col("Vnode1") >= 0);
    CHECK(tr["Vnode1"][0] == doctest::Approx(ctl.op.v_node[0]));
    // settles near the operating point
    const TraceMetrics m = trace_metrics(tr, 8e-4, 1e-3);
    CHECK(m.of("V1").mean == doctest::Approx(48.0).epsilon(0.01));
    CHECK(m.of("V1").pkpk < 0.5);

    SimConfig bad = cfg;
    bad.design = InputShuntC{100e-6};
    CHECK_THROWS_AS(simulate_averaged(testutil::paper_network(2, 0.0), bad), SpecError);
}

TEST_CASE("RC filter adds trace columns and relaxes to the node voltage") {
    const NetworkSpec spec = testutil::paper_network(2, 0.5);
    StateFeedbackCtl ctl;
    ctl.gains = default_gains(spec);
    ctl.op = solve_operating_point(spec);
    SimConfig cfg = averaged_cfg(2e-3, ctl, 1e-6);
    cfg.design = InputGroundRC{1.0, 10e-6};
    cfg.initial_design = Vector::Constant(2, 100.0);  // start the filters off-node
    const Trace tr = simulate_averaged(spec, cfg);
    REQUIRE(tr.col("Vf1") >= 0);
    const int last = tr.rows() - 1;
    CHECK(tr["Vf1"][last] == doctest::Approx(tr["Vnode1"][last]).epsilon(1e-3));
    CHECK(tr["Vf2"][last] == doctest::Approx(tr["Vnode2"][last]).epsilon(1e-3));
}

TEST_CASE("runaway integration is cut off with the trace preserved") {
    const NetworkSpec spec = testutil::paper_single();
    // absurd step size makes RK4 numerically unstable immediately
    SimConfig cfg = averaged_cfg(10.0, OpenLoopCtl{Vector::Constant(1, 0.43)}, 0.5);
    try {
        simulate_averaged(spec, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.trace.rows() >= 1);
        CHECK(e.trace.columns.front() == "t");
    }
}

TEST_CASE("switched trace carries switch positions, averaged does not") {
    const NetworkSpec spec = testutil::paper_single();
    const OperatingPoint op = solve_operating_point(spec);
    SimConfig s = switched_cfg(2e-4, OpenLoopCtl{op.duty});
    s.decimate = 10;
    const Trace sw = simulate_switched(spec, s);
    CHECK(sw.col("S1") >= 0);
    const auto& pos = sw["S1"];
    CHECK(*std::min_element(pos.begin(), pos.end()) == 1.0);
    CHECK(*std::max_element(pos.begin(), pos.end()) == 2.0);

    const Trace av = simulate_averaged(spec, averaged_cfg(1e-4, OpenLoopCtl{op.duty}));
    CHECK(av.col("S1") < 0);
    CHECK(av.col("D1") >= 0);
}

}  // TEST_SUITE
