#include "cplnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cplnet {

void ConverterParams::validate() const {
    if (!(L > 0.0)) throw SpecError("converter inductance must be > 0");
    if (!(C > 0.0)) throw SpecError("converter capacitance must be > 0");
    if (!(f_sw > 0.0)) throw SpecError("switching frequency must be > 0");
}

void SourceParams::validate() const {
    if (!(V_g > 0.0)) throw SpecError("source voltage must be > 0");
}

void CPLoad::validate() const {
    if (!(P >= 0.0)) throw SpecError("load power must be >= 0");
    if (!(V_min > 0.0)) throw SpecError("load V_min must be > 0");
    if (!(V_min <= V_nominal && V_nominal <= V_max))
        throw SpecError("load requires V_min <= V_nominal <= V_max");
}

void LineNetwork::validate() const {
    if (n < 1) throw SpecError("network needs at least one converter");
    if (!(R >= 0.0)) throw SpecError("line resistance must be >= 0");
}

void NetworkSpec::validate() const {
    source.validate();
    line.validate();
    if (static_cast<int>(converters.size()) != line.n ||
        static_cast<int>(loads.size()) != line.n)
        throw SpecError("converter/load list lengths must equal line.n");
    for (const auto& c : converters) c.validate();
    for (const auto& l : loads) l.validate();
}

NetworkSpec NetworkSpec::with_line_R(double R) const {
    NetworkSpec s = *this;
    s.line.R = R;
    return s;
}

NetworkSpec NetworkSpec::replicated(int n) const {
    if (converters.empty() || loads.empty())
        throw SpecError("replicated() needs a template converter and load");
    NetworkSpec s = *this;
    s.line.n = n;
    s.converters.assign(n, converters.front());
    s.loads.assign(n, loads.front());
    return s;
}

double cpl_current(const CPLoad& load, double v) {
    if (!(v > 0.0)) throw SpecError("cpl_current: voltage must be > 0");
    if (v < load.V_min || v > load.V_max) return 0.0;  // load shutoff
    return load.P / v;
}

Vector segment_currents(const OperatingPoint& op, CouplingConvention coupling) {
    const int n = op.size();
    Vector inj(n);
    for (int k = 0; k < n; ++k) {
        inj[k] = (coupling == CouplingConvention::PhysicalAveraged)
                     ? op.duty[k] * op.i_ind[k]
                     : op.i_ind[k];
    }
    Vector seg(n);
    double acc = 0.0;
    for (int j = n - 1; j >= 0; --j) {
        acc += inj[j];
        seg[j] = acc;
    }
    return seg;
}

namespace {

// Node voltages for given segment currents: node k sits after segment k.
Vector node_voltages(const NetworkSpec& spec, const Vector& seg) {
    const int n = spec.line.n;
    Vector v(n);
    double drop = 0.0;
    for (int k = 0; k < n; ++k) {
        drop += spec.line.R * seg[k];
        v[k] = spec.source.V_g - drop;
    }
    return v;
}

void check_feasible(const NetworkSpec& spec, const OperatingPoint& op) {
    for (int k = 0; k < op.size(); ++k) {
        if (!(op.v_node[k] > 0.0)) {
            std::ostringstream os;
            os << "operating point infeasible: node voltage " << op.v_node[k]
               << " V at converter " << k + 1;
            throw InfeasibleError(os.str(), k);
        }
        if (!(op.duty[k] > 0.0 && op.duty[k] < 1.0)) {
            std::ostringstream os;
            os << "operating point infeasible: duty " << op.duty[k]
               << " outside (0,1) at converter " << k + 1
               << " (buck cannot produce " << spec.loads[k].V_nominal << " V from "
               << op.v_node[k] << " V)";
            throw InfeasibleError(os.str(), k);
        }
    }
}

// n = 1, PhysicalAveraged: the node voltage solves v - V_g + R*P/v = 0.
// Bisection on the high-voltage root.
double bisect_single_node(const NetworkSpec& spec) {
    const double Vg = spec.source.V_g;
    const double R = spec.line.R;
    const double P = spec.loads[0].P;
    auto g = [&](double v) { return v - Vg + R * P / v; };
    double lo = spec.loads[0].V_nominal, hi = Vg;
    if (g(hi) < 0.0)  // should be ~0 only when R*P/Vg ~ 0
        return hi;
    if (g(lo) > 0.0)
        throw InfeasibleError("operating point infeasible: no node voltage above V_nominal", 0);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double operating_point_residual(const NetworkSpec& spec, const OperatingPoint& op,
                                CouplingConvention coupling) {
    const int n = spec.line.n;
    const Vector vn = node_voltages(spec, segment_currents(op, coupling));
    double r = 0.0;
    for (int k = 0; k < n; ++k) {
        r = std::max(r, std::abs(op.v_node[k] - vn[k]) / spec.source.V_g);
        r = std::max(r, std::abs(op.duty[k] * op.v_node[k] - op.v_out[k]) / op.v_out[k]);
        if (spec.loads[k].P > 0.0)
            r = std::max(r, std::abs(op.i_ind[k] * op.v_out[k] - spec.loads[k].P) /
                                spec.loads[k].P);
    }
    return r;
}

OperatingPoint solve_operating_point(const NetworkSpec& spec, CouplingConvention coupling) {
    spec.validate();
    const int n = spec.line.n;

    OperatingPoint op;
    op.v_out = Vector(n);
    op.i_ind = Vector(n);
    for (int k = 0; k < n; ++k) {
        op.v_out[k] = spec.loads[k].V_nominal;
        op.i_ind[k] = spec.loads[k].P / op.v_out[k];
    }

    if (coupling == CouplingConvention::PaperExact) {
        // Segment currents do not depend on duty: single pass.
        op.duty = Vector::Zero(n);
        op.v_node = node_voltages(spec, segment_currents(op, coupling));
        for (int k = 0; k < n; ++k) op.duty[k] = op.v_out[k] / op.v_node[k];
        check_feasible(spec, op);
        return op;
    }

    // PhysicalAveraged: duty and node voltages are mutually coupled.
    constexpr int kMaxIter = 10000;
    constexpr double kTol = 1e-9;
    op.duty = Vector(n);
    for (int k = 0; k < n; ++k) op.duty[k] = std::min(op.v_out[k] / spec.source.V_g, 0.99);
    op.v_node = Vector::Constant(n, spec.source.V_g);

    double res = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
        const Vector vn = node_voltages(spec, segment_currents(op, coupling));
        double step = 0.0;
        for (int k = 0; k < n; ++k) {
            if (!(vn[k] > 0.0))
                throw InfeasibleError("operating point infeasible: node voltage collapsed", k);
            const double d_new = op.v_out[k] / vn[k];
            step = std::max(step, std::abs(vn[k] - op.v_node[k]) / spec.source.V_g);
            step = std::max(step, std::abs(d_new - op.duty[k]));
            op.v_node[k] = 0.5 * (op.v_node[k] + vn[k]);  // damping 0.5
            op.duty[k] = 0.5 * (op.duty[k] + d_new);
        }
        if (op.duty.maxCoeff() >= 1.0)
            check_feasible(spec, op);  // throws with context
        if (step < kTol) {
            res = operating_point_residual(spec, op, coupling);
            if (res <= kTol) {
                check_feasible(spec, op);
                return op;
            }
        }
        res = step;
    }

    if (n == 1) {
        const double vn = bisect_single_node(spec);
        op.v_node[0] = vn;
        op.duty[0] = op.v_out[0] / vn;
        if (operating_point_residual(spec, op, coupling) <= kTol) {
            check_feasible(spec, op);
            return op;
        }
    }
    throw ConvergenceError("operating-point iteration did not converge", res);
}

}  // namespace cplnet
