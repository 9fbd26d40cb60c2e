#include "cplnet/simulate.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cplnet {

void SimConfig::validate(const NetworkSpec& spec) const {
    spec.validate();
    if (!(dt > 0.0)) throw SpecError("simulation dt must be > 0");
    if (!(t_end > dt)) throw SpecError("simulation horizon must exceed dt");
    if (decimate < 1) throw SpecError("decimation factor must be >= 1");
    if (model == SimModel::Switched) {
        for (const auto& c : spec.converters)
            if (dt > c.period() / 50.0)
                throw SpecError("switched simulation needs dt <= T/50");
    }
    const int n = spec.line.n;
    if (initial_i && initial_i->size() != n) throw SpecError("initial_i size mismatch");
    if (initial_v && initial_v->size() != n) throw SpecError("initial_v size mismatch");
    const bool has_aux = !std::holds_alternative<std::monostate>(design) &&
                         !std::holds_alternative<OutputShuntR>(design);
    if (initial_design && (!has_aux || initial_design->size() != n))
        throw SpecError("initial_design does not match the design variant");
    if (const auto* sf = std::get_if<StateFeedbackCtl>(&controller)) {
        if (sf->gains.size() != n || sf->op.size() != n)
            throw SpecError("state-feedback controller size mismatch");
    }
    if (const auto* ol = std::get_if<OpenLoopCtl>(&controller)) {
        if (ol->duty.size() != n) throw SpecError("open-loop duty vector size mismatch");
    }
    if (const auto* pc = std::get_if<ProportionalCtl>(&controller)) {
        if (pc->duty0.size() != n) throw SpecError("proportional duty0 size mismatch");
    }
    if (std::holds_alternative<InputShuntC>(design) && !(spec.line.R > 0.0))
        throw SpecError("input shunt capacitor with R = 0 sits across the ideal source");
}

int Trace::col(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

const std::vector<double>& Trace::operator[](const std::string& name) const {
    const int i = col(name);
    if (i < 0) throw SpecError("trace has no column '" + name + "'");
    return data[i];
}

namespace {

// Load current inside the simulator: shutoff outside [V_min, V_max]; a
// transiently non-positive voltage is certainly outside the range.
inline double load_current(const CPLoad& load, double v) {
    if (v < load.V_min || v > load.V_max) return 0.0;
    return load.P / v;
}

enum class AuxKind { None, ShuntC, FilterRC };

struct SimWorkspace {
    int n = 0;
    AuxKind aux = AuxKind::None;
    double R = 0.0, Vg = 0.0;
    double C_s = 0.0, R_f = 0.0, C_f = 0.0, R_shunt = 0.0;
    std::vector<double> L, C;
    const NetworkSpec* spec = nullptr;
    Matrix rc_solve;  // (I + R/Rf M)^-1, RC design only

    int dim() const { return aux == AuxKind::None ? 2 * n : 3 * n; }

    // gate[k]: switch state {0,1} (switched) or duty (averaged)
    void node_voltages(const double* I, const double* aux_state, const double* gate,
                       const double* vf, double* v_node) const {
        if (aux == AuxKind::ShuntC) {
            for (int k = 0; k < n; ++k) v_node[k] = aux_state[k];
            return;
        }
        if (aux == AuxKind::FilterRC && R > 0.0) {
            Vector rhs(n);
            // rhs = Vg - R * M * inj + (R/Rf) * M * vf, M[k][m] = min(k,m)+1
            // computed as cumulative feeder drops of (inj - vf/Rf)
            double acc = 0.0;
            std::vector<double> seg(n);
            for (int j = n - 1; j >= 0; --j) {
                acc += gate[j] * I[j] - vf[j] / R_f;
                seg[j] = acc;
            }
            double drop = 0.0;
            for (int k = 0; k < n; ++k) {
                drop += R * seg[k];
                rhs[k] = Vg - drop;
            }
            Eigen::Map<Vector>(v_node, n) = rc_solve * rhs;
            return;
        }
        // purely resistive feeder
        double acc = 0.0;
        std::vector<double> seg(n);
        for (int j = n - 1; j >= 0; --j) {
            acc += gate[j] * I[j];
            seg[j] = acc;
        }
        double drop = 0.0;
        for (int k = 0; k < n; ++k) {
            drop += R * seg[k];
            v_node[k] = Vg - drop;
        }
    }

    // y = [I..., V..., aux...]; gate as above; duty needed for ShuntC drain.
    void derivative(const double* y, const double* gate, double* dy,
                    double* v_node_buf) const {
        const double* I = y;
        const double* V = y + n;
        const double* A = y + 2 * n;
        node_voltages(I, A, gate, A, v_node_buf);
        for (int k = 0; k < n; ++k) {
            dy[k] = (gate[k] * v_node_buf[k] - V[k]) / L[k];
            double i_out = load_current(spec->loads[k], V[k]);
            if (R_shunt > 0.0) i_out += V[k] / R_shunt;
            dy[n + k] = (I[k] - i_out) / C[k];
        }
        if (aux == AuxKind::ShuntC) {
            for (int k = 0; k < n; ++k) {
                const double up = (k == 0) ? Vg : A[k - 1];
                double flow = (up - A[k]) / R;
                if (k < n - 1) flow += (A[k + 1] - A[k]) / R;
                dy[2 * n + k] = (flow - gate[k] * I[k]) / C_s;
            }
        } else if (aux == AuxKind::FilterRC) {
            for (int k = 0; k < n; ++k)
                dy[2 * n + k] = (v_node_buf[k] - A[k]) / (R_f * C_f);
        }
    }
};

SimWorkspace make_workspace(const NetworkSpec& spec, const DesignVariant& design) {
    SimWorkspace w;
    w.n = spec.line.n;
    w.R = spec.line.R;
    w.Vg = spec.source.V_g;
    w.spec = &spec;
    for (const auto& c : spec.converters) {
        w.L.push_back(c.L);
        w.C.push_back(c.C);
    }
    if (const auto* d = std::get_if<OutputShuntR>(&design)) {
        if (!(d->R_s > 0.0)) throw SpecError("output shunt resistance must be > 0");
        w.R_shunt = d->R_s;
    } else if (const auto* d = std::get_if<InputShuntC>(&design)) {
        if (!(d->C_s > 0.0)) throw SpecError("input shunt capacitance must be > 0");
        w.aux = AuxKind::ShuntC;
        w.C_s = d->C_s;
    } else if (const auto* d = std::get_if<InputGroundRC>(&design)) {
        if (!(d->R_f > 0.0 && d->C_f > 0.0)) throw SpecError("RC components must be > 0");
        w.aux = AuxKind::FilterRC;
        w.R_f = d->R_f;
        w.C_f = d->C_f;
        Matrix M(w.n, w.n);
        for (int k = 0; k < w.n; ++k)
            for (int m = 0; m < w.n; ++m) M(k, m) = static_cast<double>(std::min(k, m) + 1);
        w.rc_solve =
            (Matrix::Identity(w.n, w.n) + (w.R / w.R_f) * M).partialPivLu().inverse();
    }
    return w;
}

struct DutyCommand {
    const Controller* ctl;
    int n;
    double command(int k, const double* I, const double* V) const {
        double d;
        if (const auto* ol = std::get_if<OpenLoopCtl>(ctl)) {
            d = ol->duty[k];
        } else if (const auto* pc = std::get_if<ProportionalCtl>(ctl)) {
            d = pc->duty0[k] + pc->k_p * (pc->v_ref - V[k]);
        } else {
            const auto& sf = std::get<StateFeedbackCtl>(*ctl);
            d = sf.op.duty[k] + sf.gains.gains[k].f_i * (I[k] - sf.op.i_ind[k]) +
                sf.gains.gains[k].f_v * (V[k] - sf.op.v_out[k]);
        }
        return std::clamp(d, 0.0, 1.0);
    }
};

std::vector<double> initial_state(const NetworkSpec& spec, const SimConfig& cfg,
                                  const SimWorkspace& w) {
    const int n = w.n;
    std::vector<double> y(w.dim());
    const auto* sf = std::get_if<StateFeedbackCtl>(&cfg.controller);
    for (int k = 0; k < n; ++k) {
        y[k] = cfg.initial_i ? (*cfg.initial_i)[k]
                             : (sf ? sf->op.i_ind[k]
                                   : spec.loads[k].P / spec.loads[k].V_nominal);
        y[n + k] = cfg.initial_v ? (*cfg.initial_v)[k]
                                 : (sf ? sf->op.v_out[k] : spec.loads[k].V_nominal);
    }
    if (w.aux != AuxKind::None) {
        for (int k = 0; k < n; ++k)
            y[2 * n + k] = cfg.initial_design ? (*cfg.initial_design)[k]
                                              : (sf ? sf->op.v_node[k] : spec.source.V_g);
    }
    return y;
}

Trace make_trace_header(const NetworkSpec& spec, const SimWorkspace& w, bool switched) {
    Trace tr;
    tr.columns.push_back("t");
    for (int k = 1; k <= w.n; ++k) {
        const std::string s = std::to_string(k);
        tr.columns.push_back("V" + s);
        tr.columns.push_back("I" + s);
        tr.columns.push_back("Vnode" + s);
        tr.columns.push_back("D" + s);
        if (switched) tr.columns.push_back("S" + s);
        tr.columns.push_back("Iload" + s);
    }
    if (w.aux == AuxKind::FilterRC)
        for (int k = 1; k <= w.n; ++k) tr.columns.push_back("Vf" + std::to_string(k));
    tr.data.assign(tr.columns.size(), {});
    (void)spec;
    return tr;
}

void record_sample(Trace& tr, const NetworkSpec& spec, const SimWorkspace& w, double t,
                   const double* y, const double* duty, const double* gate, bool switched) {
    std::vector<double> v_node(w.n);
    w.node_voltages(y, y + 2 * w.n, gate, y + 2 * w.n, v_node.data());
    int c = 0;
    tr.data[c++].push_back(t);
    for (int k = 0; k < w.n; ++k) {
        tr.data[c++].push_back(y[w.n + k]);
        tr.data[c++].push_back(y[k]);
        tr.data[c++].push_back(v_node[k]);
        tr.data[c++].push_back(duty[k]);
        if (switched) tr.data[c++].push_back(gate[k] > 0.5 ? 1.0 : 2.0);
        tr.data[c++].push_back(load_current(spec.loads[k], y[w.n + k]));
    }
    if (w.aux == AuxKind::FilterRC)
        for (int k = 0; k < w.n; ++k) tr.data[c++].push_back(y[2 * w.n + k]);
}

void rk4_step(const SimWorkspace& w, std::vector<double>& y, const double* gate_at,
              double dt, std::vector<double>& k1, std::vector<double>& k2,
              std::vector<double>& k3, std::vector<double>& k4, std::vector<double>& tmp,
              std::vector<double>& vbuf, const double* gate_mid, const double* gate_end) {
    const int d = w.dim();
    w.derivative(y.data(), gate_at, k1.data(), vbuf.data());
    for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
    w.derivative(tmp.data(), gate_mid, k2.data(), vbuf.data());
    for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
    w.derivative(tmp.data(), gate_mid, k3.data(), vbuf.data());
    for (int i = 0; i < d; ++i) tmp[i] = y[i] + dt * k3[i];
    w.derivative(tmp.data(), gate_end, k4.data(), vbuf.data());
    for (int i = 0; i < d; ++i)
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

[[noreturn]] void throw_divergence(double t, Trace tr) {
    std::ostringstream os;
    os << "simulation diverged at t = " << t << " s (state beyond 1e6 * V_g)";
    throw DivergenceError(os.str(), std::move(tr));
}

}  // namespace

Trace simulate_switched(const NetworkSpec& spec, const SimConfig& cfg) {
    if (cfg.model != SimModel::Switched)
        throw SpecError("simulate_switched called with an averaged config");
    cfg.validate(spec);
    const SimWorkspace w = make_workspace(spec, cfg.design);
    const DutyCommand duty_cmd{&cfg.controller, w.n};
    const int n = w.n, d = w.dim();
    const long steps = std::lround(cfg.t_end / cfg.dt);
    const double guard = 1e6 * spec.source.V_g;

    std::vector<double> y = initial_state(spec, cfg, w);
    std::vector<double> latched(n), period(n), next_latch(n, 0.0);
    for (int k = 0; k < n; ++k) period[k] = spec.converters[k].period();

    Trace tr = make_trace_header(spec, w, true);
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d), vbuf(n);
    std::vector<double> s_now(n), s_mid(n), s_end(n);

    auto switch_states = [&](double t, double* s) {
        // position 1 (line) while the period phase is at or below the latched duty
        for (int k = 0; k < n; ++k) {
            const double phase = (t - period[k] * std::floor(t / period[k])) / period[k];
            s[k] = (phase <= latched[k]) ? 1.0 : 0.0;
        }
    };

    for (long m = 0; m <= steps; ++m) {
        const double t = m * cfg.dt;
        for (int k = 0; k < n; ++k) {
            if (t >= next_latch[k] - 1e-9 * cfg.dt) {
                latched[k] = duty_cmd.command(k, y.data(), y.data() + n);
                next_latch[k] += period[k];
            }
        }
        switch_states(t, s_now.data());
        if (m % cfg.decimate == 0 || m == steps)
            record_sample(tr, spec, w, t, y.data(), latched.data(), s_now.data(), true);
        if (m == steps) break;

        switch_states(t + 0.5 * cfg.dt, s_mid.data());
        switch_states(t + cfg.dt, s_end.data());
        rk4_step(w, y, s_now.data(), cfg.dt, k1, k2, k3, k4, tmp, vbuf, s_mid.data(),
                 s_end.data());
        for (double v : y)
            if (!std::isfinite(v) || std::abs(v) > guard) throw_divergence(t, std::move(tr));
    }
    return tr;
}

Trace simulate_averaged(const NetworkSpec& spec, const SimConfig& cfg) {
    if (cfg.model != SimModel::Averaged)
        throw SpecError("simulate_averaged called with a switched config");
    cfg.validate(spec);
    const SimWorkspace w = make_workspace(spec, cfg.design);
    const DutyCommand duty_cmd{&cfg.controller, w.n};
    const int n = w.n, d = w.dim();
    const long steps = std::lround(cfg.t_end / cfg.dt);
    const double guard = 1e6 * spec.source.V_g;

    std::vector<double> y = initial_state(spec, cfg, w);
    Trace tr = make_trace_header(spec, w, false);
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d), vbuf(n);
    std::vector<double> g1(n), g2(n), g3(n), g4(n);

    auto gates_for = [&](const double* state, double* g) {
        for (int k = 0; k < n; ++k) g[k] = duty_cmd.command(k, state, state + n);
    };

    for (long m = 0; m <= steps; ++m) {
        const double t = m * cfg.dt;
        gates_for(y.data(), g1.data());
        if (m % cfg.decimate == 0 || m == steps)
            record_sample(tr, spec, w, t, y.data(), g1.data(), g1.data(), false);
        if (m == steps) break;

        // duty command re-evaluated at every RK4 stage state
        w.derivative(y.data(), g1.data(), k1.data(), vbuf.data());
        for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * cfg.dt * k1[i];
        gates_for(tmp.data(), g2.data());
        w.derivative(tmp.data(), g2.data(), k2.data(), vbuf.data());
        for (int i = 0; i < d; ++i) tmp[i] = y[i] + 0.5 * cfg.dt * k2[i];
        gates_for(tmp.data(), g3.data());
        w.derivative(tmp.data(), g3.data(), k3.data(), vbuf.data());
        for (int i = 0; i < d; ++i) tmp[i] = y[i] + cfg.dt * k3[i];
        gates_for(tmp.data(), g4.data());
        w.derivative(tmp.data(), g4.data(), k4.data(), vbuf.data());
        for (int i = 0; i < d; ++i)
            y[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        for (double v : y)
            if (!std::isfinite(v) || std::abs(v) > guard) throw_divergence(t, std::move(tr));
    }
    return tr;
}

const SignalMetrics& TraceMetrics::of(const std::string& column) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == column) return stats[i];
    throw SpecError("metrics have no column '" + column + "'");
}

TraceMetrics trace_metrics(const Trace& trace, double t1, double t2) {
    const int tcol = trace.col("t");
    if (tcol < 0 || trace.rows() == 0) throw SpecError("trace is empty");
    if (!(t1 <= t2)) throw SpecError("metrics window is reversed");
    const auto& ts = trace.data[tcol];
    std::vector<int> idx;
    for (int i = 0; i < trace.rows(); ++i)
        if (ts[i] >= t1 && ts[i] <= t2) idx.push_back(i);
    if (idx.empty()) throw SpecError("metrics window contains no samples");

    TraceMetrics out;
    for (size_t c = 0; c < trace.columns.size(); ++c) {
        if (static_cast<int>(c) == tcol) continue;
        const auto& col = trace.data[c];
        SignalMetrics m;
        m.min = m.max = col[idx[0]];
        double sum = 0.0;
        for (int i : idx) {
            m.min = std::min(m.min, col[i]);
            m.max = std::max(m.max, col[i]);
            sum += col[i];
        }
        m.mean = sum / static_cast<double>(idx.size());
        m.pkpk = m.max - m.min;
        out.columns.push_back(trace.columns[c]);
        out.stats.push_back(m);

        if (trace.columns[c].rfind("Iload", 0) == 0) {
            for (size_t j = 1; j < idx.size(); ++j)
                if (col[idx[j - 1]] > 0.0 && col[idx[j]] == 0.0) ++out.shutoff_events;
        }
    }
    return out;
}

}  // namespace cplnet
