#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cplnet/control.hpp"
#include "cplnet/state_space.hpp"

namespace cplnet {

enum class SimModel { Switched, Averaged };

/// Fixed per-converter duty commands.
struct OpenLoopCtl {
    Vector duty;
};

/// d = D0 + k_p (v_ref - V). Latched once per switching period in switched
/// mode; continuous duty command in averaged mode.
struct ProportionalCtl {
    double k_p = 0.0;
    double v_ref = 0.0;
    Vector duty0;
};

/// d_k = D_k + f_i (I_k - Ibar_k) + f_v (V_k - Vbar_k) about the given
/// operating point. Latched per period in switched mode.
struct StateFeedbackCtl {
    GlobalFeedback gains;
    OperatingPoint op;
};

using Controller = std::variant<OpenLoopCtl, ProportionalCtl, StateFeedbackCtl>;

struct SimConfig {
    double dt = 0.0;
    double t_end = 0.0;
    SimModel model = SimModel::Averaged;
    Controller controller;
    DesignVariant design{};
    std::optional<Vector> initial_i;       // default: controller op / nominal
    std::optional<Vector> initial_v;
    std::optional<Vector> initial_design;  // vc or vf states
    int decimate = 1;                      // record every Nth step

    void validate(const NetworkSpec& spec) const;
};

/// Column-major trace. Column order: t, then per converter k:
/// Vk, Ik, Vnodek, Dk, Sk (switched only, 1 = line / 2 = ground), Iloadk;
/// InputGroundRC appends Vfk columns (the InputShuntC node voltage column is
/// the capacitor state itself).
struct Trace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;

    int rows() const { return data.empty() ? 0 : static_cast<int>(data[0].size()); }
    int col(const std::string& name) const;
    const std::vector<double>& operator[](const std::string& name) const;
};

/// State blow-up beyond 1e6 * V_g aborts a run; the truncated trace rides on
/// the exception.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& msg, Trace partial)
        : NumericalError(msg), trace(std::move(partial)) {}
    Trace trace;
};

/// Fixed-step RK4 on the piecewise switched dynamics; duty latched at period
/// boundaries, switch position from the duty-cycle comparator.
Trace simulate_switched(const NetworkSpec& spec, const SimConfig& cfg);

/// Fixed-step RK4 on the nonlinear averaged model (continuous duty command).
Trace simulate_averaged(const NetworkSpec& spec, const SimConfig& cfg);

struct SignalMetrics {
    double pkpk = 0.0, mean = 0.0, min = 0.0, max = 0.0;
};

struct TraceMetrics {
    std::vector<std::string> columns;  // all non-time columns
    std::vector<SignalMetrics> stats;
    int shutoff_events = 0;  // load-current transitions to zero inside the window
    const SignalMetrics& of(const std::string& column) const;
};

TraceMetrics trace_metrics(const Trace& trace, double t1, double t2);

}  // namespace cplnet
