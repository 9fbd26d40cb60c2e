#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cplnet/errors.hpp"

namespace cplnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Ideal buck converter: inductance, output capacitance, switching frequency.
struct ConverterParams {
    double L = 0.0;     // henry
    double C = 0.0;     // farad
    double f_sw = 0.0;  // hertz

    double period() const { return 1.0 / f_sw; }
    void validate() const;
};

struct SourceParams {
    double V_g = 0.0;  // volt
    void validate() const;
};

/// Constant power load with shutoff outside its design voltage range.
struct CPLoad {
    double P = 0.0;          // watt
    double V_min = 0.0;      // volt, lower shutoff
    double V_max = 0.0;      // volt, upper shutoff
    double V_nominal = 0.0;  // volt, regulation target

    void validate() const;
};

/// Radial feeder: source, then n identical-resistance segments, converter k
/// tapped after segment k.
struct LineNetwork {
    int n = 0;       // converter count
    double R = 0.0;  // ohm per segment
    void validate() const;
};

struct NetworkSpec {
    SourceParams source;
    LineNetwork line;
    std::vector<ConverterParams> converters;  // length n
    std::vector<CPLoad> loads;                // length n

    void validate() const;
    NetworkSpec with_line_R(double R) const;
    NetworkSpec replicated(int n) const;  // first converter/load copied n times
};

/// Line-drop current convention. PaperExact uses inductor currents directly
/// (reproduces the printed Appendix matrices); PhysicalAveraged carries the
/// duty factor a rigorous average of the converter input current has.
enum class CouplingConvention { PaperExact, PhysicalAveraged };

/// Steady state about which the small-signal models are built.
struct OperatingPoint {
    Vector duty;    // D_k, each in (0,1)
    Vector v_out;   // Vbar_k (volt)
    Vector i_ind;   // Ibar_k (ampere)
    Vector v_node;  // converter-input node voltage (volt)

    int size() const { return static_cast<int>(duty.size()); }
};

/// Load current P/v inside [V_min, V_max], 0 outside (load shutoff).
/// Throws SpecError for non-positive v.
double cpl_current(const CPLoad& load, double v);

/// Fixed point of the averaged equations with d/dt = 0. Damped fixed-point
/// iteration on node voltages (cap 10000, relative tolerance 1e-9), with a
/// scalar bisection fallback for n = 1.
OperatingPoint solve_operating_point(
    const NetworkSpec& spec,
    CouplingConvention coupling = CouplingConvention::PhysicalAveraged);

/// Max relative residual of the operating-point fixed-point equations.
double operating_point_residual(const NetworkSpec& spec, const OperatingPoint& op,
                                CouplingConvention coupling);

/// Segment currents: seg[j] = sum over converters i >= j of their line current
/// (duty-weighted under PhysicalAveraged).
Vector segment_currents(const OperatingPoint& op, CouplingConvention coupling);

}  // namespace cplnet
