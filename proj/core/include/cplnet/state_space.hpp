#pragma once

#include <complex>
#include <string>
#include <variant>
#include <vector>

#include "cplnet/model.hpp"

namespace cplnet {

/// Labeled small-signal model dx/dt = A x + B u, one input column per
/// converter duty perturbation.
struct StateSpace {
    Matrix A;
    Matrix B;
    std::vector<std::string> state_labels;

    int states() const { return static_cast<int>(A.rows()); }
    int inputs() const { return static_cast<int>(B.cols()); }
    void validate() const;
    int label_index(const std::string& label) const;  // -1 if absent
};

struct Spectrum {
    std::vector<std::complex<double>> eigenvalues;  // desc real part, ties desc imag
    double max_real_part = 0.0;
};

struct OutputShuntR {
    double R_s;  // ohm, shunt at each converter output
};
struct InputGroundRC {
    double R_f;  // ohm
    double C_f;  // farad, series RC from each input node to ground
};
struct InputShuntC {
    double C_s;  // farad, shunt at each converter input node
};
/// monostate = no design change.
using DesignVariant = std::variant<std::monostate, OutputShuntR, InputGroundRC, InputShuntC>;

/// B-entry choice for the duty input gain: the rigorous node voltage, or the
/// output voltage the appendix prints.
enum class InputGain { NodeVoltage, PaperPrinted };

/// Eq.-style 2-state single-converter model, state order [v, i].
StateSpace build_single(const ConverterParams& conv, const CPLoad& load,
                        const SourceParams& src, const OperatingPoint& op);

/// 2n-state feeder model, state order [i1 v1 ... in vn].
StateSpace build_network(const NetworkSpec& spec, const OperatingPoint& op,
                         CouplingConvention coupling = CouplingConvention::PaperExact,
                         InputGain b_gain = InputGain::NodeVoltage);

/// Applies one of the three passive designs to the feeder model.
/// OutputShuntR keeps the dimension; the other two add one state per
/// converter (InputShuntC: [vc1 i1 v1 ...], InputGroundRC: [i1 v1 vf1 ...]).
StateSpace apply_design(const StateSpace& ss, const NetworkSpec& spec,
                        const OperatingPoint& op, const DesignVariant& design,
                        CouplingConvention coupling = CouplingConvention::PaperExact);

/// Dense nonsymmetric eigensolve (real Schur + shifted QR via Eigen).
Spectrum eigenvalues(const Matrix& A);

/// Hurwitz test with margin: true iff max Re(lambda) < -margin.
bool is_stable(const Spectrum& s, double margin = 0.0);

struct SchurCheck {
    double det_schur;
    double det_direct;
    bool agree;
};
/// det via the block formula det(A1)*det(A2 - A21 A1^{-1} A12) against LU.
SchurCheck schur_determinant_check(const Matrix& A_closed, int block_dim);

/// Entrywise sign pattern {-1, 0, +1}; entries below rel_tol * max|A| count as 0.
Eigen::MatrixXi sign_structure(const Matrix& A, double rel_tol = 1e-12);

std::string design_name(const DesignVariant& d);

}  // namespace cplnet
