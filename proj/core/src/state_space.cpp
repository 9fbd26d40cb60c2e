#include "cplnet/state_space.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace cplnet {

void StateSpace::validate() const {
    if (A.rows() != A.cols()) throw SpecError("state matrix must be square");
    if (B.rows() != A.rows()) throw SpecError("B row count must equal state count");
    if (static_cast<int>(state_labels.size()) != A.rows())
        throw SpecError("state label count must equal state count");
    std::set<std::string> seen(state_labels.begin(), state_labels.end());
    if (static_cast<int>(seen.size()) != A.rows())
        throw SpecError("state labels must be unique");
}

int StateSpace::label_index(const std::string& label) const {
    for (size_t i = 0; i < state_labels.size(); ++i)
        if (state_labels[i] == label) return static_cast<int>(i);
    return -1;
}

StateSpace build_single(const ConverterParams& conv, const CPLoad& load,
                        const SourceParams& src, const OperatingPoint& op) {
    if (op.size() != 1) throw SpecError("build_single expects an n=1 operating point");
    const double vbar = op.v_out[0];
    StateSpace ss;
    ss.A = Matrix(2, 2);
    ss.A << load.P / (conv.C * vbar * vbar), 1.0 / conv.C,
            -1.0 / conv.L,                   0.0;
    ss.B = Matrix(2, 1);
    ss.B << 0.0, src.V_g / conv.L;
    ss.state_labels = {"v", "i"};
    return ss;
}

StateSpace build_network(const NetworkSpec& spec, const OperatingPoint& op,
                         CouplingConvention coupling, InputGain b_gain) {
    spec.validate();
    const int n = spec.line.n;
    if (op.size() != n) throw SpecError("operating point size does not match spec");
    const double R = spec.line.R;

    StateSpace ss;
    ss.A = Matrix::Zero(2 * n, 2 * n);
    ss.B = Matrix::Zero(2 * n, n);
    ss.state_labels.resize(2 * n);

    for (int k = 0; k < n; ++k) {
        const double Lk = spec.converters[k].L;
        const double Ck = spec.converters[k].C;
        const double Pk = spec.loads[k].P;
        const int ik = 2 * k, vk = 2 * k + 1;
        ss.state_labels[ik] = "i" + std::to_string(k + 1);
        ss.state_labels[vk] = "v" + std::to_string(k + 1);

        // Line coupling: segment j <= min(k,m) carries converter m's current.
        for (int m = 0; m < n; ++m) {
            const double shared = static_cast<double>(std::min(k, m) + 1);
            if (coupling == CouplingConvention::PaperExact) {
                ss.A(ik, 2 * m) -= op.duty[k] * R * shared / Lk;
            } else {
                ss.A(ik, 2 * m) -= op.duty[k] * op.duty[m] * R * shared / Lk;
                ss.B(ik, m) -= op.duty[k] * R * shared * op.i_ind[m] / Lk;
            }
        }
        ss.A(ik, vk) -= 1.0 / Lk;
        ss.A(vk, ik) += 1.0 / Ck;
        ss.A(vk, vk) += Pk / (Ck * op.v_out[k] * op.v_out[k]);

        const double gain = (b_gain == InputGain::PaperPrinted) ? op.v_out[k] : op.v_node[k];
        ss.B(ik, k) += gain / Lk;
    }
    return ss;
}

namespace {

StateSpace apply_output_shunt(const StateSpace& ss, const NetworkSpec& spec, double R_s) {
    if (!(R_s > 0.0)) throw SpecError("output shunt resistance must be > 0");
    StateSpace out = ss;
    for (int k = 0; k < spec.line.n; ++k) {
        const int vk = out.label_index("v" + std::to_string(k + 1));
        out.A(vk, vk) -= 1.0 / (spec.converters[k].C * R_s);
    }
    return out;
}

StateSpace apply_input_shunt_c(const NetworkSpec& spec, const OperatingPoint& op,
                               double C_s, CouplingConvention coupling) {
    if (!(C_s > 0.0)) throw SpecError("input shunt capacitance must be > 0");
    if (!(spec.line.R > 0.0))
        throw SpecError("input shunt capacitor with R = 0 sits across the ideal "
                        "source and adds no state");
    const int n = spec.line.n;
    const double g = 1.0 / (C_s * spec.line.R);

    StateSpace ss;
    ss.A = Matrix::Zero(3 * n, 3 * n);
    ss.B = Matrix::Zero(3 * n, n);
    ss.state_labels.resize(3 * n);

    for (int k = 0; k < n; ++k) {
        const double Lk = spec.converters[k].L;
        const double Ck = spec.converters[k].C;
        const double Pk = spec.loads[k].P;
        const int vc = 3 * k, ik = 3 * k + 1, vk = 3 * k + 2;
        ss.state_labels[vc] = "vc" + std::to_string(k + 1);
        ss.state_labels[ik] = "i" + std::to_string(k + 1);
        ss.state_labels[vk] = "v" + std::to_string(k + 1);

        // Node balance: upstream neighbor is the stiff source for k = 0.
        ss.A(vc, vc) -= g;
        if (k > 0) ss.A(vc, 3 * (k - 1)) += g;
        if (k < n - 1) {
            ss.A(vc, vc) -= g;
            ss.A(vc, 3 * (k + 1)) += g;
        }
        if (coupling == CouplingConvention::PaperExact) {
            ss.A(vc, ik) -= 1.0 / C_s;
        } else {
            ss.A(vc, ik) -= op.duty[k] / C_s;
            ss.B(vc, k) -= op.i_ind[k] / C_s;
        }

        ss.A(ik, vc) += op.duty[k] / Lk;
        ss.A(ik, vk) -= 1.0 / Lk;
        ss.A(vk, ik) += 1.0 / Ck;
        ss.A(vk, vk) += Pk / (Ck * op.v_out[k] * op.v_out[k]);
        ss.B(ik, k) += op.v_node[k] / Lk;
    }
    return ss;
}

StateSpace apply_input_ground_rc(const NetworkSpec& spec, const OperatingPoint& op,
                                 double R_f, double C_f, CouplingConvention coupling) {
    if (!(R_f > 0.0 && C_f > 0.0)) throw SpecError("RC filter components must be > 0");
    const int n = spec.line.n;
    const double R = spec.line.R;

    // Node voltages are algebraic: v_node = -R*M*(i_line + i_branch),
    // i_branch = (v_node - v_f)/R_f, M[k][m] = min(k,m)+1 segments shared.
    Matrix M(n, n);
    for (int k = 0; k < n; ++k)
        for (int m = 0; m < n; ++m) M(k, m) = static_cast<double>(std::min(k, m) + 1);
    const Matrix S = (Matrix::Identity(n, n) + (R / R_f) * M).partialPivLu().inverse();
    const Matrix Ni = -R * (S * M);        // v_node from line-current perturbations
    const Matrix Nf = (R / R_f) * (S * M); // v_node from filter-state perturbations

    StateSpace ss;
    ss.A = Matrix::Zero(3 * n, 3 * n);
    ss.B = Matrix::Zero(3 * n, n);
    ss.state_labels.resize(3 * n);

    for (int k = 0; k < n; ++k) {
        const double Lk = spec.converters[k].L;
        const double Ck = spec.converters[k].C;
        const double Pk = spec.loads[k].P;
        const double tau = 1.0 / (R_f * C_f);
        const int ik = 3 * k, vk = 3 * k + 1, vf = 3 * k + 2;
        ss.state_labels[ik] = "i" + std::to_string(k + 1);
        ss.state_labels[vk] = "v" + std::to_string(k + 1);
        ss.state_labels[vf] = "vf" + std::to_string(k + 1);

        for (int m = 0; m < n; ++m) {
            const int im = 3 * m, vfm = 3 * m + 2;
            const double ci =
                (coupling == CouplingConvention::PaperExact) ? 1.0 : op.duty[m];
            ss.A(ik, im) += op.duty[k] / Lk * Ni(k, m) * ci;
            ss.A(ik, vfm) += op.duty[k] / Lk * Nf(k, m);
            ss.A(vf, im) += tau * Ni(k, m) * ci;
            ss.A(vf, vfm) += tau * Nf(k, m);
            if (coupling == CouplingConvention::PhysicalAveraged) {
                ss.B(ik, m) += op.duty[k] / Lk * Ni(k, m) * op.i_ind[m];
                ss.B(vf, m) += tau * Ni(k, m) * op.i_ind[m];
            }
        }
        ss.A(ik, vk) -= 1.0 / Lk;
        ss.A(vf, vf) -= tau;
        ss.A(vk, ik) += 1.0 / Ck;
        ss.A(vk, vk) += Pk / (Ck * op.v_out[k] * op.v_out[k]);
        ss.B(ik, k) += op.v_node[k] / Lk;
    }
    return ss;
}

}  // namespace

StateSpace apply_design(const StateSpace& ss, const NetworkSpec& spec,
                        const OperatingPoint& op, const DesignVariant& design,
                        CouplingConvention coupling) {
    if (std::holds_alternative<std::monostate>(design)) return ss;
    if (const auto* d = std::get_if<OutputShuntR>(&design))
        return apply_output_shunt(ss, spec, d->R_s);
    if (const auto* d = std::get_if<InputShuntC>(&design))
        return apply_input_shunt_c(spec, op, d->C_s, coupling);
    const auto& d = std::get<InputGroundRC>(design);
    return apply_input_ground_rc(spec, op, d.R_f, d.C_f, coupling);
}

Spectrum eigenvalues(const Matrix& A) {
    if (A.rows() != A.cols()) throw SpecError("eigenvalues: matrix must be square");
    if (!A.allFinite()) throw SpecError("eigenvalues: matrix has non-finite entries");
    Eigen::EigenSolver<Matrix> solver(A, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw NumericalError("eigenvalue iteration failed to converge");

    Spectrum s;
    s.eigenvalues.resize(A.rows());
    for (int i = 0; i < A.rows(); ++i) s.eigenvalues[i] = solver.eigenvalues()[i];
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  if (a.real() != b.real()) return a.real() > b.real();
                  return a.imag() > b.imag();
              });
    s.max_real_part = s.eigenvalues.empty() ? 0.0 : s.eigenvalues.front().real();
    return s;
}

bool is_stable(const Spectrum& s, double margin) {
    if (!(margin >= 0.0)) throw SpecError("stability margin must be >= 0");
    return s.max_real_part < -margin;
}

SchurCheck schur_determinant_check(const Matrix& A_closed, int block_dim) {
    const int n = static_cast<int>(A_closed.rows());
    if (A_closed.cols() != n) throw SpecError("schur check: matrix must be square");
    if (block_dim <= 0 || block_dim >= n) throw SpecError("schur check: bad block dimension");

    const Matrix A1 = A_closed.topLeftCorner(block_dim, block_dim);
    const Matrix A12 = A_closed.topRightCorner(block_dim, n - block_dim);
    const Matrix A21 = A_closed.bottomLeftCorner(n - block_dim, block_dim);
    const Matrix A2 = A_closed.bottomRightCorner(n - block_dim, n - block_dim);

    Eigen::PartialPivLU<Matrix> lu1(A1);
    const double det1 = lu1.determinant();
    if (det1 == 0.0 || !std::isfinite(1.0 / det1))
        throw NumericalError("schur check: leading block A1 is singular");

    // The paper prints A12 twice in this formula; the standard form is A21 A1^{-1} A12.
    const Matrix schur = A2 - A21 * lu1.solve(A12);
    SchurCheck out;
    out.det_schur = det1 * schur.partialPivLu().determinant();
    out.det_direct = A_closed.partialPivLu().determinant();
    out.agree = std::abs(out.det_schur - out.det_direct) <=
                1e-8 * std::max(1.0, std::abs(out.det_direct));
    return out;
}

Eigen::MatrixXi sign_structure(const Matrix& A, double rel_tol) {
    const double scale = A.cwiseAbs().maxCoeff();
    const double thresh = rel_tol * scale;
    Eigen::MatrixXi s(A.rows(), A.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            s(i, j) = (std::abs(A(i, j)) <= thresh) ? 0 : (A(i, j) > 0.0 ? 1 : -1);
    return s;
}

std::string design_name(const DesignVariant& d) {
    if (std::holds_alternative<std::monostate>(d)) return "none";
    if (std::holds_alternative<OutputShuntR>(d)) return "output_shunt_r";
    if (std::holds_alternative<InputGroundRC>(d)) return "input_ground_rc";
    return "input_shunt_c";
}

}  // namespace cplnet
