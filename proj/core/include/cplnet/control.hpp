#pragma once

#include <complex>
#include <string>
#include <vector>

#include "cplnet/state_space.hpp"

namespace cplnet {

/// Per-converter state-feedback row: d_k = f_i * i_k + f_v * v_k.
struct ConverterGain {
    double f_i = 0.0;  // per ampere
    double f_v = 0.0;  // per volt
};

/// Block-diagonal global feedback: each converter sees only its own states.
struct GlobalFeedback {
    std::vector<ConverterGain> gains;
    int size() const { return static_cast<int>(gains.size()); }
};

/// rank [B, AB] == 2 via singular values (tolerance 1e-10 * ||[B, AB]||).
bool check_controllability(const StateSpace& single);

/// Pole placement by coefficient matching on the 2x2 characteristic
/// polynomial. Poles must be a conjugate pair or two reals, all in the open
/// left half plane.
ConverterGain design_individual(const StateSpace& single, std::complex<double> p1,
                                std::complex<double> p2);

/// n x 2n feedback matrix for the [i1 v1 ... in vn] network state order.
Matrix assemble_global(const GlobalFeedback& fb, int n);

/// Feedback matrix matched to an arbitrary state layout by labels; gains act
/// on (i_k, v_k) only, added passive states are never fed back.
Matrix assemble_for_labels(const GlobalFeedback& fb,
                           const std::vector<std::string>& state_labels);

/// A := A + B F, labels unchanged.
StateSpace closed_loop(const StateSpace& ss, const Matrix& F);

/// Default test-suite gains: per-converter poles -w0 (1 +- j) with
/// w0 = omega0_scale * 0.5 / sqrt(L C), designed against the stiff-source
/// single-converter model.
GlobalFeedback default_gains(const NetworkSpec& spec, double omega0_scale = 1.0);

std::string gains_to_json(const GlobalFeedback& fb);
GlobalFeedback gains_from_json(const std::string& text);

}  // namespace cplnet
