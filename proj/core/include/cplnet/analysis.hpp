#pragma once

#include <limits>
#include <span>
#include <vector>

#include "cplnet/control.hpp"
#include "cplnet/state_space.hpp"

namespace cplnet {

constexpr double kInfiniteR = std::numeric_limits<double>::infinity();

/// Sweeps hold the operating point solved at the spec's nominal line R while
/// R varies in the matrices - the theorems' matrix family. The feedback F is
/// fixed throughout (plug-and-play premise).
struct SweepOptions {
    double R_max = 10.0;        // ohm, search bracket upper end
    double tol = 1e-6;          // ohm, bisection tolerance
    int grid_points = 1000;     // pre-scan resolution
    CouplingConvention coupling = CouplingConvention::PaperExact;
    DesignVariant design{};     // applied at every evaluated R
    double margin = 0.0;        // s^-1, stability margin
};

struct RStarResult {
    double R_star = kInfiniteR;  // +inf sentinel: stable throughout (0, R_max]
    bool found = false;
    bool multi_crossing = false;  // pre-scan saw more than one sign change
    int evaluations = 0;
};

/// Closed-loop A at the given line R (design applied, F on converter states).
Matrix closed_loop_matrix(const NetworkSpec& spec, const OperatingPoint& op,
                          const GlobalFeedback& fb, double R,
                          const DesignVariant& design, CouplingConvention coupling);

/// Smallest R in (0, R_max] where max Re(lambda) crosses 0, by grid pre-scan
/// plus bisection. Throws InfeasibleError if already unstable at the smallest
/// grid point (individual-stability premise violated).
RStarResult max_stable_R(const NetworkSpec& spec, const GlobalFeedback& fb,
                         const SweepOptions& opt = {});

struct CriticalNResult {
    int N0 = -1;
    bool found = false;
    int n_checked = 0;
    Spectrum last_spectrum;  // spectrum at N0 when found, else at n_max
};

/// Grows the feeder one converter at a time (identical converters, identical
/// gains) at fixed line R until the closed loop goes unstable.
CriticalNResult critical_n(const NetworkSpec& single_template, const ConverterGain& gain,
                           double R, int n_max,
                           CouplingConvention coupling = CouplingConvention::PaperExact);

struct DesignReport {
    DesignVariant variant;
    bool stable = false;
    double loss_watts = 0.0;   // OutputShuntR
    double efficiency = 0.0;   // OutputShuntR
    double R_star = kInfiniteR;  // InputGroundRC
    double C_s_star = 0.0;       // InputShuntC
};

/// Stability at the spec's own R plus the exact loss/efficiency figures.
DesignReport evaluate_output_shunt(const NetworkSpec& spec, const GlobalFeedback& fb,
                                   double R_s,
                                   CouplingConvention coupling = CouplingConvention::PaperExact);

/// R_star of the RC-augmented loop (the theorem predicts it stays finite).
DesignReport evaluate_input_rc(const NetworkSpec& spec, const GlobalFeedback& fb, double R_f,
                               double C_f, double R_max_search,
                               CouplingConvention coupling = CouplingConvention::PaperExact);

struct CsStarResult {
    double C_s_star = 0.0;
    bool constraint_active = false;  // false: already stable at the bracket's lower edge
    double worst_max_re = 0.0;       // max over R_set at C_s_star
};

/// Smallest C_s (log-grid refinement then bisection, relative tol 1e-3) such
/// that the augmented closed loop is stable for every R in R_set. Throws
/// NumericalError when the upper bracket edge is insufficient.
CsStarResult min_stabilizing_Cs(const NetworkSpec& spec, const GlobalFeedback& fb,
                                std::span<const double> R_set, double Cs_lo, double Cs_hi,
                                CouplingConvention coupling = CouplingConvention::PaperExact);

/// Hausdorff distance between the coupled converter-dominant modes (the n
/// node-capacitor modes excluded by eigenvector dominance) and the union of
/// isolated closed-loop converter spectra. 0 at R = 0 (already decoupled).
double decoupling_gap(const NetworkSpec& spec, const GlobalFeedback& fb, double C_s,
                      double R, CouplingConvention coupling = CouplingConvention::PaperExact);

struct BoundaryPoint {
    int n;
    double R_star;  // +inf sentinel allowed
    bool multi_crossing;
};

struct StabilityBoundary {
    std::vector<BoundaryPoint> points;  // sorted by n
    double R_max = 0.0;
    double tol = 0.0;
    int evaluations = 0;
};

/// R_star(n) for n in [n_min, n_max] with identical converters and gains.
/// jobs > 1 fans the per-n evaluations out to a worker pool; results are
/// assembled in n order so output bytes never depend on scheduling.
StabilityBoundary sweep_boundary(const NetworkSpec& single_template, const ConverterGain& gain,
                                 int n_min, int n_max, const SweepOptions& opt = {},
                                 int jobs = 1);

/// 20-point log grid on [0.01, 10] ohm: the default plug-and-play
/// certification grid.
std::vector<double> default_R_set();

std::vector<double> log_grid(double lo, double hi, int points);

}  // namespace cplnet
