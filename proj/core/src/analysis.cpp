#include "cplnet/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace cplnet {

std::vector<double> log_grid(double lo, double hi, int points) {
    if (!(lo > 0.0 && hi > lo) || points < 2) throw SpecError("bad log grid parameters");
    std::vector<double> g(points);
    const double step = std::log(hi / lo) / (points - 1);
    for (int i = 0; i < points; ++i) g[i] = lo * std::exp(step * i);
    g.back() = hi;
    return g;
}

std::vector<double> default_R_set() { return log_grid(0.01, 10.0, 20); }

Matrix closed_loop_matrix(const NetworkSpec& spec, const OperatingPoint& op,
                          const GlobalFeedback& fb, double R, const DesignVariant& design,
                          CouplingConvention coupling) {
    const NetworkSpec at_R = spec.with_line_R(R);
    StateSpace ss = build_network(at_R, op, coupling);
    ss = apply_design(ss, at_R, op, design, coupling);
    const Matrix F = assemble_for_labels(fb, ss.state_labels);
    return ss.A + ss.B * F;
}

namespace {

double max_re_at(const NetworkSpec& spec, const OperatingPoint& op, const GlobalFeedback& fb,
                 double R, const DesignVariant& design, CouplingConvention coupling,
                 double margin, int& evaluations) {
    ++evaluations;
    return eigenvalues(closed_loop_matrix(spec, op, fb, R, design, coupling)).max_real_part +
           margin;
}

}  // namespace

RStarResult max_stable_R(const NetworkSpec& spec, const GlobalFeedback& fb,
                         const SweepOptions& opt) {
    if (!(opt.tol > 0.0) || opt.grid_points < 2 || !(opt.R_max > 0.0))
        throw SpecError("max_stable_R: bad sweep options");
    const OperatingPoint op = solve_operating_point(spec);
    if (fb.size() != spec.line.n) throw SpecError("gain count does not match spec");

    RStarResult out;
    auto f = [&](double R) {
        return max_re_at(spec, op, fb, R, opt.design, opt.coupling, opt.margin,
                         out.evaluations);
    };

    // Pre-scan: locate every sign change; bisection assumes a single crossing,
    // so multiple crossings are flagged and the smallest is refined.
    const double dR = opt.R_max / opt.grid_points;
    double prev_R = dR;
    double prev_v = f(prev_R);
    if (prev_v >= 0.0)
        throw InfeasibleError(
            "closed loop already unstable at the smallest scanned R; converters are "
            "not individually stable under the given gains",
            -1);
    double lo = 0.0, hi = 0.0;
    int crossings = 0;
    for (int i = 2; i <= opt.grid_points; ++i) {
        const double R = dR * i;
        const double v = f(R);
        if (prev_v < 0.0 && v >= 0.0) {
            if (crossings == 0) {
                lo = prev_R;
                hi = R;
            }
            ++crossings;
        }
        prev_R = R;
        prev_v = v;
    }
    if (crossings == 0) return out;  // +inf sentinel

    while (hi - lo > opt.tol) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    out.R_star = 0.5 * (lo + hi);
    out.found = true;
    out.multi_crossing = crossings > 1;
    return out;
}

CriticalNResult critical_n(const NetworkSpec& single_template, const ConverterGain& gain,
                           double R, int n_max, CouplingConvention coupling) {
    if (!(R > 0.0)) throw SpecError("critical_n: R must be > 0");
    CriticalNResult out;
    for (int n = 1; n <= n_max; ++n) {
        const NetworkSpec spec_n = single_template.replicated(n);
        const OperatingPoint op = solve_operating_point(spec_n);
        GlobalFeedback fb;
        fb.gains.assign(n, gain);
        const Spectrum s =
            eigenvalues(closed_loop_matrix(spec_n, op, fb, R, {}, coupling));
        out.n_checked = n;
        out.last_spectrum = s;
        if (s.max_real_part > 0.0) {
            if (n == 1)
                throw InfeasibleError("converter is not individually stable under this gain",
                                      0);
            out.N0 = n;
            out.found = true;
            return out;
        }
    }
    return out;  // not found by n_max; last_spectrum attached
}

DesignReport evaluate_output_shunt(const NetworkSpec& spec, const GlobalFeedback& fb,
                                   double R_s, CouplingConvention coupling) {
    if (!(R_s > 0.0)) throw SpecError("shunt resistance must be > 0");
    const OperatingPoint op = solve_operating_point(spec);
    DesignReport rep;
    rep.variant = OutputShuntR{R_s};
    const Matrix A =
        closed_loop_matrix(spec, op, fb, spec.line.R, OutputShuntR{R_s}, coupling);
    rep.stable = is_stable(eigenvalues(A));
    double p_total = 0.0;
    for (int k = 0; k < spec.line.n; ++k) {
        rep.loss_watts += op.v_out[k] * op.v_out[k] / R_s;
        p_total += spec.loads[k].P;
    }
    rep.efficiency = p_total / (p_total + rep.loss_watts);
    return rep;
}

DesignReport evaluate_input_rc(const NetworkSpec& spec, const GlobalFeedback& fb, double R_f,
                               double C_f, double R_max_search, CouplingConvention coupling) {
    DesignReport rep;
    rep.variant = InputGroundRC{R_f, C_f};
    SweepOptions opt;
    opt.R_max = R_max_search;
    opt.coupling = coupling;
    opt.design = InputGroundRC{R_f, C_f};
    const RStarResult r = max_stable_R(spec, fb, opt);
    rep.R_star = r.R_star;
    rep.stable = !r.found;
    return rep;
}

namespace {

double worst_max_re_over_R(const NetworkSpec& spec, const OperatingPoint& op,
                           const GlobalFeedback& fb, std::span<const double> R_set,
                           double C_s, CouplingConvention coupling) {
    double worst = -std::numeric_limits<double>::infinity();
    for (double R : R_set) {
        const Matrix A = closed_loop_matrix(spec, op, fb, R, InputShuntC{C_s}, coupling);
        worst = std::max(worst, eigenvalues(A).max_real_part);
    }
    return worst;
}

}  // namespace

CsStarResult min_stabilizing_Cs(const NetworkSpec& spec, const GlobalFeedback& fb,
                                std::span<const double> R_set, double Cs_lo, double Cs_hi,
                                CouplingConvention coupling) {
    if (R_set.empty()) throw SpecError("min_stabilizing_Cs: empty R set");
    for (double R : R_set)
        if (!(R > 0.0)) throw SpecError("min_stabilizing_Cs: every R must be > 0");
    if (!(Cs_lo > 0.0 && Cs_hi > Cs_lo)) throw SpecError("min_stabilizing_Cs: bad bracket");
    const OperatingPoint op = solve_operating_point(spec);

    auto worst = [&](double Cs) {
        return worst_max_re_over_R(spec, op, fb, R_set, Cs, coupling);
    };

    const double worst_hi = worst(Cs_hi);
    if (worst_hi >= 0.0) {
        std::ostringstream os;
        os << "no stabilizing C_s within bracket: worst max Re(lambda) = " << worst_hi
           << " at the upper edge " << Cs_hi << " F";
        throw NumericalError(os.str());
    }

    CsStarResult out;
    if (worst(Cs_lo) < 0.0) {
        out.C_s_star = Cs_lo;
        out.constraint_active = false;
        out.worst_max_re = worst(Cs_lo);
        return out;
    }

    // Log-grid refinement: bracket the stable/unstable transition, assuming the
    // stabilizing set is upward-closed in C_s.
    constexpr int kGridPoints = 40;
    const std::vector<double> grid = log_grid(Cs_lo, Cs_hi, kGridPoints);
    double lo = Cs_lo, hi = Cs_hi;
    for (int i = kGridPoints - 1; i >= 0; --i) {
        if (worst(grid[i]) >= 0.0) {
            lo = grid[i];
            hi = (i + 1 < kGridPoints) ? grid[i + 1] : Cs_hi;
            break;
        }
    }
    while ((hi - lo) / hi > 1e-3) {
        const double mid = std::sqrt(lo * hi);
        (worst(mid) < 0.0 ? hi : lo) = mid;
    }
    out.C_s_star = hi;
    out.constraint_active = true;
    out.worst_max_re = worst(hi);
    return out;
}

double decoupling_gap(const NetworkSpec& spec, const GlobalFeedback& fb, double C_s, double R,
                      CouplingConvention coupling) {
    if (!(C_s > 0.0) || R < 0.0) throw SpecError("decoupling_gap: bad parameters");
    const int n = spec.line.n;
    const OperatingPoint op = solve_operating_point(spec);

    // Isolated converter reference: the C_s -> inf limit, where the node is a
    // stiff source at the operating-point node voltage.
    std::vector<std::complex<double>> isolated;
    for (int k = 0; k < n; ++k) {
        const double L = spec.converters[k].L;
        const double C = spec.converters[k].C;
        Matrix A(2, 2);
        A << 0.0, -1.0 / L, 1.0 / C,
            spec.loads[k].P / (C * op.v_out[k] * op.v_out[k]);
        Matrix B(2, 1);
        B << op.v_node[k] / L, 0.0;
        Matrix F(1, 2);
        F << fb.gains[k].f_i, fb.gains[k].f_v;
        const Spectrum s = eigenvalues(A + B * F);
        isolated.insert(isolated.end(), s.eigenvalues.begin(), s.eigenvalues.end());
    }

    std::vector<std::complex<double>> coupled;
    if (R == 0.0) {
        // Feeder already decoupled; the design adds no dynamics across an
        // ideal source.
        coupled = isolated;
    } else {
        const Matrix A =
            closed_loop_matrix(spec, op, fb, R, InputShuntC{C_s}, coupling);
        Eigen::EigenSolver<Matrix> solver(A);
        if (solver.info() != Eigen::Success)
            throw NumericalError("decoupling_gap: eigensolver failed");

        // Drop the n modes whose eigenvectors live mostly on the vc states.
        std::vector<std::pair<double, int>> dominance(3 * n);
        for (int j = 0; j < 3 * n; ++j) {
            double on_vc = 0.0, total = 0.0;
            for (int s = 0; s < 3 * n; ++s) {
                const double m2 = std::norm(solver.eigenvectors()(s, j));
                total += m2;
                if (s % 3 == 0) on_vc += m2;
            }
            dominance[j] = {on_vc / total, j};
        }
        std::sort(dominance.begin(), dominance.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int j = n; j < 3 * n; ++j)
            coupled.push_back(solver.eigenvalues()(dominance[j].second));
    }

    auto directed = [](const std::vector<std::complex<double>>& from,
                       const std::vector<std::complex<double>>& to) {
        double worst = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, std::abs(p - q));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(coupled, isolated), directed(isolated, coupled));
}

StabilityBoundary sweep_boundary(const NetworkSpec& single_template, const ConverterGain& gain,
                                 int n_min, int n_max, const SweepOptions& opt, int jobs) {
    if (n_min < 1 || n_max < n_min) throw SpecError("sweep_boundary: bad n range");
    StabilityBoundary out;
    out.R_max = opt.R_max;
    out.tol = opt.tol;
    const int count = n_max - n_min + 1;
    out.points.resize(count);
    std::vector<int> evals(count, 0);

    auto work = [&](int idx) {
        const int n = n_min + idx;
        const NetworkSpec spec_n = single_template.replicated(n);
        GlobalFeedback fb;
        fb.gains.assign(n, gain);
        const RStarResult r = max_stable_R(spec_n, fb, opt);
        out.points[idx] = {n, r.R_star, r.multi_crossing};
        evals[idx] = r.evaluations;
    };

    if (jobs <= 1 || count == 1) {
        for (int i = 0; i < count; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        const int workers = std::min(jobs, count);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (int e : evals) out.evaluations += e;
    return out;
}

}  // namespace cplnet
