#include "cplnet/control.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <nlohmann/json.hpp>

namespace cplnet {

bool check_controllability(const StateSpace& single) {
    if (single.states() != 2 || single.inputs() != 1)
        throw SpecError("controllability check expects a 2-state single-input system");
    Matrix ctrb(2, 2);
    ctrb.col(0) = single.B.col(0);
    ctrb.col(1) = single.A * single.B.col(0);
    Eigen::JacobiSVD<Matrix> svd(ctrb);
    const double smax = svd.singularValues()(0);
    if (smax == 0.0) return false;
    return svd.singularValues()(1) > 1e-10 * smax;
}

ConverterGain design_individual(const StateSpace& single, std::complex<double> p1,
                                std::complex<double> p2) {
    if (single.states() != 2 || single.inputs() != 1)
        throw SpecError("design_individual expects a 2-state single-input system");
    if (!(p1.real() < 0.0 && p2.real() < 0.0))
        throw SpecError("desired poles must have negative real part");
    const bool conjugate_pair = std::abs(p1.imag() + p2.imag()) <=
                                    1e-12 * (1.0 + std::abs(p1.imag())) &&
                                std::abs(p1.real() - p2.real()) <=
                                    1e-12 * (1.0 + std::abs(p1.real()));
    if (!(conjugate_pair || (p1.imag() == 0.0 && p2.imag() == 0.0)))
        throw SpecError("desired poles must be a conjugate pair or two reals");
    if (!check_controllability(single))
        throw NumericalError("plant is not controllable; cannot place poles");

    // State order [v, i]; B = [0, b]. Feedback d = f_v v + f_i i changes only
    // the i row: trace and determinant matching give the gains in closed form.
    const Matrix& A = single.A;
    const double b = single.B(1, 0);
    if (std::abs(single.B(0, 0)) > 1e-12 * std::abs(b))
        throw SpecError("design_individual expects B = [0, b] (duty drives the current row)");

    const double s1 = (p1 + p2).real();        // pole sum
    const double s2 = (p1 * p2).real();        // pole product
    ConverterGain g;
    g.f_i = (s1 - A(0, 0) - A(1, 1)) / b;
    // det(A + BF) = A00*(A11 + b f_i) - A01*(A10 + b f_v) = s2
    g.f_v = (A(0, 0) * (A(1, 1) + b * g.f_i) - A(0, 1) * A(1, 0) - s2) / (A(0, 1) * b);
    return g;
}

Matrix assemble_global(const GlobalFeedback& fb, int n) {
    if (fb.size() != n) throw SpecError("gain count does not match converter count");
    Matrix F = Matrix::Zero(n, 2 * n);
    for (int k = 0; k < n; ++k) {
        F(k, 2 * k) = fb.gains[k].f_i;
        F(k, 2 * k + 1) = fb.gains[k].f_v;
    }
    return F;
}

Matrix assemble_for_labels(const GlobalFeedback& fb,
                           const std::vector<std::string>& state_labels) {
    const int n = fb.size();
    Matrix F = Matrix::Zero(n, static_cast<int>(state_labels.size()));
    for (int k = 0; k < n; ++k) {
        const std::string ik = "i" + std::to_string(k + 1);
        const std::string vk = "v" + std::to_string(k + 1);
        int ii = -1, vi = -1;
        for (size_t s = 0; s < state_labels.size(); ++s) {
            if (state_labels[s] == ik) ii = static_cast<int>(s);
            if (state_labels[s] == vk) vi = static_cast<int>(s);
        }
        if (ii < 0 || vi < 0)
            throw SpecError("state labels missing converter " + std::to_string(k + 1));
        F(k, ii) = fb.gains[k].f_i;
        F(k, vi) = fb.gains[k].f_v;
    }
    return F;
}

StateSpace closed_loop(const StateSpace& ss, const Matrix& F) {
    if (F.rows() != ss.inputs() || F.cols() != ss.states())
        throw SpecError("feedback matrix dimensions do not match the system");
    StateSpace out = ss;
    out.A = ss.A + ss.B * F;
    return out;
}

GlobalFeedback default_gains(const NetworkSpec& spec, double omega0_scale) {
    spec.validate();
    GlobalFeedback fb;
    for (int k = 0; k < spec.line.n; ++k) {
        const auto& c = spec.converters[k];
        NetworkSpec solo = spec;
        solo.line = {1, 0.0};
        solo.converters = {c};
        solo.loads = {spec.loads[k]};
        const OperatingPoint op = solve_operating_point(solo);
        const StateSpace ss = build_single(c, spec.loads[k], spec.source, op);
        const double w0 = omega0_scale * 0.5 / std::sqrt(c.L * c.C);
        fb.gains.push_back(design_individual(ss, {-w0, w0}, {-w0, -w0}));
    }
    return fb;
}

std::string gains_to_json(const GlobalFeedback& fb) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["gains"] = nlohmann::json::array();
    for (const auto& g : fb.gains) j["gains"].push_back({{"f_i", g.f_i}, {"f_v", g.f_v}});
    return j.dump(2) + "\n";
}

GlobalFeedback gains_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("gains JSON parse error: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != 1)
        throw SpecError("gains JSON must carry schema_version 1");
    for (const auto& [key, _] : j.items())
        if (key != "schema_version" && key != "gains")
            throw SpecError("gains JSON: unknown field '" + key + "'");
    GlobalFeedback fb;
    for (const auto& g : j.at("gains")) {
        for (const auto& [key, _] : g.items())
            if (key != "f_i" && key != "f_v")
                throw SpecError("gains JSON: unknown field '" + key + "'");
        ConverterGain cg{g.at("f_i").get<double>(), g.at("f_v").get<double>()};
        if (!std::isfinite(cg.f_i) || !std::isfinite(cg.f_v))
            throw SpecError("gains JSON: gains must be finite");
        fb.gains.push_back(cg);
    }
    return fb;
}

}  // namespace cplnet
