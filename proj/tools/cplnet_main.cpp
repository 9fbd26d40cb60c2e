// cplnet: stability analysis and simulation of DC feeder networks of buck
// converters driving constant power loads.
//
// Exit codes: 0 success, 2 config error, 3 model/feasibility error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "cplnet/analysis.hpp"
#include "cplnet/control.hpp"
#include "cplnet/io.hpp"
#include "cplnet/model.hpp"
#include "cplnet/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cplnet;

namespace {

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SpecError(std::string("config JSON parse error: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != 1)
        throw SpecError("config must carry \"schema_version\": 1");
    return j;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw SpecError("cannot open output file '" + (dir / name).string() + "'");
    return os;
}

CouplingConvention coupling_from(const json& j, const std::string& ctx) {
    if (!j.contains("coupling")) return CouplingConvention::PaperExact;
    const std::string c = j["coupling"].get<std::string>();
    if (c == "paper_exact") return CouplingConvention::PaperExact;
    if (c == "physical_averaged") return CouplingConvention::PhysicalAveraged;
    throw SpecError(ctx + ": coupling must be paper_exact or physical_averaged");
}

DesignVariant design_from(const json& block, const std::string& ctx) {
    if (!block.contains("design") || block["design"].is_null()) return std::monostate{};
    const json& d = block["design"];
    require_keys(d, {"variant", "R_s", "R_f", "C_f", "C_s"}, ctx + ".design");
    const std::string v = d.at("variant").get<std::string>();
    if (v == "none") return std::monostate{};
    if (v == "output_shunt_r") return OutputShuntR{d.at("R_s").get<double>()};
    if (v == "input_ground_rc")
        return InputGroundRC{d.at("R_f").get<double>(), d.at("C_f").get<double>()};
    if (v == "input_shunt_c") return InputShuntC{d.at("C_s").get<double>()};
    throw SpecError(ctx + ": unknown design variant '" + v + "'");
}

GlobalFeedback gains_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open gains file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return gains_from_json(text);
}

// Open loop = all-zero gains; closed loop when the block names a gains file.
GlobalFeedback gains_for(const json& block, const NetworkSpec& spec) {
    if (block.contains("gains") && !block["gains"].is_null()) {
        GlobalFeedback fb = gains_from_file(block["gains"].get<std::string>());
        if (fb.size() != spec.line.n)
            throw SpecError("gains file has " + std::to_string(fb.size()) +
                            " entries for an n=" + std::to_string(spec.line.n) + " network");
        return fb;
    }
    GlobalFeedback fb;
    fb.gains.assign(spec.line.n, ConverterGain{0.0, 0.0});
    return fb;
}

std::vector<double> r_set_from(const json& block) {
    if (!block.contains("R_set")) return default_R_set();
    const json& r = block["R_set"];
    require_keys(r, {"min", "max", "points"}, "R_set");
    return log_grid(r.at("min").get<double>(), r.at("max").get<double>(),
                    r.at("points").get<int>());
}

int cmd_analyze(const json& cfg, const NetworkSpec& spec, const fs::path& out) {
    json block = cfg.value("analyze", json::object());
    require_keys(block, {"coupling", "gains", "design", "margin"}, "analyze");
    const auto coupling = coupling_from(block, "analyze");
    const double margin = block.value("margin", 0.0);

    const OperatingPoint op = solve_operating_point(spec);
    StateSpace ss = build_network(spec, op, coupling);
    ss = apply_design(ss, spec, op, design_from(block, "analyze"), coupling);
    const GlobalFeedback fb = gains_for(block, spec);
    const Matrix A = ss.A + ss.B * assemble_for_labels(fb, ss.state_labels);

    {
        auto os = open_out(out, "A.csv");
        write_matrix_csv(os, A);
    }
    const Spectrum s = eigenvalues(A);
    {
        auto os = open_out(out, "eigenvalues.csv");
        CsvWriter w(os);
        w.row({"index", "real", "imag"});
        for (size_t i = 0; i < s.eigenvalues.size(); ++i)
            w.row({std::to_string(i), format_double(s.eigenvalues[i].real()),
                   format_double(s.eigenvalues[i].imag())});
    }
    std::cout << (is_stable(s, margin) ? "STABLE" : "UNSTABLE")
              << " max Re lambda = " << format_double(s.max_real_part) << " s^-1\n";
    return 0;
}

int cmd_gains(const json& cfg, const NetworkSpec& spec, const fs::path& out) {
    json block = cfg.value("gains", json::object());
    require_keys(block, {"omega0_scale", "poles"}, "gains");

    GlobalFeedback fb;
    if (block.contains("poles")) {
        const auto p = block["poles"].get<std::vector<std::vector<double>>>();
        if (p.size() != 2 || p[0].size() != 2 || p[1].size() != 2)
            throw SpecError("gains.poles must be [[re, im], [re, im]]");
        const std::complex<double> p1{p[0][0], p[0][1]}, p2{p[1][0], p[1][1]};
        for (int k = 0; k < spec.line.n; ++k) {
            NetworkSpec solo = spec;
            solo.line = {1, 0.0};
            solo.converters = {spec.converters[k]};
            solo.loads = {spec.loads[k]};
            const OperatingPoint op = solve_operating_point(solo);
            const StateSpace ss =
                build_single(spec.converters[k], spec.loads[k], spec.source, op);
            if (!check_controllability(ss))
                throw InfeasibleError("single-converter plant is not controllable", k);
            fb.gains.push_back(design_individual(ss, p1, p2));
        }
    } else {
        fb = default_gains(spec, block.value("omega0_scale", 1.0));
    }

    auto os = open_out(out, "gains.json");
    os << gains_to_json(fb);
    for (int k = 0; k < fb.size(); ++k)
        std::cout << "converter " << k + 1 << ": f_i = " << format_double(fb.gains[k].f_i)
                  << ", f_v = " << format_double(fb.gains[k].f_v) << "\n";
    return 0;
}

int cmd_sweep_r(const json& cfg, const NetworkSpec& spec, const fs::path& out) {
    json block = cfg.value("sweep_r", json::object());
    require_keys(block, {"R_max", "tol", "grid_points", "gains", "coupling", "design"},
                 "sweep_r");
    SweepOptions opt;
    opt.R_max = block.value("R_max", 10.0);
    opt.tol = block.value("tol", 1e-6);
    opt.grid_points = block.value("grid_points", 1000);
    opt.coupling = coupling_from(block, "sweep_r");
    opt.design = design_from(block, "sweep_r");
    const GlobalFeedback fb = gains_for(block, spec);

    const OperatingPoint op = solve_operating_point(spec);
    {
        auto os = open_out(out, "sweep_r_grid.csv");
        CsvWriter w(os);
        w.row({"R_ohm", "max_re_lambda", "verdict"});
        for (int i = 1; i <= opt.grid_points; ++i) {
            const double R = opt.R_max * i / opt.grid_points;
            const double mre =
                eigenvalues(closed_loop_matrix(spec, op, fb, R, opt.design, opt.coupling))
                    .max_real_part;
            w.row({format_double(R), format_double(mre), mre < 0.0 ? "STABLE" : "UNSTABLE"});
        }
    }
    const RStarResult r = max_stable_R(spec, fb, opt);
    {
        auto os = open_out(out, "boundary.csv");
        CsvWriter w(os);
        w.row({"n", "R_star_ohm", "multi_crossing"});
        w.row({std::to_string(spec.line.n), format_double(r.R_star),
               r.multi_crossing ? "1" : "0"});
    }
    std::cout << "R_star = " << format_double(r.R_star) << " ohm ("
              << r.evaluations << " eigensolves)\n";
    return 0;
}

int cmd_sweep_n(const json& cfg, const NetworkSpec& spec, const fs::path& out, int jobs) {
    json block = cfg.value("sweep_n", json::object());
    require_keys(block,
                 {"n_min", "n_max", "R_max", "tol", "grid_points", "gains", "coupling",
                  "critical_n_at_R", "critical_n_max"},
                 "sweep_n");
    const int n_min = block.value("n_min", 2);
    const int n_max = block.value("n_max", 8);
    if (n_min < 1 || n_max < n_min) throw SpecError("sweep_n: empty n range");
    SweepOptions opt;
    opt.R_max = block.value("R_max", 10.0);
    opt.tol = block.value("tol", 1e-6);
    opt.grid_points = block.value("grid_points", 1000);
    opt.coupling = coupling_from(block, "sweep_n");

    GlobalFeedback fb = gains_for(block, spec);
    const NetworkSpec tmpl = spec.replicated(1);
    const StabilityBoundary boundary =
        sweep_boundary(tmpl, fb.gains.front(), n_min, n_max, opt, jobs);

    {
        auto os = open_out(out, "boundary.csv");
        CsvWriter w(os);
        w.row({"n", "R_star_ohm", "multi_crossing"});
        for (const auto& p : boundary.points)
            w.row({std::to_string(p.n), format_double(p.R_star),
                   p.multi_crossing ? "1" : "0"});
    }
    {
        SvgSeries series{"R_star(n)", {}, {}};
        for (const auto& p : boundary.points) {
            if (!std::isfinite(p.R_star)) continue;
            series.x.push_back(p.n);
            series.y.push_back(p.R_star);
        }
        auto os = open_out(out, "boundary.svg");
        write_svg_chart(os, "Stability boundary of the cascaded-converter feeder",
                        "number of converters", "largest stable line resistance (ohm)",
                        {series});
    }
    if (block.contains("critical_n_at_R")) {
        const double R = block["critical_n_at_R"].get<double>();
        const int nmax = block.value("critical_n_max", 50);
        const CriticalNResult cn = critical_n(tmpl, fb.gains.front(), R, nmax, opt.coupling);
        auto os = open_out(out, "critical_n.csv");
        CsvWriter w(os);
        w.row({"R_ohm", "N0", "found", "n_checked"});
        w.row({format_double(R), std::to_string(cn.N0), cn.found ? "1" : "0",
               std::to_string(cn.n_checked)});
        std::cout << "critical n at R = " << format_double(R) << ": "
                  << (cn.found ? std::to_string(cn.N0) : "not found") << "\n";
    }
    std::cout << "boundary computed for n in [" << n_min << ", " << n_max << "] ("
              << boundary.evaluations << " eigensolves)\n";
    return 0;
}

Controller controller_from(const json& block, const NetworkSpec& spec) {
    if (!block.contains("controller")) throw SpecError("simulate: missing controller");
    const json& c = block["controller"];
    require_keys(c, {"type", "duty", "k_p", "v_ref", "gains"}, "simulate.controller");
    const std::string type = c.at("type").get<std::string>();
    const int n = spec.line.n;
    if (type == "open_loop") {
        Vector duty(n);
        if (c.contains("duty")) {
            const auto d = c["duty"].get<std::vector<double>>();
            if (static_cast<int>(d.size()) != n)
                throw SpecError("simulate.controller.duty must list one duty per converter");
            for (int k = 0; k < n; ++k) duty[k] = d[k];
        } else {
            const OperatingPoint op = solve_operating_point(spec);
            duty = op.duty;
        }
        return OpenLoopCtl{duty};
    }
    if (type == "proportional") {
        const OperatingPoint op = solve_operating_point(spec);
        ProportionalCtl ctl;
        ctl.k_p = c.at("k_p").get<double>();
        ctl.v_ref = c.value("v_ref", spec.loads[0].V_nominal);
        ctl.duty0 = op.duty;
        return ctl;
    }
    if (type == "state_feedback") {
        StateFeedbackCtl ctl;
        ctl.gains = gains_from_file(c.at("gains").get<std::string>());
        if (ctl.gains.size() != n) throw SpecError("state feedback gains size mismatch");
        ctl.op = solve_operating_point(spec);
        return ctl;
    }
    throw SpecError("simulate: unknown controller type '" + type + "'");
}

int cmd_simulate(const json& cfg, const NetworkSpec& spec, const fs::path& out) {
    json block = cfg.value("simulate", json::object());
    require_keys(block,
                 {"model", "dt", "t_end", "decimate", "controller", "design", "initial",
                  "window"},
                 "simulate");
    SimConfig sim;
    const std::string model = block.value("model", std::string("averaged"));
    if (model == "switched")
        sim.model = SimModel::Switched;
    else if (model == "averaged")
        sim.model = SimModel::Averaged;
    else
        throw SpecError("simulate.model must be switched or averaged");
    sim.dt = block.value("dt", sim.model == SimModel::Switched
                                   ? spec.converters[0].period() / 100.0
                                   : 1e-6);
    if (!block.contains("t_end")) throw SpecError("simulate: missing t_end");
    sim.t_end = block["t_end"].get<double>();
    sim.decimate = block.value("decimate", 1);
    sim.design = design_from(block, "simulate");
    sim.controller = controller_from(block, spec);
    if (block.contains("initial")) {
        const json& ini = block["initial"];
        require_keys(ini, {"i", "v", "design"}, "simulate.initial");
        auto to_vec = [&](const json& arr) {
            const auto v = arr.get<std::vector<double>>();
            return Eigen::Map<const Vector>(v.data(), v.size()).eval();
        };
        if (ini.contains("i")) sim.initial_i = to_vec(ini["i"]);
        if (ini.contains("v")) sim.initial_v = to_vec(ini["v"]);
        if (ini.contains("design")) sim.initial_design = to_vec(ini["design"]);
    }

    Trace trace;
    bool diverged = false;
    double diverged_at = 0.0;
    try {
        trace = sim.model == SimModel::Switched ? simulate_switched(spec, sim)
                                                : simulate_averaged(spec, sim);
    } catch (DivergenceError& e) {
        trace = std::move(e.trace);
        diverged = true;
        diverged_at = trace.rows() ? trace.data[0].back() : 0.0;
    }

    {
        auto os = open_out(out, "trace.csv");
        write_trace_csv(os, trace);
    }
    {
        std::vector<SvgSeries> series;
        const auto& t = trace["t"];
        for (int k = 1; k <= spec.line.n; ++k) {
            const std::string name = "V" + std::to_string(k);
            series.push_back({name, t, trace[name]});
        }
        auto os = open_out(out, "trace.svg");
        write_svg_chart(os, "Output voltages", "time (s)", "voltage (V)", series);
    }
    if (diverged) {
        std::cout << "DIVERGED at t = " << format_double(diverged_at)
                  << " s; truncated trace written\n";
        return 4;
    }
    double w1 = 0.8 * sim.t_end, w2 = sim.t_end;
    if (block.contains("window")) {
        const auto w = block["window"].get<std::vector<double>>();
        if (w.size() != 2) throw SpecError("simulate.window must be [t1, t2]");
        w1 = w[0];
        w2 = w[1];
    }
    const TraceMetrics metrics = trace_metrics(trace, w1, w2);
    {
        auto os = open_out(out, "metrics.csv");
        write_metrics_csv(os, metrics);
    }
    std::cout << "simulated " << format_double(sim.t_end) << " s; V1 pk-pk over window = "
              << format_double(metrics.of("V1").pkpk) << " V\n";
    return 0;
}

int cmd_design(const json& cfg, const NetworkSpec& spec, const fs::path& out) {
    json block = cfg.value("design", json::object());
    require_keys(block,
                 {"variant", "R_s", "R_f", "C_f", "Cs_bracket", "R_set", "R_max_search",
                  "gains", "coupling"},
                 "design");
    const std::string variant = block.at("variant").get<std::string>();
    const auto coupling = coupling_from(block, "design");
    const GlobalFeedback fb = gains_for(block, spec);
    const std::vector<double> R_set = r_set_from(block);
    const OperatingPoint op = solve_operating_point(spec);

    auto grid_rows = [&](const DesignVariant& d, CsvWriter& w) {
        for (double R : R_set) {
            const double mre =
                eigenvalues(closed_loop_matrix(spec, op, fb, R, d, coupling)).max_real_part;
            w.row({design_name(d), format_double(R), format_double(mre),
                   mre < 0.0 ? "STABLE" : "UNSTABLE"});
        }
    };

    auto os = open_out(out, "design_report.csv");
    CsvWriter w(os);
    if (variant == "output_shunt_r") {
        const double R_s = block.at("R_s").get<double>();
        const DesignReport rep = evaluate_output_shunt(spec, fb, R_s, coupling);
        w.row({"variant", "R_s_ohm", "stable_at_spec_R", "loss_watts", "efficiency"});
        w.row({design_name(rep.variant), format_double(R_s), rep.stable ? "1" : "0",
               format_double(rep.loss_watts), format_double(rep.efficiency)});
        w.row({"variant", "R_ohm", "max_re_lambda", "verdict"});
        grid_rows(OutputShuntR{R_s}, w);
        std::cout << "output shunt " << format_double(R_s)
                  << " ohm: efficiency = " << format_double(rep.efficiency) << "\n";
    } else if (variant == "input_ground_rc") {
        const double R_f = block.at("R_f").get<double>();
        const double C_f = block.at("C_f").get<double>();
        const DesignReport rep =
            evaluate_input_rc(spec, fb, R_f, C_f, block.value("R_max_search", 10.0), coupling);
        w.row({"variant", "R_f_ohm", "C_f_farad", "R_star_ohm"});
        w.row({design_name(rep.variant), format_double(R_f), format_double(C_f),
               format_double(rep.R_star)});
        w.row({"variant", "R_ohm", "max_re_lambda", "verdict"});
        grid_rows(InputGroundRC{R_f, C_f}, w);
        std::cout << "input RC (" << format_double(R_f) << " ohm, " << format_double(C_f)
                  << " F): R_star = " << format_double(rep.R_star) << " ohm\n";
    } else if (variant == "input_shunt_c") {
        double lo = 1e-6, hi = 1.0;
        if (block.contains("Cs_bracket")) {
            const auto b = block["Cs_bracket"].get<std::vector<double>>();
            if (b.size() != 2) throw SpecError("design.Cs_bracket must be [lo, hi]");
            lo = b[0];
            hi = b[1];
        }
        const CsStarResult cs = min_stabilizing_Cs(spec, fb, R_set, lo, hi, coupling);
        w.row({"variant", "C_s_star_farad", "constraint_active", "worst_max_re_lambda"});
        w.row({"input_shunt_c", format_double(cs.C_s_star), cs.constraint_active ? "1" : "0",
               format_double(cs.worst_max_re)});
        w.row({"variant", "R_ohm", "max_re_lambda", "verdict"});
        grid_rows(InputShuntC{cs.C_s_star}, w);
        std::cout << "input shunt C: C_s_star = " << format_double(cs.C_s_star) << " F ("
                  << (cs.constraint_active ? "constraint active" : "constraint inactive")
                  << ")\n";
    } else {
        throw SpecError("design: unknown variant '" + variant + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DC network of buck converters driving constant power loads: "
                 "small-signal stability analysis, passive-design evaluation, simulation"};
    app.require_subcommand(1);
    app.fallthrough();  // accept --config/--out/--jobs after the subcommand too

    std::string config_path, out_dir = ".";
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--out", out_dir, "output directory (default: current)");
    app.add_option("--jobs", jobs, "worker threads for sweeps");

    auto* analyze = app.add_subcommand("analyze", "eigenvalues and stability verdict");
    auto* sweep_r = app.add_subcommand("sweep-r", "stability boundary in line resistance");
    auto* sweep_n = app.add_subcommand("sweep-n", "boundary R_star(n) across network sizes");
    auto* simulate = app.add_subcommand("simulate", "switched or averaged time simulation");
    auto* design = app.add_subcommand("design", "evaluate a passive stabilization circuit");
    auto* gains = app.add_subcommand("gains", "design per-converter state-feedback gains");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const json cfg = load_config(config_path);
        require_keys(cfg,
                     {"schema_version", "seed", "spec", "analyze", "sweep_r", "sweep_n",
                      "simulate", "design", "gains"},
                     "config");
        if (!cfg.contains("spec")) throw SpecError("config: missing spec");
        const NetworkSpec spec = spec_from_json(cfg["spec"]);
        const fs::path out(out_dir);

        if (analyze->parsed()) return cmd_analyze(cfg, spec, out);
        if (sweep_r->parsed()) return cmd_sweep_r(cfg, spec, out);
        if (sweep_n->parsed()) return cmd_sweep_n(cfg, spec, out, std::max(jobs, 1));
        if (simulate->parsed()) return cmd_simulate(cfg, spec, out);
        if (design->parsed()) return cmd_design(cfg, spec, out);
        if (gains->parsed()) return cmd_gains(cfg, spec, out);
        return 2;
    } catch (const SpecError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InfeasibleError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const ConvergenceError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
