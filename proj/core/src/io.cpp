#include "cplnet/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

namespace cplnet {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) os_ << ',';
        os_ << csv_escape(cells[i]);
    }
    os_ << "\r\n";
}

void CsvWriter::numeric_row(const std::vector<double>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) os_ << ',';
        os_ << format_double(cells[i]);
    }
    os_ << "\r\n";
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
    CsvWriter w(os);
    for (int i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.cols());
        for (int j = 0; j < m.cols(); ++j) row[j] = m(i, j);
        w.numeric_row(row);
    }
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
    CsvWriter w(os);
    w.row(trace.columns);
    std::vector<double> row(trace.columns.size());
    for (int r = 0; r < trace.rows(); ++r) {
        for (size_t c = 0; c < trace.columns.size(); ++c) row[c] = trace.data[c][r];
        w.numeric_row(row);
    }
}

void write_metrics_csv(std::ostream& os, const TraceMetrics& metrics) {
    CsvWriter w(os);
    w.row({"column", "pkpk", "mean", "min", "max"});
    for (size_t i = 0; i < metrics.columns.size(); ++i) {
        const auto& m = metrics.stats[i];
        w.row({metrics.columns[i], format_double(m.pkpk), format_double(m.mean),
               format_double(m.min), format_double(m.max)});
    }
    w.row({"shutoff_events", std::to_string(metrics.shutoff_events), "", "", ""});
}

namespace {

constexpr int kWidth = 960, kHeight = 540;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double px0 = kMarginL, px1 = kWidth - kMarginR;
    const double py0 = kHeight - kMarginB, py1 = kMarginT;
    auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0); };
    auto sy = [&](double y) { return py0 + (y - ymin) / (ymax - ymin) * (py1 - py0); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << ' '
       << kHeight << "\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"16\">"
       << title << "</text>\n";

    // axes + 5 ticks per axis
    os << "<g stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" "
          "font-size=\"11\">\n";
    os << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px1 << "\" y2=\"" << py0
       << "\"/>\n";
    os << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 << "\" y2=\"" << py1
       << "\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        os << "<line x1=\"" << fmt_coord(sx(fx)) << "\" y1=\"" << py0 << "\" x2=\""
           << fmt_coord(sx(fx)) << "\" y2=\"" << py0 + 5 << "\"/>\n";
        os << "<text x=\"" << fmt_coord(sx(fx)) << "\" y=\"" << py0 + 18
           << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">" << fmt_tick(fx)
           << "</text>\n";
        os << "<line x1=\"" << px0 - 5 << "\" y1=\"" << fmt_coord(sy(fy)) << "\" x2=\"" << px0
           << "\" y2=\"" << fmt_coord(sy(fy)) << "\"/>\n";
        os << "<text x=\"" << px0 - 8 << "\" y=\"" << fmt_coord(sy(fy) + 4)
           << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#333\">" << fmt_tick(fy)
           << "</text>\n";
    }
    os << "</g>\n";
    os << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
       << "</text>\n";
    os << "<text x=\"18\" y=\"" << (py0 + py1) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
          "transform=\"rotate(-90 18 "
       << (py0 + py1) / 2 << ")\">" << y_label << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kSeriesColors[s % 8];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < series[s].x.size(); ++i) {
            if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) continue;
            if (i) os << ' ';
            os << fmt_coord(sx(series[s].x[i])) << ',' << fmt_coord(sy(series[s].y[i]));
        }
        os << "\"/>\n";
        os << "<text x=\"" << px1 - 150 << "\" y=\"" << kMarginT + 16 + 16 * s
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">"
           << series[s].label << "</text>\n";
    }
    os << "</svg>\n";
}

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& context) {
    if (!j.is_object()) throw SpecError(context + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw SpecError(context + ": unknown field '" + key + "'");
    }
}

namespace {

double get_num(const nlohmann::json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw SpecError(ctx + ": missing field '" + key + "'");
    if (!j[key].is_number()) throw SpecError(ctx + ": field '" + key + "' must be a number");
    return j[key].get<double>();
}

}  // namespace

NetworkSpec spec_from_json(const nlohmann::json& j) {
    require_keys(j, {"source", "line", "converters", "loads"}, "spec");
    NetworkSpec s;
    const auto& src = j.at("source");
    require_keys(src, {"V_g"}, "spec.source");
    s.source.V_g = get_num(src, "V_g", "spec.source");

    const auto& line = j.at("line");
    require_keys(line, {"n", "R"}, "spec.line");
    if (!line.contains("n") || !line["n"].is_number_integer())
        throw SpecError("spec.line: 'n' must be an integer");
    s.line.n = line["n"].get<int>();
    s.line.R = get_num(line, "R", "spec.line");

    if (!j.contains("converters") || !j["converters"].is_array())
        throw SpecError("spec: 'converters' must be an array");
    for (const auto& c : j["converters"]) {
        require_keys(c, {"L", "C", "f_sw"}, "spec.converters[]");
        s.converters.push_back({get_num(c, "L", "converter"), get_num(c, "C", "converter"),
                                get_num(c, "f_sw", "converter")});
    }
    if (!j.contains("loads") || !j["loads"].is_array())
        throw SpecError("spec: 'loads' must be an array");
    for (const auto& l : j["loads"]) {
        require_keys(l, {"P", "V_min", "V_max", "V_nominal"}, "spec.loads[]");
        s.loads.push_back({get_num(l, "P", "load"), get_num(l, "V_min", "load"),
                           get_num(l, "V_max", "load"), get_num(l, "V_nominal", "load")});
    }
    s.validate();
    return s;
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["source"] = {{"V_g", spec.source.V_g}};
    j["line"] = {{"n", spec.line.n}, {"R", spec.line.R}};
    j["converters"] = nlohmann::json::array();
    for (const auto& c : spec.converters)
        j["converters"].push_back({{"L", c.L}, {"C", c.C}, {"f_sw", c.f_sw}});
    j["loads"] = nlohmann::json::array();
    for (const auto& l : spec.loads)
        j["loads"].push_back(
            {{"P", l.P}, {"V_min", l.V_min}, {"V_max", l.V_max}, {"V_nominal", l.V_nominal}});
    return j;
}

}  // namespace cplnet
