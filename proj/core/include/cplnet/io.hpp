#pragma once

#include <nlohmann/json_fwd.hpp>

#include <iosfwd>
#include <string>
#include <vector>

#include "cplnet/model.hpp"
#include "cplnet/simulate.hpp"

namespace cplnet {

/// Shortest round-trippable decimal: %.17g.
std::string format_double(double v);

/// RFC-4180 CSV: header row, quoting only where needed, numeric cells at
/// 17 significant digits so repeated runs are byte-identical.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}
    void row(const std::vector<std::string>& cells);
    void numeric_row(const std::vector<double>& cells);

private:
    std::ostream& os_;
};

void write_matrix_csv(std::ostream& os, const Matrix& m);
void write_trace_csv(std::ostream& os, const Trace& trace);
void write_metrics_csv(std::ostream& os, const TraceMetrics& metrics);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Self-contained 960x540 polyline chart, no external assets.
void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series);

NetworkSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const NetworkSpec& spec);

/// Rejects keys outside `allowed` (fail-fast on unknown fields).
void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& context);

}  // namespace cplnet
