#ifndef TFLR_IO_HPP
#define TFLR_IO_HPP

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "tflr/bootstrap.hpp"
#include "tflr/errors.hpp"
#include "tflr/grid.hpp"
#include "tflr/simstudy.hpp"
#include "tflr/truncated.hpp"
#include "tflr/tuning.hpp"

namespace tflr {

using Json = nlohmann::json;

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline bool blank(const std::string& s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

inline double parse_field(const std::string& field, const std::string& path, int line_no,
                          int column) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    while (end && *end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == begin || (end && *end != '\0'))
        throw ParseError(path + ":" + std::to_string(line_no) + ": cannot parse field " +
                         std::to_string(column + 1) + " ('" + field + "') as a number");
    if (!std::isfinite(v))
        throw ParseError(path + ":" + std::to_string(line_no) + ": non-finite value in field " +
                         std::to_string(column + 1));
    return v;
}

inline std::vector<std::pair<int, std::string>> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::pair<int, std::string>> lines;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!blank(line)) lines.emplace_back(line_no, line);
    }
    return lines;
}

inline Eigen::VectorXd to_vector(const Json& j) {
    Eigen::VectorXd v(j.size());
    int i = 0;
    for (const auto& value : j) v[i++] = value.get<double>();
    return v;
}

inline Json from_vector(const Eigen::VectorXd& v) {
    Json j = Json::array();
    for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

}  // namespace detail

// Curves file: first row holds the grid points, each subsequent row one
// curve sampled at those points.
inline CurveSet load_curves(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.size() < 2)
        throw ParseError(path + ": need a grid row and at least one curve row");

    const auto grid_fields = detail::split_csv_line(lines[0].second);
    const int g = static_cast<int>(grid_fields.size());
    Eigen::VectorXd points(g);
    for (int c = 0; c < g; ++c)
        points[c] = detail::parse_field(grid_fields[c], path, lines[0].first, c);

    Grid grid;
    try {
        grid = Grid::from_points(std::move(points));
    } catch (const Error& e) {
        throw ParseError(path + ":" + std::to_string(lines[0].first) + ": " + e.what());
    }

    const int n = static_cast<int>(lines.size()) - 1;
    Eigen::MatrixXd values(n, g);
    for (int r = 0; r < n; ++r) {
        const auto& [line_no, line] = lines[r + 1];
        const auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != g)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(g) + " fields, got " +
                             std::to_string(fields.size()));
        for (int c = 0; c < g; ++c)
            values(r, c) = detail::parse_field(fields[c], path, line_no, c);
    }
    return CurveSet::make(std::move(grid), std::move(values));
}

// Responses file: a single-column CSV, one value per observation.
inline Eigen::VectorXd load_responses(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw ParseError(path + ": no response values");
    Eigen::VectorXd y(lines.size());
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto& [line_no, line] = lines[r];
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 1)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected a single column");
        y[static_cast<int>(r)] = detail::parse_field(fields[0], path, line_no, 0);
    }
    return y;
}

// Loads a curves/responses pair and checks the row counts agree.
inline std::pair<CurveSet, Eigen::VectorXd> load_dataset(const std::string& curves_path,
                                                         const std::string& responses_path) {
    CurveSet curves = load_curves(curves_path);
    Eigen::VectorXd y = load_responses(responses_path);
    if (y.size() != curves.n())
        throw ParseError("row count mismatch: " + curves_path + " has " +
                         std::to_string(curves.n()) + " curves but " + responses_path +
                         " has " + std::to_string(y.size()) + " responses");
    return {std::move(curves), std::move(y)};
}

inline void save_curves(const CurveSet& curves, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (int c = 0; c < curves.grid.size(); ++c)
        out << (c ? "," : "") << detail::fmt_double(curves.grid.points[c]);
    out << "\n";
    for (int r = 0; r < curves.n(); ++r) {
        for (int c = 0; c < curves.g(); ++c)
            out << (c ? "," : "") << detail::fmt_double(curves.values(r, c));
        out << "\n";
    }
}

inline void save_responses(const Eigen::VectorXd& y, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (int i = 0; i < y.size(); ++i) out << detail::fmt_double(y[i]) << "\n";
}

// ---- JSON serialisation ----

inline Json to_json(const TruncatedFit& fit, const Grid& grid) {
    Json trace = Json::array();
    for (const ThetaObjective& t : fit.objective_trace)
        trace.push_back({{"theta", t.theta}, {"objective", t.objective}, {"m", t.m_used}});
    return Json{{"method", std::string(1, fit.method)},
                {"a_hat", fit.a_hat},
                {"theta_hat", fit.theta_hat},
                {"m", fit.m},
                {"lambda", fit.lambda},
                {"grid", detail::from_vector(grid.points)},
                {"b_hat", detail::from_vector(fit.b_hat)},
                {"trace", trace}};
}

// Reads back a fit written by to_json; only the prediction-relevant fields
// are required.
inline std::pair<TruncatedFit, Grid> fit_from_json(const Json& j) {
    TruncatedFit fit;
    fit.method = j.at("method").get<std::string>().at(0);
    fit.a_hat = j.at("a_hat").get<double>();
    fit.theta_hat = j.at("theta_hat").get<double>();
    fit.m = j.value("m", 0);
    fit.lambda = j.value("lambda", 0.0);
    Grid grid = Grid::from_points(detail::to_vector(j.at("grid")));
    fit.b_hat = detail::to_vector(j.at("b_hat"));
    if (fit.b_hat.size() != grid.size())
        throw ParseError("fit file: slope length does not match grid");
    return {std::move(fit), std::move(grid)};
}

inline Json to_json(const TuningReport& report) {
    Json records = Json::array();
    for (const LambdaRecord& r : report.records)
        records.push_back({{"lambda", r.lambda},
                           {"theta_lambda", r.theta_lambda},
                           {"v_lambda", r.v_lambda},
                           {"p_b", r.p_b},
                           {"degenerate", r.degenerate}});
    Json bic = Json::array();
    for (const MBicRow& row : report.bic_table)
        bic.push_back({{"m", row.m},
                       {"lambda_star", row.lambda_star},
                       {"bic", row.bic},
                       {"theta_hat", row.theta_hat},
                       {"feasible", row.feasible}});
    return Json{{"lambda_grid", detail::from_vector(report.lambda_grid)},
                {"records", records},
                {"lambda_star", report.lambda_star},
                {"m_star", report.m_star},
                {"bic_table", bic}};
}

inline Json to_json(const SimConfig& c) {
    return Json{{"n", c.n},
                {"grid_size", c.grid_size},
                {"n_components", c.n_components},
                {"decay", c.decay},
                {"model_id", c.model_id},
                {"snr", c.snr},
                {"noise_sd", c.noise_sd},
                {"theta0", c.theta0},
                {"a0", c.a0},
                {"replicates", c.replicates},
                {"seed", c.seed},
                {"m_min", c.m_min},
                {"m_max", c.m_max},
                {"theta_min", c.theta_min},
                {"theta_max", c.theta_max},
                {"lambda_count", c.lambda_count},
                {"lambda_lo_rel", c.lambda_lo_rel},
                {"lambda_hi_rel", c.lambda_hi_rel},
                {"threads", c.threads},
                {"bsimp_k", c.tuning.bsimp_k},
                {"a5_target_observed", c.tuning.a5_target_observed},
                {"sb_b_full_domain_tau", c.tuning.sb_b_full_domain_tau}};
}

inline Json to_json(const StudyReport& report) {
    Json records = Json::array();
    for (const ReplicateRecord& r : report.records) {
        records.push_back({{"replicate", r.replicate},
                           {"ok", r.ok},
                           {"error", r.error},
                           {"theta_a", r.theta_a},
                           {"theta_b", r.theta_b},
                           {"ise_a", r.ise_a},
                           {"ise_b", r.ise_b},
                           {"ise_notrunc", r.ise_notrunc},
                           {"m_a", r.m_a},
                           {"m_pilot", r.m_pilot},
                           {"lambda_a", r.lambda_a},
                           {"lambda_b", r.lambda_b}});
    }
    const StudySummary& s = report.summary;
    Json summary{{"completed", s.completed},
                 {"failed", s.failed},
                 {"mean_theta_a", s.mean_theta_a},
                 {"sd_theta_a", s.sd_theta_a},
                 {"mean_theta_b", s.mean_theta_b},
                 {"sd_theta_b", s.sd_theta_b},
                 {"mean_ise_a", s.mean_ise_a},
                 {"median_ise_a", s.median_ise_a},
                 {"mean_ise_b", s.mean_ise_b},
                 {"median_ise_b", s.median_ise_b},
                 {"mean_ise_notrunc", s.mean_ise_notrunc},
                 {"median_ise_notrunc", s.median_ise_notrunc}};
    return Json{{"config", to_json(report.config)},
                {"b0", detail::from_vector(report.b0)},
                {"summary", summary},
                {"records", records}};
}

inline void write_json(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

// ---- flat CSV / text emitters ----

inline void write_trace_csv(const TruncatedFit& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "theta,objective,m\n";
    for (const ThetaObjective& t : fit.objective_trace)
        out << detail::fmt_double(t.theta) << "," << detail::fmt_double(t.objective) << ","
            << t.m_used << "\n";
}

inline void write_bands_csv(const Grid& grid, const BootstrapBands& bands,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "t,b_hat,lower,upper\n";
    for (int g = 0; g < grid.size(); ++g) {
        const double sd = bands.pointwise_sd[g];
        out << detail::fmt_double(grid.points[g]) << ","
            << detail::fmt_double(bands.b_hat[g]) << ","
            << detail::fmt_double(bands.b_hat[g] - 2.0 * sd) << ","
            << detail::fmt_double(bands.b_hat[g] + 2.0 * sd) << "\n";
    }
}

inline void write_predictions_csv(const Eigen::VectorXd& predictions,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "prediction\n";
    for (int i = 0; i < predictions.size(); ++i)
        out << detail::fmt_double(predictions[i]) << "\n";
}

inline void write_replicates_csv(const StudyReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "replicate,ok,theta_a,theta_b,ise_a,ise_b,ise_notrunc,m_a,m_pilot,"
           "lambda_a,lambda_b,error\n";
    for (const ReplicateRecord& r : report.records) {
        out << r.replicate << "," << (r.ok ? 1 : 0) << "," << detail::fmt_double(r.theta_a)
            << "," << detail::fmt_double(r.theta_b) << "," << detail::fmt_double(r.ise_a)
            << "," << detail::fmt_double(r.ise_b) << ","
            << detail::fmt_double(r.ise_notrunc) << "," << r.m_a << "," << r.m_pilot << ","
            << detail::fmt_double(r.lambda_a) << "," << detail::fmt_double(r.lambda_b) << ","
            << r.error << "\n";
    }
}

// Mean/sd of the truncation-point estimates, one row per model.
inline std::string theta_table_text(const StudyReport& report) {
    const StudySummary& s = report.summary;
    char buf[256];
    std::string out = "Truncation point estimates\n";
    out += "            Method A              Method B\n";
    out += "            Mean      Std. Dev.   Mean      Std. Dev.\n";
    std::snprintf(buf, sizeof(buf), "Model %d     %-9.4f %-11.4f %-9.4f %-9.4f\n",
                  report.config.model_id, s.mean_theta_a, s.sd_theta_a, s.mean_theta_b,
                  s.sd_theta_b);
    out += buf;
    std::snprintf(buf, sizeof(buf), "(%d replicates completed, %d failed)\n", s.completed,
                  s.failed);
    out += buf;
    return out;
}

inline std::string ise_table_text(const StudyReport& report) {
    const StudySummary& s = report.summary;
    char buf[256];
    std::string out = "Integrated squared error of the slope estimate\n";
    out += "Mean\n";
    out += "            Method A      Method B      No Trunc.\n";
    std::snprintf(buf, sizeof(buf), "Model %d     %-13.4f %-13.4f %-13.4f\n",
                  report.config.model_id, s.mean_ise_a, s.mean_ise_b, s.mean_ise_notrunc);
    out += buf;
    out += "Median\n";
    out += "            Method A      Method B      No Trunc.\n";
    std::snprintf(buf, sizeof(buf), "Model %d     %-13.4f %-13.4f %-13.4f\n",
                  report.config.model_id, s.median_ise_a, s.median_ise_b,
                  s.median_ise_notrunc);
    out += buf;
    return out;
}

inline void write_text(const std::string& text, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
}

}  // namespace tflr

#endif
