#include "thermal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace thermal::report {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw IoError("error while writing " + path.string());
}

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::optional<double> parse_cell(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

std::string xml_escape(std::string_view in) {
    std::string out;
    for (char c : in) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string format_number(double v) {
    if (!std::isfinite(v)) throw std::runtime_error("refusing to write a non-finite value");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

ProteinStatus parse_status(std::string_view s) {
    for (auto st : {ProteinStatus::Ok, ProteinStatus::FilteredPsm, ProteinStatus::FilteredReplicates,
                    ProteinStatus::FilteredDegenerate, ProteinStatus::FitFailed}) {
        if (to_string(st) == s) return st;
    }
    throw DataError("unknown status '" + std::string(s) + "'");
}

void write_results_table(std::ostream& out, std::span<const inference::ComparisonResult> results,
                         const ResultsTableOptions& options) {
    std::vector<const inference::ComparisonResult*> rows;
    for (const auto& r : results) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
        const double pa = a->p_adjusted.value_or(INFINITY);
        const double pb = b->p_adjusted.value_or(INFINITY);
        return pa != pb ? pa < pb : a->protein_id < b->protein_id;
    });

    out << "protein_id,lambda,p_value,p_adjusted,effect_size,status";
    if (options.signed_effect) out << ",signed_effect_size";
    out << '\n';
    for (const auto* r : rows) {
        out << r->protein_id << ',' << cell(r->lambda) << ',' << cell(r->p_value) << ',' << cell(r->p_adjusted) << ','
            << cell(r->effect_size) << ',' << to_string(r->status);
        if (options.signed_effect) out << ',' << cell(r->signed_effect_size);
        out << '\n';
    }
}

void emit_results_table(std::span<const inference::ComparisonResult> results, const fs::path& path,
                        const ResultsTableOptions& options) {
    if (results.empty()) throw DataError("no results to write");
    auto out = open_output(path);
    write_results_table(out, results, options);
    finish(out, path);
}

std::vector<inference::ComparisonResult> read_results_table(std::istream& in) {
    std::vector<inference::ComparisonResult> rows;
    std::string line;
    std::getline(in, line);
    const bool has_signed = line.find("signed_effect_size") != std::string::npos;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() < 6) throw DataError("results row has too few cells: " + line);
        inference::ComparisonResult r;
        r.protein_id = c[0];
        r.lambda = parse_cell(c[1]);
        r.p_value = parse_cell(c[2]);
        r.p_adjusted = parse_cell(c[3]);
        r.effect_size = parse_cell(c[4]);
        r.status = parse_status(c[5]);
        if (has_signed && c.size() > 6) r.signed_effect_size = parse_cell(c[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_null_distribution(std::ostream& out, const inference::NullDistribution& null) {
    out << "lambda\n";
    for (double v : null.samples) out << format_number(v) << '\n';
}

void emit_null_distribution(const inference::NullDistribution& null, const fs::path& path) {
    auto out = open_output(path);
    write_null_distribution(out, null);
    finish(out, path);
}

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& covariance) {
    const auto n = covariance.rows();
    Eigen::VectorXd sd = covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd corr(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i == j) {
                corr(i, j) = 1.0;
            } else if (sd[i] > 0.0 && sd[j] > 0.0) {
                corr(i, j) = std::clamp(covariance(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
            } else {
                corr(i, j) = 0.0;
            }
        }
    }
    return corr;
}

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "n.s.";
}

std::string file_stem(std::string_view protein_id) {
    std::string s(protein_id);
    for (char& c : s) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_' || c == '-';
        if (!ok) c = '_';
    }
    if (s.empty() || s == "." || s == "..") s = "_" + s;
    return s;
}

void write_curve_table(std::ostream& out, const PredictionGrid& grid) {
    out << "temperature,control_mean,control_sd,perturbation_mean,perturbation_sd\n";
    for (std::size_t i = 0; i < grid.temperatures.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << format_number(grid.temperatures[i]) << ',' << format_number(grid.control.mean[k]) << ','
            << format_number(grid.control.sd[k]) << ',' << format_number(grid.perturbation.mean[k]) << ','
            << format_number(grid.perturbation.sd[k]) << '\n';
    }
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_number(m(i, j));
        }
        out << '\n';
    }
}

std::string render_svg(const inference::ProteinFit& fit, const PredictionGrid& grid, std::optional<double> p_adjusted) {
    constexpr double width = 640, height = 420, left = 60, right = 20, top = 40, bottom = 50;
    const auto& t = grid.temperatures;
    const double t_lo = t.front();
    const double t_hi = t.back();

    double y_lo = 0.0;
    double y_hi = 1.0;
    auto widen = [&](double v) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
    };
    for (const auto* c : {&grid.control, &grid.perturbation}) {
        for (Eigen::Index i = 0; i < c->mean.size(); ++i) {
            widen(c->mean[i] - 2.0 * c->sd[i]);
            widen(c->mean[i] + 2.0 * c->sd[i]);
        }
    }
    for (const auto* d : {&fit.control_data, &fit.perturbation_data}) {
        for (double y : d->y) widen(y);
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    auto sx = [&](double v) { return left + (v - t_lo) / (t_hi - t_lo) * (width - left - right); };
    auto sy = [&](double v) { return top + (y_hi - v) / (y_hi - y_lo) * (height - top - bottom); };

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    // axes
    s << "<line x1=\"" << left << "\" y1=\"" << coord(height - bottom) << "\" x2=\"" << coord(width - right)
      << "\" y2=\"" << coord(height - bottom) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << coord(height - bottom)
      << "\" stroke=\"black\"/>\n";
    for (double tick : {t_lo, 0.5 * (t_lo + t_hi), t_hi}) {
        s << "<text x=\"" << coord(sx(tick)) << "\" y=\"" << coord(height - bottom + 18)
          << "\" font-size=\"12\" text-anchor=\"middle\">" << coord(tick) << "</text>\n";
    }
    for (double tick : {0.0, 0.5, 1.0}) {
        s << "<text x=\"" << coord(left - 6) << "\" y=\"" << coord(sy(tick) + 4)
          << "\" font-size=\"12\" text-anchor=\"end\">" << coord(tick) << "</text>\n";
    }
    s << "<text x=\"" << coord(0.5 * (left + width - right)) << "\" y=\"" << coord(height - 12)
      << "\" font-size=\"13\" text-anchor=\"middle\">Temperature (C)</text>\n"
      << "<text x=\"16\" y=\"" << coord(0.5 * (top + height - bottom))
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << coord(0.5 * (top + height - bottom)) << ")\">Scaled abundance</text>\n";

    struct Style {
        const ConditionCurve* curve;
        const gp::Design* data;
        const char* name;
        const char* color;
    };
    const Style styles[] = {{&grid.control, &fit.control_data, "control", "#1f77b4"},
                            {&grid.perturbation, &fit.perturbation_data, "perturbation", "#2ca02c"}};
    for (const auto& st : styles) {
        s << "<polygon class=\"band " << st.name << "\" fill=\"" << st.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            s << coord(sx(t[i])) << ',' << coord(sy(st.curve->mean[k] + 2.0 * st.curve->sd[k])) << ' ';
        }
        for (std::size_t i = t.size(); i-- > 0;) {
            const auto k = static_cast<Eigen::Index>(i);
            s << coord(sx(t[i])) << ',' << coord(sy(st.curve->mean[k] - 2.0 * st.curve->sd[k])) << ' ';
        }
        s << "\"/>\n";
    }
    for (const auto& st : styles) {
        s << "<polyline class=\"mean " << st.name << "\" fill=\"none\" stroke=\"" << st.color
          << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < t.size(); ++i) {
            s << coord(sx(t[i])) << ',' << coord(sy(st.curve->mean[static_cast<Eigen::Index>(i)])) << ' ';
        }
        s << "\"/>\n";
        for (std::size_t i = 0; i < st.data->size(); ++i) {
            s << "<circle class=\"data " << st.name << "\" cx=\"" << coord(sx(st.data->x[i])) << "\" cy=\""
              << coord(sy(st.data->y[i])) << "\" r=\"3\" fill=\"" << st.color << "\"/>\n";
        }
    }

    s << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << xml_escape(fit.protein_id) << "</text>\n";
    if (p_adjusted) {
        s << "<text x=\"" << coord(width - right) << "\" y=\"24\" font-size=\"13\" text-anchor=\"end\">p_adj = "
          << format_number(*p_adjusted) << ' ' << significance_stars(*p_adjusted) << "</text>\n";
    }
    s << "<text x=\"" << coord(width - right - 110) << "\" y=\"" << top + 12
      << "\" font-size=\"12\" fill=\"#1f77b4\">control</text>\n"
      << "<text x=\"" << coord(width - right - 110) << "\" y=\"" << top + 28
      << "\" font-size=\"12\" fill=\"#2ca02c\">perturbation</text>\n"
      << "</svg>\n";
    return s.str();
}

void emit_curves(const inference::ProteinFit& fit, const PredictionGrid& grid, std::optional<double> p_adjusted,
                 const fs::path& out_dir, const CurveOptions& options) {
    const auto stem = file_stem(fit.protein_id);
    std::error_code ec;
    fs::create_directories(out_dir / "curves", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "curves").string() + ": " + ec.message());

    {
        const auto path = out_dir / "curves" / (stem + ".csv");
        auto out = open_output(path);
        write_curve_table(out, grid);
        finish(out, path);
    }
    {
        const auto joint = curve_on(fit.joint, grid.temperatures);
        const auto path = out_dir / "curves" / (stem + "_corr.csv");
        auto out = open_output(path);
        write_matrix(out, correlation_from_covariance(joint.covariance));
        finish(out, path);
    }
    if (options.per_condition_correlation) {
        for (const auto& [suffix, curve] : {std::pair{"_control_corr.csv", &grid.control},
                                            std::pair{"_perturbation_corr.csv", &grid.perturbation}}) {
            const auto path = out_dir / "curves" / (stem + suffix);
            auto out = open_output(path);
            write_matrix(out, correlation_from_covariance(curve->covariance));
            finish(out, path);
        }
    }
    if (options.plot) {
        fs::create_directories(out_dir / "plots", ec);
        if (ec) throw IoError("cannot create " + (out_dir / "plots").string() + ": " + ec.message());
        const auto path = out_dir / "plots" / (stem + ".svg");
        auto out = open_output(path);
        out << render_svg(fit, grid, p_adjusted);
        finish(out, path);
    }
}

}  // namespace thermal::report
