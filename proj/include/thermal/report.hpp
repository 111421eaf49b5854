#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "thermal/curves.hpp"
#include "thermal/inference.hpp"

namespace thermal::report {

/// printf("%.9g"); the fixed format of every floating-point value in emitted files.
std::string format_number(double v);

ProteinStatus parse_status(std::string_view s);

struct ResultsTableOptions {
    bool signed_effect = false;  // append a signed_effect_size column
};

/// Header `protein_id,lambda,p_value,p_adjusted,effect_size,status`; rows sorted by
/// p_adjusted (untested proteins last) then protein_id. Untested proteins have empty
/// numeric cells.
void write_results_table(std::ostream& out, std::span<const inference::ComparisonResult> results,
                         const ResultsTableOptions& options = {});
void emit_results_table(std::span<const inference::ComparisonResult> results, const std::filesystem::path& path,
                        const ResultsTableOptions& options = {});
std::vector<inference::ComparisonResult> read_results_table(std::istream& in);

void write_null_distribution(std::ostream& out, const inference::NullDistribution& null);
void emit_null_distribution(const inference::NullDistribution& null, const std::filesystem::path& path);

/// Covariance scaled to unit diagonal; rows/columns with zero variance get correlation 0
/// off the diagonal.
Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& covariance);

/// "***" < 0.001, "**" < 0.01, "*" < 0.05, otherwise "n.s.".
std::string significance_stars(double p_adjusted);

/// Replaces characters outside [A-Za-z0-9._-] so a protein id can name a file.
std::string file_stem(std::string_view protein_id);

struct CurveOptions {
    bool plot = true;
    bool per_condition_correlation = false;
};

/// Writes curves/<id>.csv, curves/<id>_corr.csv (joint model) and, unless disabled,
/// plots/<id>.svg under `out_dir`.
void emit_curves(const inference::ProteinFit& fit, const PredictionGrid& grid, std::optional<double> p_adjusted,
                 const std::filesystem::path& out_dir, const CurveOptions& options = {});

void write_curve_table(std::ostream& out, const PredictionGrid& grid);
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
std::string render_svg(const inference::ProteinFit& fit, const PredictionGrid& grid, std::optional<double> p_adjusted);

}  // namespace thermal::report
