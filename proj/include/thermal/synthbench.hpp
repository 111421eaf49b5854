#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "thermal/ingest.hpp"

namespace thermal::synth {

enum class CurveFamily { Sigmoid, NonSigmoid, Mixed };

CurveFamily parse_family(std::string_view name);
std::string_view to_string(CurveFamily f);

/// 10 points evenly spaced over [37, 67] C.
std::vector<double> default_gradient();

struct SyntheticSpec {
    int proteins = 50;
    double fraction_perturbed = 0.2;
    CurveFamily family = CurveFamily::Sigmoid;
    std::vector<double> temperatures = default_gradient();
    int replicates = 2;
    double noise_sd = 0.05;        // scaled units
    double tm_shift = 5.0;         // C, sigmoid family
    double amplitude_change = 0.0; // plateau change (sigmoid) or deviation gain (GP-drawn)
    double mean_shift = 0.3;       // scaled units over the upper half of the gradient, GP-drawn family
    std::uint64_t seed = 42;

    /// Throws std::invalid_argument on an inconsistent spec.
    void validate() const;
};

struct LabeledDataset {
    std::vector<ingest::RawMeasurement> measurements;
    std::map<std::string, bool> affected;  // protein_id -> ground truth
};

std::string protein_name(int index);

/// Sigmoid: (1 - p) / (1 + exp(b (T - Tm))) + p. GP-drawn: 0.5 + 0.2 f with f from a unit-variance
/// RBF GP with length scale in [3, 12] C. Noise is added in scaled units, then every protein is
/// mapped to raw intensities by a random positive affine transform.
///
/// Each protein's values depend only on (seed, protein_id). The affected set is the
/// round(fraction * proteins) proteins with the smallest seeded hash.
LabeledDataset generate(const SyntheticSpec& spec);

void write_labels(std::ostream& out, const std::map<std::string, bool>& labels);
std::map<std::string, bool> read_labels(std::istream& in);

struct RocPoint {
    double threshold = 0.0;
    double false_positive_rate = 0.0;
    double true_positive_rate = 0.0;
};

struct OperatingPoint {
    double alpha = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::size_t hits = 0;
};

struct RocResult {
    std::vector<RocPoint> curve;  // starts at (0, 0), ends at (1, 1)
    double auc = 0.0;
    std::vector<OperatingPoint> operating_points;
};

inline constexpr std::array<double, 4> kDefaultAlphas = {0.001, 0.005, 0.01, 0.05};

/// Threshold sweep over scores ascending (smaller is more significant); tied scores enter the
/// curve together. Operating points call a protein a hit when score < alpha. Throws
/// std::invalid_argument unless both classes are present.
RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels,
                    std::span<const double> alphas = kDefaultAlphas);

struct CalibrationReport {
    double ks_statistic = 0.0;
    std::array<std::size_t, 10> bins{};  // [0, 0.1), ..., [0.9, 1.0]
    std::size_t count = 0;
    double fraction_below_005 = 0.0;
};

/// Two-sided Kolmogorov-Smirnov distance to Uniform(0, 1).
double ks_uniform(std::span<const double> p_values);

CalibrationReport calibration_report(std::span<const double> p_values);

}  // namespace thermal::synth
