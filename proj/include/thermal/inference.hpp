#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermal/gp.hpp"
#include "thermal/ingest.hpp"

namespace thermal::inference {

/// -2 * (mll_joint - (mll_control + mll_perturbation)).
double lr_statistic(double mll_joint, double mll_control, double mll_perturbation);

struct ProteinFit {
    std::string protein_id;
    gp::Design control_data;       // original layout
    gp::Design perturbation_data;  // original layout
    gp::Model control;
    gp::Model perturbation;
    gp::Model joint;  // pooled data of both conditions; the null model
    double lambda = 0.0;
};

gp::Design design_of(const ingest::ProteinProfile& profile, Condition condition);

/// Fits the control, perturbation and joint models. Throws FitError if any fit fails.
ProteinFit fit_designs(std::string protein_id, gp::Design control, gp::Design perturbation,
                       const gp::FitConfig& config);
ProteinFit fit_protein(const ingest::ProteinProfile& profile, const gp::FitConfig& config);

struct NullSamples {
    std::vector<double> lambdas;
    int skipped = 0;        // samples abandoned after exhausting retries
    int failed_draws = 0;   // refits that threw, including retried ones
};

/// Draws pseudo-data from the joint model's posterior predictive at the original design
/// points, splits it back into the two conditions index-for-index, refits all three models
/// and records the statistic. A failed refit is retried with a fresh draw up to
/// `max_retries` times before the sample is skipped.
NullSamples sample_null(const ProteinFit& fit, int samples_per_protein, std::uint64_t seed,
                        const gp::FitConfig& config, int max_retries = 3);

struct NullDistribution {
    std::vector<double> samples;        // concatenated in protein-id order
    std::vector<std::string> protein_ids;
    std::vector<std::size_t> counts;    // per protein, after skips
    int samples_per_protein = 0;        // requested
    std::uint64_t seed = 0;
    std::vector<double> sorted;         // ascending copy of samples

    std::size_t size() const { return samples.size(); }
};

struct ProteinNull {
    std::string protein_id;
    std::vector<double> lambdas;
};

/// Concatenates per-protein samples in protein-id order. Throws DataError when the pool is empty.
NullDistribution pool_null(std::vector<ProteinNull> per_protein, int samples_per_protein = 0, std::uint64_t seed = 0);

/// (1 + #{null >= observed}) / (1 + N).
double empirical_pvalue(double observed, const NullDistribution& null);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
std::vector<double> bh_adjust(std::span<const double> p_values);

struct ComparisonResult {
    std::string protein_id;
    ProteinStatus status = ProteinStatus::Ok;
    std::optional<double> lambda;
    std::optional<double> p_value;
    std::optional<double> p_adjusted;
    std::optional<double> effect_size;
    std::optional<double> signed_effect_size;
};

struct InferenceConfig {
    gp::FitConfig fit;
    int samples_per_protein = 1;
    std::uint64_t seed = 42;
    unsigned workers = 1;
    int grid_size = 100;
    int max_null_retries = 3;
};

struct InferenceDiagnostics {
    std::size_t tested = 0;
    std::size_t fit_failed = 0;
    std::size_t null_skipped = 0;
    std::size_t null_failed_draws = 0;
};

struct InferenceOutput {
    std::vector<ComparisonResult> results;  // one per input profile, in input order
    std::vector<ProteinFit> fits;           // successful fits, sorted by protein id
    NullDistribution null;
    InferenceDiagnostics diagnostics;
};

/// fit -> sample null -> pool -> empirical p -> BH -> effect sizes. Output is identical for
/// any worker count. Throws DataError when no profile has status Ok.
InferenceOutput run_inference(std::span<const ingest::ProteinProfile> profiles, const InferenceConfig& config);

}  // namespace thermal::inference
