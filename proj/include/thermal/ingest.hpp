#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thermal/common.hpp"

namespace thermal::ingest {

/// One row of the long-format abundance table.
struct RawMeasurement {
    std::string protein_id;
    Condition condition = Condition::Control;
    int replicate = 1;
    double temperature = 0.0;
    std::optional<double> abundance;  // empty when the cell held a missing-value token
    std::optional<int> psm_count;     // empty when the column is absent or the cell is missing
};

struct FormatOptions {
    char delimiter = '\0';  // '\0' auto-detects tab vs comma from the header line
    std::string control_label = "control";
    std::string perturbation_label = "treatment";
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct ParseDiagnostics {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t missing_abundance = 0;
    bool psm_column_present = false;
    std::vector<RejectedRow> rejected;
};

struct ParsedTable {
    std::vector<RawMeasurement> measurements;
    ParseDiagnostics diagnostics;
};

/// Parses the long format: header with protein_id, condition, replicate, temperature,
/// abundance and optionally psm_count, in any column order.
///
/// Malformed rows are rejected and recorded with their 1-based line number. A missing
/// required column or a duplicated (protein, condition, replicate, temperature) key
/// throws DataError.
ParsedTable parse_table(std::istream& in, const FormatOptions& options = {});

/// Writes measurements back in the long format. Abundances use 17 significant digits so a
/// subsequent parse reproduces them exactly.
void write_table(std::ostream& out, std::span<const RawMeasurement> rows, const FormatOptions& options = {},
                 bool include_psm = true);

bool is_missing_token(std::string_view cell);

struct Observation {
    double temperature = 0.0;
    int replicate = 1;
    double abundance = 0.0;
};

struct ProteinProfile {
    std::string protein_id;
    std::vector<Observation> control;
    std::vector<Observation> perturbation;
    std::optional<int> psm_count;
    int control_replicates = 0;
    int perturbation_replicates = 0;
    ProteinStatus status = ProteinStatus::Ok;

    const std::vector<Observation>& observations(Condition c) const {
        return c == Condition::Control ? control : perturbation;
    }
};

struct FilterOptions {
    int min_psms = 3;
    int min_replicates = 2;
    int min_temperatures = 5;  // distinct temperatures with a present abundance, per condition
};

/// Groups rows by protein (sorted by id) and assigns a status to every protein.
/// Precedence: FilteredPsm, then FilteredReplicates, then FilteredDegenerate.
std::vector<ProteinProfile> filter_proteins(std::span<const RawMeasurement> rows, const FilterOptions& options = {});

struct SampleColumn {
    Condition condition = Condition::Control;
    int replicate = 1;
    double temperature = 0.0;

    auto operator<=>(const SampleColumn&) const = default;
};

struct ColumnScaling {
    SampleColumn column;
    double median = 0.0;
    double factor = 1.0;
};

enum class NormalizationMode {
    ReferenceChannel,  // one factor per (condition, replicate), from the lowest temperature channel
    Column,            // one factor per (condition, replicate, temperature) column
    None,
};

NormalizationMode parse_normalization_mode(std::string_view name);
std::string_view to_string(NormalizationMode mode);

struct NormalizationReport {
    NormalizationMode mode = NormalizationMode::ReferenceChannel;
    std::vector<ColumnScaling> columns;  // sorted by column
    double reference_median = 0.0;       // Column mode
    double reference_temperature = 0.0;  // ReferenceChannel mode
    std::size_t reference_proteins = 0;  // ReferenceChannel mode: proteins seen in every sample there
};

/// ReferenceChannel: at the lowest temperature, each protein's log abundance is compared
/// with its mean over all samples; the sample factor is exp(-median log ratio), centred so
/// the factors have geometric mean 1, and applies to every temperature of that sample.
/// Channels at higher temperatures are never equalized, so melting shifts are kept.
/// Requires at least one protein with a positive abundance in every sample at that channel.
///
/// Column: scales each (condition, replicate, temperature) column so its median equals the
/// median of all column medians.
///
/// Missing abundances stay missing in every mode.
std::pair<std::vector<RawMeasurement>, NormalizationReport> median_normalize(
    std::span<const RawMeasurement> rows, NormalizationMode mode = NormalizationMode::ReferenceChannel);

/// Joint min-max scaling over both conditions. A zero range yields FilteredDegenerate.
ProteinProfile min_max_scale(ProteinProfile profile);

struct FilterCounts {
    std::size_t total = 0;
    std::size_t ok = 0;
    std::size_t filtered_psm = 0;
    std::size_t filtered_replicates = 0;
    std::size_t filtered_degenerate = 0;
};

FilterCounts count_statuses(std::span<const ProteinProfile> profiles);

struct PreparedData {
    std::vector<ProteinProfile> profiles;  // every input protein, sorted by id
    NormalizationReport normalization;
    FilterCounts counts;
};

/// filter -> median-normalize the passing proteins -> joint min-max scale.
PreparedData prepare_profiles(std::span<const RawMeasurement> rows, const FilterOptions& options = {},
                              NormalizationMode normalization = NormalizationMode::ReferenceChannel);

}  // namespace thermal::ingest
