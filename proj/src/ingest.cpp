#include "thermal/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace thermal::ingest {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

template <typename T>
bool parse_number(std::string_view cell, T& value) {
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    return ec == std::errc{} && ptr == end;
}

constexpr std::array<std::string_view, 5> kRequired = {"protein_id", "condition", "replicate", "temperature", "abundance"};

std::string format_key(const RawMeasurement& m) {
    std::ostringstream os;
    os << m.protein_id << ", " << to_string(m.condition) << ", replicate " << m.replicate << ", " << m.temperature
       << " C";
    return os.str();
}

double median_of(std::vector<double> v) {
    const auto n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower_value = *std::max_element(v.begin(), mid);
    return 0.5 * (lower_value + upper);
}

}  // namespace

bool is_missing_token(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return true;
    const auto l = lower(cell);
    return l == "na" || l == "nan";
}

ParsedTable parse_table(std::istream& in, const FormatOptions& options) {
    ParsedTable table;
    auto& diag = table.diagnostics;

    std::string line;
    std::size_t line_no = 0;
    // header, skipping blank lines
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw DataError("input table is empty: no header row");

    char delim = options.delimiter;
    if (delim == '\0') delim = line.find('\t') != std::string::npos ? '\t' : ',';

    const auto header = split(line, delim);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(lower(header[i]), i);
    std::array<std::size_t, kRequired.size()> col{};
    for (std::size_t k = 0; k < kRequired.size(); ++k) {
        auto it = index.find(std::string(kRequired[k]));
        if (it == index.end()) throw DataError("missing required column '" + std::string(kRequired[k]) + "'");
        col[k] = it->second;
    }
    std::optional<std::size_t> psm_col;
    if (auto it = index.find("psm_count"); it != index.end()) psm_col = it->second;
    diag.psm_column_present = psm_col.has_value();

    const auto control_label = lower(trim(options.control_label));
    const auto perturbation_label = lower(trim(options.perturbation_label));

    using Key = std::tuple<std::string, Condition, int, double>;
    std::set<Key> seen;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++diag.rows_read;
        const auto cells = split(line, delim);
        auto reject = [&](std::string reason) { diag.rejected.push_back({line_no, std::move(reason)}); };
        if (cells.size() != header.size()) {
            reject("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
            continue;
        }

        RawMeasurement m;
        m.protein_id = std::string(cells[col[0]]);
        if (m.protein_id.empty()) {
            reject("empty protein_id");
            continue;
        }
        const auto cond = lower(cells[col[1]]);
        if (cond == control_label) {
            m.condition = Condition::Control;
        } else if (cond == perturbation_label) {
            m.condition = Condition::Perturbation;
        } else {
            reject("unknown condition '" + std::string(cells[col[1]]) + "'");
            continue;
        }
        if (!parse_number(cells[col[2]], m.replicate) || m.replicate < 1) {
            reject("replicate is not a positive integer: '" + std::string(cells[col[2]]) + "'");
            continue;
        }
        if (!parse_number(cells[col[3]], m.temperature) || !std::isfinite(m.temperature)) {
            reject("temperature is not a finite number: '" + std::string(cells[col[3]]) + "'");
            continue;
        }
        if (!is_missing_token(cells[col[4]])) {
            double a = 0.0;
            if (!parse_number(cells[col[4]], a) || !std::isfinite(a) || a < 0.0) {
                reject("abundance is not a nonnegative number: '" + std::string(cells[col[4]]) + "'");
                continue;
            }
            m.abundance = a;
        }
        if (psm_col && !is_missing_token(cells[*psm_col])) {
            int psm = 0;
            if (!parse_number(cells[*psm_col], psm) || psm < 0) {
                reject("psm_count is not a nonnegative integer: '" + std::string(cells[*psm_col]) + "'");
                continue;
            }
            m.psm_count = psm;
        }

        if (!seen.emplace(m.protein_id, m.condition, m.replicate, m.temperature).second) {
            throw DataError("duplicate measurement key at line " + std::to_string(line_no) + ": " + format_key(m));
        }
        if (!m.abundance) ++diag.missing_abundance;
        table.measurements.push_back(std::move(m));
    }
    diag.rows_accepted = table.measurements.size();
    return table;
}

void write_table(std::ostream& out, std::span<const RawMeasurement> rows, const FormatOptions& options,
                 bool include_psm) {
    const char d = options.delimiter == '\0' ? ',' : options.delimiter;
    out << "protein_id" << d << "condition" << d << "replicate" << d << "temperature" << d << "abundance";
    if (include_psm) out << d << "psm_count";
    out << '\n';
    char buf[64];
    for (const auto& m : rows) {
        out << m.protein_id << d
            << (m.condition == Condition::Control ? options.control_label : options.perturbation_label) << d
            << m.replicate << d;
        std::snprintf(buf, sizeof buf, "%.17g", m.temperature);
        out << buf << d;
        if (m.abundance) {
            std::snprintf(buf, sizeof buf, "%.17g", *m.abundance);
            out << buf;
        } else {
            out << "NA";
        }
        if (include_psm) {
            out << d;
            if (m.psm_count) out << *m.psm_count;
            else out << "NA";
        }
        out << '\n';
    }
}

std::vector<ProteinProfile> filter_proteins(std::span<const RawMeasurement> rows, const FilterOptions& options) {
    std::map<std::string, std::vector<const RawMeasurement*>> by_protein;
    for (const auto& m : rows) by_protein[m.protein_id].push_back(&m);

    std::vector<ProteinProfile> profiles;
    profiles.reserve(by_protein.size());
    for (auto& [id, ms] : by_protein) {
        ProteinProfile p;
        p.protein_id = id;
        std::set<int> reps[2];
        std::set<double> temps[2];
        for (const auto* m : ms) {
            if (m->psm_count) p.psm_count = std::max(p.psm_count.value_or(0), *m->psm_count);
            if (!m->abundance) continue;
            const int c = m->condition == Condition::Control ? 0 : 1;
            reps[c].insert(m->replicate);
            temps[c].insert(m->temperature);
            auto& obs = c == 0 ? p.control : p.perturbation;
            obs.push_back({m->temperature, m->replicate, *m->abundance});
        }
        p.control_replicates = static_cast<int>(reps[0].size());
        p.perturbation_replicates = static_cast<int>(reps[1].size());

        if (p.psm_count && *p.psm_count < options.min_psms) {
            p.status = ProteinStatus::FilteredPsm;
        } else if (p.control_replicates < options.min_replicates || p.perturbation_replicates < options.min_replicates) {
            p.status = ProteinStatus::FilteredReplicates;
        } else if (static_cast<int>(temps[0].size()) < options.min_temperatures ||
                   static_cast<int>(temps[1].size()) < options.min_temperatures) {
            p.status = ProteinStatus::FilteredDegenerate;
        }
        profiles.push_back(std::move(p));
    }
    return profiles;
}

NormalizationMode parse_normalization_mode(std::string_view name) {
    if (name == "reference") return NormalizationMode::ReferenceChannel;
    if (name == "column") return NormalizationMode::Column;
    if (name == "none") return NormalizationMode::None;
    throw std::invalid_argument("unknown normalization '" + std::string(name) + "' (reference, column, none)");
}

std::string_view to_string(NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::ReferenceChannel: return "reference";
        case NormalizationMode::Column: return "column";
        case NormalizationMode::None: return "none";
    }
    return "reference";
}

namespace {

std::string describe(const SampleColumn& column) {
    std::ostringstream name;
    name << to_string(column.condition) << " replicate " << column.replicate << " at " << column.temperature << " C";
    return name.str();
}

std::map<SampleColumn, std::vector<double>> collect_columns(std::span<const RawMeasurement> rows) {
    std::map<SampleColumn, std::vector<double>> columns;
    for (const auto& m : rows) {
        auto& v = columns[{m.condition, m.replicate, m.temperature}];
        if (m.abundance) v.push_back(*m.abundance);
    }
    return columns;
}

using Sample = std::pair<Condition, int>;

std::map<Sample, double> reference_channel_factors(std::span<const RawMeasurement> rows, NormalizationReport& report) {
    std::set<Sample> samples;
    double t_ref = INFINITY;
    for (const auto& m : rows) {
        samples.insert({m.condition, m.replicate});
        t_ref = std::min(t_ref, m.temperature);
    }
    report.reference_temperature = t_ref;

    std::map<std::string, std::map<Sample, double>> logs;
    for (const auto& m : rows) {
        if (m.temperature != t_ref || !m.abundance || !(*m.abundance > 0.0)) continue;
        logs[m.protein_id][{m.condition, m.replicate}] = std::log(*m.abundance);
    }

    std::map<Sample, std::vector<double>> ratios;
    for (const auto& [id, by_sample] : logs) {
        if (by_sample.size() != samples.size()) continue;
        double mean = 0.0;
        for (const auto& [s, v] : by_sample) mean += v;
        mean /= static_cast<double>(by_sample.size());
        for (const auto& [s, v] : by_sample) ratios[s].push_back(v - mean);
        ++report.reference_proteins;
    }
    if (report.reference_proteins == 0) {
        std::ostringstream msg;
        msg << "no protein has a positive abundance in every sample at the reference temperature " << t_ref << " C";
        throw DataError(msg.str());
    }

    std::map<Sample, double> log_median;
    double centre = 0.0;
    for (const auto& s : samples) {
        log_median[s] = median_of(ratios.at(s));
        centre += log_median[s];
    }
    centre /= static_cast<double>(samples.size());

    std::map<Sample, double> factor;
    for (const auto& s : samples) factor[s] = std::exp(centre - log_median[s]);
    return factor;
}

}  // namespace

std::pair<std::vector<RawMeasurement>, NormalizationReport> median_normalize(std::span<const RawMeasurement> rows,
                                                                             NormalizationMode mode) {
    const auto columns = collect_columns(rows);
    NormalizationReport report;
    report.mode = mode;
    for (const auto& [column, values] : columns) {
        if (values.empty()) throw DataError("sample column has no present abundances: " + describe(column));
        report.columns.push_back({column, median_of(values), 1.0});
    }
    if (report.columns.empty()) return {std::vector<RawMeasurement>(rows.begin(), rows.end()), report};

    switch (mode) {
        case NormalizationMode::None: break;
        case NormalizationMode::Column: {
            std::vector<double> medians;
            for (const auto& c : report.columns) {
                if (c.median == 0.0) throw DataError("sample column median is zero, cannot scale: " + describe(c.column));
                medians.push_back(c.median);
            }
            report.reference_median = median_of(medians);
            for (auto& c : report.columns) c.factor = report.reference_median / c.median;
            break;
        }
        case NormalizationMode::ReferenceChannel: {
            const auto factor = reference_channel_factors(rows, report);
            for (auto& c : report.columns) c.factor = factor.at({c.column.condition, c.column.replicate});
            break;
        }
    }

    std::map<SampleColumn, double> factor;
    for (const auto& c : report.columns) factor.emplace(c.column, c.factor);
    std::vector<RawMeasurement> out(rows.begin(), rows.end());
    for (auto& m : out) {
        if (m.abundance) *m.abundance *= factor.at({m.condition, m.replicate, m.temperature});
    }
    return {std::move(out), std::move(report)};
}

ProteinProfile min_max_scale(ProteinProfile profile) {
    if (profile.status != ProteinStatus::Ok) return profile;
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto* obs : {&profile.control, &profile.perturbation}) {
        for (const auto& o : *obs) {
            lo = std::min(lo, o.abundance);
            hi = std::max(hi, o.abundance);
        }
    }
    if (!(hi > lo)) {
        profile.status = ProteinStatus::FilteredDegenerate;
        return profile;
    }
    const double range = hi - lo;
    for (auto* obs : {&profile.control, &profile.perturbation}) {
        for (auto& o : *obs) o.abundance = (o.abundance - lo) / range;
    }
    return profile;
}

FilterCounts count_statuses(std::span<const ProteinProfile> profiles) {
    FilterCounts c;
    c.total = profiles.size();
    for (const auto& p : profiles) {
        switch (p.status) {
            case ProteinStatus::Ok: ++c.ok; break;
            case ProteinStatus::FilteredPsm: ++c.filtered_psm; break;
            case ProteinStatus::FilteredReplicates: ++c.filtered_replicates; break;
            case ProteinStatus::FilteredDegenerate: ++c.filtered_degenerate; break;
            case ProteinStatus::FitFailed: break;
        }
    }
    return c;
}

PreparedData prepare_profiles(std::span<const RawMeasurement> rows, const FilterOptions& options,
                              NormalizationMode normalization) {
    PreparedData data;
    data.profiles = filter_proteins(rows, options);

    std::unordered_map<std::string, std::size_t> ok_index;
    for (std::size_t i = 0; i < data.profiles.size(); ++i) {
        if (data.profiles[i].status == ProteinStatus::Ok) ok_index.emplace(data.profiles[i].protein_id, i);
    }
    std::vector<RawMeasurement> passing;
    for (const auto& m : rows) {
        if (ok_index.contains(m.protein_id)) passing.push_back(m);
    }

    if (!passing.empty()) {
        auto [normalized, report] = median_normalize(passing, normalization);
        data.normalization = std::move(report);
        for (auto& [id, i] : ok_index) {
            data.profiles[i].control.clear();
            data.profiles[i].perturbation.clear();
        }
        for (const auto& m : normalized) {
            if (!m.abundance) continue;
            auto& p = data.profiles[ok_index.at(m.protein_id)];
            (m.condition == Condition::Control ? p.control : p.perturbation)
                .push_back({m.temperature, m.replicate, *m.abundance});
        }
        for (auto& [id, i] : ok_index) data.profiles[i] = min_max_scale(std::move(data.profiles[i]));
    }
    data.counts = count_statuses(data.profiles);
    return data;
}

}  // namespace thermal::ingest
