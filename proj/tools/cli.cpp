#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "thermal/curves.hpp"
#include "thermal/inference.hpp"
#include "thermal/ingest.hpp"
#include "thermal/parallel.hpp"
#include "thermal/report.hpp"
#include "thermal/synthbench.hpp"

#ifndef THERMAL_VERSION
#define THERMAL_VERSION "unknown"
#endif

namespace thermal::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Settings {
    std::string config_file;
    std::string input;
    std::string out;
    std::string labels;
    std::string control_label = "control";
    std::string treatment_label = "treatment";
    int min_psms = 3;
    int min_replicates = 2;
    int min_temperatures = 5;
    std::string normalization = "reference";
    int null_samples = 1;
    std::uint64_t seed = 42;
    unsigned threads = 0;
    int grid = 100;
    std::vector<double> alphas{synth::kDefaultAlphas.begin(), synth::kDefaultAlphas.end()};
    bool no_plots = false;
    bool signed_effect = false;
    bool condition_correlation = false;
};

struct GenerateSettings {
    int proteins = 50;
    double fraction = 0.2;
    std::string family = "sigmoid";
    std::vector<double> temperatures = synth::default_gradient();
    int replicates = 2;
    double noise = 0.05;
    double tm_shift = 5.0;
    double amplitude_change = 0.0;
    double mean_shift = 0.3;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

unsigned workers(const Settings& s) { return s.threads == 0 ? default_workers() : s.threads; }

void validate(const Settings& s, bool needs_input) {
    if (needs_input && s.input.empty()) throw ConfigError("--input is required");
    if (s.out.empty()) throw ConfigError("--out is required");
    if (s.min_psms < 0) throw ConfigError("--min-psms must be >= 0");
    if (s.min_replicates < 1) throw ConfigError("--min-replicates must be >= 1");
    if (s.min_temperatures < 2) throw ConfigError("--min-temperatures must be >= 2");
    if (s.null_samples < 1) throw ConfigError("--null-samples must be >= 1");
    if (s.grid < 2) throw ConfigError("--grid must be >= 2");
    if (s.alphas.empty()) throw ConfigError("--alpha needs at least one value");
    for (double a : s.alphas) {
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("--alpha values must lie in (0, 1)");
    }
    if (s.control_label == s.treatment_label) throw ConfigError("control and treatment labels must differ");
    try {
        ingest::parse_normalization_mode(s.normalization);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

ordered_json settings_json(const Settings& s) {
    return {
        {"input", s.input},
        {"out", s.out},
        {"labels", s.labels},
        {"control-label", s.control_label},
        {"treatment-label", s.treatment_label},
        {"min-psms", s.min_psms},
        {"min-replicates", s.min_replicates},
        {"min-temperatures", s.min_temperatures},
        {"normalization", s.normalization},
        {"null-samples", s.null_samples},
        {"seed", s.seed},
        {"threads", s.threads},
        {"grid", s.grid},
        {"alpha", s.alphas},
        {"no-plots", s.no_plots},
        {"signed-effect", s.signed_effect},
        {"condition-correlation", s.condition_correlation},
    };
}

ordered_json counts_json(const ingest::FilterCounts& c) {
    return {{"total", c.total},
            {"ok", c.ok},
            {"filtered_psm", c.filtered_psm},
            {"filtered_replicates", c.filtered_replicates},
            {"filtered_degenerate", c.filtered_degenerate}};
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("cannot write " + path.string());
}

class Run {
public:
    Run(std::string command, const std::vector<std::string>& args, const Settings& settings, ordered_json config)
        : dir_(settings.out) {
        manifest_["tool"] = "thermal_tracks";
        manifest_["version"] = THERMAL_VERSION;
        manifest_["command"] = std::move(command);
        manifest_["arguments"] = args;
        manifest_["config_file"] = settings.config_file.empty() ? ordered_json(nullptr) : ordered_json(settings.config_file);
        manifest_["config_file_contents"] =
            settings.config_file.empty() ? ordered_json(nullptr) : ordered_json(read_file(settings.config_file));
        manifest_["config"] = std::move(config);
        manifest_["versions"] = {{"thermal_tracks", THERMAL_VERSION},
                                 {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                               "." + std::to_string(EIGEN_MINOR_VERSION)},
                                 {"cli11", CLI11_VERSION},
                                 {"compiler", __VERSION__}};
        manifest_["status"] = "running";

        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
        save();
    }

    ordered_json& manifest() { return manifest_; }
    ordered_json& diagnostics() { return diagnostics_; }
    const fs::path& dir() const { return dir_; }

    void finish(int code, const std::string& error = {}) {
        manifest_["status"] = code == kExitOk ? "ok" : "failed";
        manifest_["exit_code"] = code;
        if (!error.empty()) {
            manifest_["error"] = error;
            diagnostics_["error"] = error;
        }
        if (!diagnostics_.empty()) write_json(dir_ / "diagnostics.json", diagnostics_);
        save();
    }

private:
    void save() { write_json(dir_ / "run_manifest.json", manifest_); }

    fs::path dir_;
    ordered_json manifest_;
    ordered_json diagnostics_;
};

struct Analysis {
    std::vector<inference::ComparisonResult> results;
    ingest::FilterCounts counts;
    std::size_t fit_failed = 0;
};

Analysis analyze(const Settings& s, Run& run) {
    std::ifstream in(s.input, std::ios::binary);
    if (!in) throw IoError("cannot open input file " + s.input);

    ingest::FormatOptions format;
    format.control_label = s.control_label;
    format.perturbation_label = s.treatment_label;
    auto& diag = run.diagnostics();
    const auto table = ingest::parse_table(in, format);
    const auto& pd = table.diagnostics;
    diag["parse"] = {{"rows_read", pd.rows_read},
                     {"rows_accepted", pd.rows_accepted},
                     {"missing_abundance", pd.missing_abundance},
                     {"psm_column_present", pd.psm_column_present},
                     {"rejected", ordered_json::array()}};
    for (const auto& r : pd.rejected) diag["parse"]["rejected"].push_back({{"line", r.line}, {"reason", r.reason}});
    if (table.measurements.empty()) throw DataError("input has no usable rows");

    ingest::FilterOptions filter;
    filter.min_psms = s.min_psms;
    filter.min_replicates = s.min_replicates;
    filter.min_temperatures = s.min_temperatures;
    const auto prepared =
        ingest::prepare_profiles(table.measurements, filter, ingest::parse_normalization_mode(s.normalization));
    diag["filter_counts"] = counts_json(prepared.counts);
    run.manifest()["filter_counts"] = counts_json(prepared.counts);
    {
        const auto& nr = prepared.normalization;
        ordered_json norm = {{"mode", ingest::to_string(nr.mode)}};
        if (nr.mode == ingest::NormalizationMode::Column) norm["reference_median"] = nr.reference_median;
        if (nr.mode == ingest::NormalizationMode::ReferenceChannel) {
            norm["reference_temperature"] = nr.reference_temperature;
            norm["reference_proteins"] = nr.reference_proteins;
        }
        norm["columns"] = ordered_json::array();
        for (const auto& c : nr.columns) {
            norm["columns"].push_back({{"condition", to_string(c.column.condition)},
                                       {"replicate", c.column.replicate},
                                       {"temperature", c.column.temperature},
                                       {"median", c.median},
                                       {"factor", c.factor}});
        }
        diag["normalization"] = std::move(norm);
    }

    inference::InferenceConfig config;
    config.samples_per_protein = s.null_samples;
    config.seed = s.seed;
    config.workers = workers(s);
    config.grid_size = s.grid;
    auto output = inference::run_inference(prepared.profiles, config);
    const auto& id = output.diagnostics;
    const ordered_json inference_json = {{"tested", id.tested},
                                         {"fit_failed", id.fit_failed},
                                         {"null_samples", output.null.size()},
                                         {"null_skipped", id.null_skipped},
                                         {"null_failed_draws", id.null_failed_draws}};
    diag["inference"] = inference_json;
    run.manifest()["inference"] = inference_json;

    report::emit_results_table(output.results, run.dir() / "results.csv", {.signed_effect = s.signed_effect});
    report::emit_null_distribution(output.null, run.dir() / "null_distribution.csv");

    std::map<std::string, std::optional<double>> p_adjusted;
    for (const auto& r : output.results) p_adjusted[r.protein_id] = r.p_adjusted;
    const report::CurveOptions curve_options{.plot = !s.no_plots, .per_condition_correlation = s.condition_correlation};
    const auto& fits = output.fits;
    // directories first so workers never race on creating them
    std::error_code ec;
    fs::create_directories(run.dir() / "curves", ec);
    if (!s.no_plots) fs::create_directories(run.dir() / "plots", ec);
    parallel_for(fits.size(), config.workers, [&](std::size_t i) {
        const auto grid = report::make_grid(fits[i].control, fits[i].perturbation, s.grid);
        report::emit_curves(fits[i], grid, p_adjusted.at(fits[i].protein_id), run.dir(), curve_options);
    });

    return {std::move(output.results), prepared.counts, id.fit_failed};
}

std::string hits_summary(const std::vector<inference::ComparisonResult>& results, const std::vector<double>& alphas,
                         ordered_json& record) {
    std::ostringstream os;
    record = ordered_json::object();
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        const auto hits = std::count_if(results.begin(), results.end(),
                                        [&](const auto& r) { return r.p_adjusted && *r.p_adjusted < alphas[k]; });
        os << (k ? ", " : "") << "p_adj < " << report::format_number(alphas[k]) << ": " << hits;
        record[report::format_number(alphas[k])] = hits;
    }
    return os.str();
}

int cmd_analyze(const Settings& s, const std::vector<std::string>& args, std::ostream& out) {
    validate(s, true);
    Run run("analyze", args, s, settings_json(s));
    try {
        const auto a = analyze(s, run);
        ordered_json hits;
        const auto hit_text = hits_summary(a.results, s.alphas, hits);
        run.manifest()["hits"] = hits;
        out << "proteins in: " << a.counts.total << "; tested: " << a.counts.ok - a.fit_failed
            << "; filtered: psm " << a.counts.filtered_psm << ", replicates " << a.counts.filtered_replicates
            << ", degenerate " << a.counts.filtered_degenerate << ", fit failed " << a.fit_failed << "; hits: "
            << hit_text << '\n';
        run.finish(kExitOk);
        return kExitOk;
    } catch (const DataError& e) {
        run.finish(kExitData, e.what());
        throw;
    } catch (const std::exception& e) {
        run.finish(kExitConfig, e.what());
        throw;
    }
}

void write_csv(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw IoError("cannot write " + path.string());
}

int cmd_benchmark(Settings s, const std::vector<std::string>& args, std::ostream& out) {
    validate(s, true);
    if (s.labels.empty()) s.labels = (fs::path(s.input).parent_path() / "truth_labels.csv").string();
    Run run("benchmark", args, s, settings_json(s));
    try {
        std::ifstream label_stream(s.labels);
        if (!label_stream) throw DataError("cannot open truth labels " + s.labels);
        const auto labels = synth::read_labels(label_stream);

        const auto a = analyze(s, run);
        std::map<std::string, const inference::ComparisonResult*> by_id;
        for (const auto& r : a.results) by_id[r.protein_id] = &r;
        for (const auto& [id, affected] : labels) {
            if (!by_id.contains(id)) throw DataError("truth label for unknown protein_id '" + id + "'");
        }
        std::vector<double> scores;
        std::vector<bool> truth;
        std::vector<double> null_p;
        for (const auto& [id, r] : by_id) {
            const auto it = labels.find(id);
            if (it == labels.end()) throw DataError("no truth label for protein_id '" + id + "'");
            // untested proteins are never called
            scores.push_back(r->p_adjusted.value_or(1.0));
            truth.push_back(it->second);
            if (!it->second && r->p_value) null_p.push_back(*r->p_value);
        }

        std::ostringstream roc_text, op_text, cal_text;
        ordered_json summary;
        const bool both = std::count(truth.begin(), truth.end(), true) > 0 &&
                          std::count(truth.begin(), truth.end(), false) > 0;
        roc_text << "threshold,false_positive_rate,true_positive_rate\n";
        op_text << "alpha,sensitivity,specificity,hits\n";
        if (both) {
            const auto roc = synth::roc_curve(scores, truth, s.alphas);
            for (const auto& p : roc.curve) {
                roc_text << report::format_number(std::isfinite(p.threshold) ? p.threshold : 0.0) << ','
                         << report::format_number(p.false_positive_rate) << ','
                         << report::format_number(p.true_positive_rate) << '\n';
            }
            for (const auto& op : roc.operating_points) {
                op_text << report::format_number(op.alpha) << ',' << report::format_number(op.sensitivity) << ','
                        << report::format_number(op.specificity) << ',' << op.hits << '\n';
            }
            summary["auc"] = roc.auc;
            out << "AUC: " << report::format_number(roc.auc) << '\n';
        } else {
            out << "AUC: undefined (labels contain a single class)\n";
        }

        const auto cal = synth::calibration_report(null_p);
        cal_text << "bin_lower,bin_upper,count\n";
        for (std::size_t b = 0; b < cal.bins.size(); ++b) {
            cal_text << report::format_number(b / 10.0) << ',' << report::format_number((b + 1) / 10.0) << ','
                     << cal.bins[b] << '\n';
        }
        summary["unaffected_tested"] = cal.count;
        if (cal.count > 0) {
            summary["ks_statistic"] = cal.ks_statistic;
            summary["fraction_p_below_0.05"] = cal.fraction_below_005;
            out << "KS vs Uniform(0,1) over " << cal.count << " unaffected proteins: "
                << report::format_number(cal.ks_statistic)
                << "; fraction p < 0.05: " << report::format_number(cal.fraction_below_005) << '\n';
        }
        write_csv(run.dir() / "roc.csv", roc_text.str());
        write_csv(run.dir() / "operating_points.csv", op_text.str());
        write_csv(run.dir() / "calibration.csv", cal_text.str());
        run.manifest()["benchmark"] = summary;
        run.finish(kExitOk);
        return kExitOk;
    } catch (const DataError& e) {
        run.finish(kExitData, e.what());
        throw;
    } catch (const std::exception& e) {
        run.finish(kExitConfig, e.what());
        throw;
    }
}

int cmd_generate(const Settings& s, const GenerateSettings& g, const std::vector<std::string>& args, std::ostream& out) {
    if (s.out.empty()) throw ConfigError("--out is required");
    synth::SyntheticSpec spec;
    spec.proteins = g.proteins;
    spec.fraction_perturbed = g.fraction;
    spec.temperatures = g.temperatures;
    spec.replicates = g.replicates;
    spec.noise_sd = g.noise;
    spec.tm_shift = g.tm_shift;
    spec.amplitude_change = g.amplitude_change;
    spec.mean_shift = g.mean_shift;
    spec.seed = s.seed;
    try {
        spec.family = synth::parse_family(g.family);
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    ordered_json config = {{"out", s.out},
                           {"seed", s.seed},
                           {"proteins", g.proteins},
                           {"fraction-perturbed", g.fraction},
                           {"family", g.family},
                           {"temperatures", g.temperatures},
                           {"replicates", g.replicates},
                           {"noise", g.noise},
                           {"tm-shift", g.tm_shift},
                           {"amplitude-change", g.amplitude_change},
                           {"mean-shift", g.mean_shift},
                           {"control-label", s.control_label},
                           {"treatment-label", s.treatment_label}};
    Run run("generate", args, s, std::move(config));
    try {
        const auto ds = synth::generate(spec);
        ingest::FormatOptions format;
        format.control_label = s.control_label;
        format.perturbation_label = s.treatment_label;
        std::ostringstream data, labels;
        ingest::write_table(data, ds.measurements, format);
        synth::write_labels(labels, ds.affected);
        write_csv(run.dir() / "dataset.csv", data.str());
        write_csv(run.dir() / "truth_labels.csv", labels.str());
        const auto affected = std::count_if(ds.affected.begin(), ds.affected.end(), [](auto& kv) { return kv.second; });
        out << "wrote " << ds.measurements.size() << " rows for " << ds.affected.size() << " proteins (" << affected
            << " affected) to " << (run.dir() / "dataset.csv").string() << '\n';
        run.finish(kExitOk);
        return kExitOk;
    } catch (const std::exception& e) {
        run.finish(kExitConfig, e.what());
        throw;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Thermal proteome profiling with Gaussian-process melting curves", "thermal_tracks"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(CLI::config_extras_mode::error);

    Settings s;
    GenerateSettings g;
    auto* config = app.set_config(
        "--config", "", "TOML config file with the same keys as the long flags; flags take precedence");
    app.add_option("--input", s.input, "Long-format abundance table (tab or comma separated)");
    app.add_option("--out", s.out, "Output directory");
    app.add_option("--labels", s.labels, "Truth labels for benchmark (default: truth_labels.csv next to the input)");
    app.add_option("--control-label", s.control_label, "Condition value of control rows")->capture_default_str();
    app.add_option("--treatment-label", s.treatment_label, "Condition value of perturbation rows")->capture_default_str();
    app.add_option("--min-psms", s.min_psms, "Minimum PSM count")->capture_default_str();
    app.add_option("--min-replicates", s.min_replicates, "Minimum replicates per condition")->capture_default_str();
    app.add_option("--min-temperatures", s.min_temperatures, "Minimum distinct temperatures per condition")
        ->capture_default_str();
    app.add_option("--normalization", s.normalization, "Median normalization: reference, column or none")
        ->capture_default_str();
    app.add_option("--null-samples", s.null_samples, "Null statistics sampled per protein")->capture_default_str();
    app.add_option("--seed", s.seed, "Master seed")->capture_default_str();
    app.add_option("--threads", s.threads, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_option("--grid", s.grid, "Prediction grid size")->capture_default_str();
    app.add_option("--alpha", s.alphas, "Significance levels on adjusted p-values")->delimiter(',')->capture_default_str();
    app.add_flag("--no-plots", s.no_plots, "Skip SVG plots");
    app.add_flag("--signed-effect", s.signed_effect, "Add a signed_effect_size column to results.csv");
    app.add_flag("--condition-correlation", s.condition_correlation,
                 "Also write per-condition correlation matrices");

    auto* analyze = app.add_subcommand("analyze", "Fit, test and report every protein of --input")->fallthrough();
    auto* benchmark =
        app.add_subcommand("benchmark", "Analyze a labelled synthetic dataset and score it")->fallthrough();
    auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and its truth labels")->fallthrough();
    generate->add_option("--proteins", g.proteins, "Protein count")->capture_default_str();
    generate->add_option("--fraction-perturbed", g.fraction, "Fraction of affected proteins")->capture_default_str();
    generate->add_option("--family", g.family, "sigmoid, nonsigmoid or mixed")->capture_default_str();
    generate->add_option("--temperatures", g.temperatures, "Temperature gradient")->delimiter(',');
    generate->add_option("--replicates", g.replicates, "Replicates per condition")->capture_default_str();
    generate->add_option("--noise", g.noise, "Noise sd in scaled units")->capture_default_str();
    generate->add_option("--tm-shift", g.tm_shift, "Melting point shift (C), sigmoid family")->capture_default_str();
    generate->add_option("--amplitude-change", g.amplitude_change, "Plateau change or deviation gain")
        ->capture_default_str();
    generate->add_option("--mean-shift", g.mean_shift, "Mean shift, GP-drawn family")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (config->count() > 0) s.config_file = config->as<std::string>();
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(s, args, out);
        if (benchmark->parsed()) return cmd_benchmark(s, args, out);
        return cmd_generate(s, g, args, out);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace thermal::cli
