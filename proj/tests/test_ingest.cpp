#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "tables.hpp"
#include "thermal/ingest.hpp"

using namespace thermal;
using namespace thermal::ingest;

namespace {

ParsedTable parse(const std::string& text, const FormatOptions& opts = {}) {
    std::istringstream in(text);
    return parse_table(in, opts);
}

RawMeasurement row(std::string id, Condition c, int rep, double t, std::optional<double> a, std::optional<int> psm = 10) {
    return {std::move(id), c, rep, t, a, psm};
}

// Complete 2 x 2 design with `temps` channels for one protein.
std::vector<RawMeasurement> full_protein(const std::string& id, int temps, int psm, double base = 100.0) {
    std::vector<RawMeasurement> rows;
    for (Condition c : {Condition::Control, Condition::Perturbation})
        for (int r = 1; r <= 2; ++r)
            for (int j = 0; j < temps; ++j) rows.push_back(row(id, c, r, 37.0 + 3 * j, base - 5 * j, psm));
    return rows;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("header plus one row parses to one measurement") {
    auto t = parse("protein_id,condition,replicate,temperature,abundance\nP1,control,1,37,1000\n");
    REQUIRE(t.measurements.size() == 1);
    CHECK(t.measurements[0].protein_id == "P1");
    CHECK(t.measurements[0].condition == Condition::Control);
    CHECK(t.measurements[0].abundance == doctest::Approx(1000));
    CHECK_FALSE(t.diagnostics.psm_column_present);
    CHECK(t.diagnostics.rows_accepted == 1);
}

TEST_CASE("missing-value tokens") {
    auto t = parse(
        "protein_id\tcondition\treplicate\ttemperature\tabundance\tpsm_count\n"
        "P1\ttreatment\t1\t37\tNA\t4\n"
        "P1\ttreatment\t1\t40\tnan\t4\n"
        "P1\ttreatment\t1\t43\t\t4\n"
        "P1\ttreatment\t1\t46\t12.5\tNA\n");
    REQUIRE(t.measurements.size() == 4);
    CHECK(t.diagnostics.missing_abundance == 3);
    CHECK_FALSE(t.measurements[0].abundance.has_value());
    CHECK(t.measurements[0].condition == Condition::Perturbation);
    CHECK(t.measurements[0].psm_count == 4);
    CHECK_FALSE(t.measurements[3].psm_count.has_value());
    CHECK(t.diagnostics.psm_column_present);
}

TEST_CASE("columns in any order and custom labels") {
    FormatOptions opts;
    opts.control_label = "DMSO";
    opts.perturbation_label = "drug";
    auto t = parse("abundance,temperature,Protein_ID,replicate,condition\n5,37,A,2,dmso\n6,37,A,2,DRUG\n", opts);
    REQUIRE(t.measurements.size() == 2);
    CHECK(t.measurements[0].replicate == 2);
    CHECK(t.measurements[1].condition == Condition::Perturbation);
}

TEST_CASE("duplicate key is fatal") {
    CHECK_THROWS_AS(parse("protein_id,condition,replicate,temperature,abundance\n"
                          "P1,control,1,37,1\nP1,control,1,37,2\n"),
                    DataError);
}

TEST_CASE("missing required column names it") {
    try {
        parse("protein_id,condition,replicate,abundance\nP1,control,1,5\n");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("temperature") != std::string::npos);
    }
}

TEST_CASE("bad rows are rejected with line numbers") {
    auto t = parse(
        "protein_id,condition,replicate,temperature,abundance\n"
        "P1,control,1,37,1\n"
        "P1,control,x,40,1\n"
        "P1,other,1,40,1\n"
        "P1,control,1,hot,1\n"
        "P1,control,1,46,-3\n"
        "P1,control,1\n");
    CHECK(t.measurements.size() == 1);
    REQUIRE(t.diagnostics.rejected.size() == 5);
    CHECK(t.diagnostics.rejected[0].line == 3);
    CHECK(t.diagnostics.rejected[4].line == 7);
    CHECK(t.diagnostics.rows_read == 6);
}

TEST_CASE("filter statuses") {
    std::vector<RawMeasurement> rows;
    for (auto& m : full_protein("low_psm", 6, 2)) rows.push_back(m);
    for (auto& m : full_protein("boundary", 6, 3)) rows.push_back(m);
    for (auto& m : full_protein("one_rep", 6, 10)) {
        if (!(m.condition == Condition::Perturbation && m.replicate == 2)) rows.push_back(m);
    }
    for (auto& m : full_protein("few_temps", 4, 10)) rows.push_back(m);
    for (auto& m : full_protein("no_psm", 6, 0)) {
        m.psm_count.reset();
        rows.push_back(m);
    }
    auto profiles = filter_proteins(rows);
    std::map<std::string, ProteinStatus> s;
    for (auto& p : profiles) s[p.protein_id] = p.status;
    CHECK(s["low_psm"] == ProteinStatus::FilteredPsm);
    CHECK(s["boundary"] == ProteinStatus::Ok);
    CHECK(s["one_rep"] == ProteinStatus::FilteredReplicates);
    CHECK(s["few_temps"] == ProteinStatus::FilteredDegenerate);
    CHECK(s["no_psm"] == ProteinStatus::Ok);
    CHECK(profiles.size() == 5);
    CHECK(std::is_sorted(profiles.begin(), profiles.end(),
                         [](auto& a, auto& b) { return a.protein_id < b.protein_id; }));
}

TEST_CASE("replicates with only missing abundances do not count") {
    auto rows = full_protein("P", 6, 10);
    for (auto& m : rows) {
        if (m.condition == Condition::Control && m.replicate == 2) m.abundance.reset();
    }
    CHECK(filter_proteins(rows)[0].status == ProteinStatus::FilteredReplicates);
}

TEST_CASE("column normalization: medians 10 and 20") {
    // column A = {5, 10, 40}, column B = {20, 1, 30}
    std::vector<RawMeasurement> rows = {
        row("a", Condition::Control, 1, 37, 5),      row("b", Condition::Control, 1, 37, 10),
        row("c", Condition::Control, 1, 37, 40),     row("a", Condition::Perturbation, 1, 37, 20),
        row("b", Condition::Perturbation, 1, 37, 1), row("c", Condition::Perturbation, 1, 37, 30),
    };
    auto [out, report] = median_normalize(rows, NormalizationMode::Column);
    CHECK(report.reference_median == doctest::Approx(15));
    REQUIRE(report.columns.size() == 2);
    CHECK(report.columns[0].median == doctest::Approx(10));
    CHECK(report.columns[0].factor == doctest::Approx(1.5));
    CHECK(report.columns[1].factor == doctest::Approx(0.75));
    CHECK(*out[1].abundance == doctest::Approx(15));
    CHECK(*out[4].abundance == doctest::Approx(0.75));
}

TEST_CASE("column normalization: [1, 10, 100] scaled by 1.5") {
    std::vector<RawMeasurement> rows = {
        row("a", Condition::Control, 1, 37, 1),       row("b", Condition::Control, 1, 37, 10),
        row("c", Condition::Control, 1, 37, 100),     row("a", Condition::Perturbation, 1, 37, 20),
        row("b", Condition::Perturbation, 1, 37, 20), row("c", Condition::Perturbation, 1, 37, 20),
    };
    auto [out, report] = median_normalize(rows, NormalizationMode::Column);
    CHECK(report.columns[0].factor == doctest::Approx(1.5));
    CHECK(*out[0].abundance == doctest::Approx(1.5));
    CHECK(*out[1].abundance == doctest::Approx(15));
    CHECK(*out[2].abundance == doctest::Approx(150));
}

TEST_CASE("single column is unchanged") {
    std::vector<RawMeasurement> rows = {row("a", Condition::Control, 1, 37, 3), row("b", Condition::Control, 1, 37, 8)};
    for (auto mode : {NormalizationMode::Column, NormalizationMode::ReferenceChannel}) {
        auto [out, report] = median_normalize(rows, mode);
        CHECK(report.columns.at(0).factor == doctest::Approx(1.0));
        CHECK(*out[0].abundance == doctest::Approx(3));
        CHECK(*out[1].abundance == doctest::Approx(8));
    }
}

TEST_CASE("column normalization errors") {
    std::vector<RawMeasurement> rows = {row("a", Condition::Control, 1, 37, 3),
                                        row("a", Condition::Perturbation, 1, 37, std::nullopt)};
    CHECK_THROWS_AS(median_normalize(rows, NormalizationMode::Column), DataError);
    rows[1].abundance = 0.0;
    CHECK_THROWS_AS(median_normalize(rows, NormalizationMode::Column), DataError);
}

TEST_CASE("reference-channel normalization by hand") {
    // ratios at 37 C: control = 1/sqrt(2), perturbation = sqrt(2) for both proteins
    std::vector<RawMeasurement> rows = {
        row("a", Condition::Control, 1, 37, 10),      row("a", Condition::Perturbation, 1, 37, 20),
        row("b", Condition::Control, 1, 37, 30),      row("b", Condition::Perturbation, 1, 37, 60),
        row("a", Condition::Control, 1, 50, 4),       row("a", Condition::Perturbation, 1, 50, 4),
    };
    auto [out, report] = median_normalize(rows);
    CHECK(report.reference_temperature == 37);
    CHECK(report.reference_proteins == 2);
    const double s = std::sqrt(2.0);
    CHECK(*out[0].abundance == doctest::Approx(10 * s));
    CHECK(*out[1].abundance == doctest::Approx(20 / s));
    CHECK(*out[3].abundance == doctest::Approx(60 / s));
    // the factor covers every temperature of the sample
    CHECK(*out[4].abundance == doctest::Approx(4 * s));
    CHECK(*out[5].abundance == doctest::Approx(4 / s));
}

TEST_CASE("reference-channel normalization keeps a proteome-wide melting shift") {
    // every protein melts later in the perturbation; only loading differs at 37 C
    std::vector<RawMeasurement> rows;
    for (int p = 0; p < 20; ++p) {
        const double level = 100.0 * (p + 1);
        for (int j = 0; j < 6; ++j) {
            const double t = 37.0 + 5 * j;
            rows.push_back(row("p" + std::to_string(p), Condition::Control, 1, t, level / (1 + std::exp(0.5 * (t - 50)))));
            rows.push_back(
                row("p" + std::to_string(p), Condition::Perturbation, 1, t, 2 * level / (1 + std::exp(0.5 * (t - 56)))));
        }
    }
    auto [out, report] = median_normalize(rows);
    for (std::size_t i = 0; i < rows.size(); i += 2) {
        const double ratio = *out[i + 1].abundance / *out[i].abundance;
        const double t = rows[i].temperature;
        CHECK(rel_diff(ratio, (1 + std::exp(0.5 * (t - 50))) / (1 + std::exp(0.5 * (t - 56))) /
                                  ((1 + std::exp(0.5 * (37 - 50))) / (1 + std::exp(0.5 * (37 - 56))))) < 1e-9);
    }
}

TEST_CASE("reference-channel normalization needs a protein seen in every sample") {
    std::vector<RawMeasurement> rows = {row("a", Condition::Control, 1, 37, 10),
                                        row("b", Condition::Perturbation, 1, 37, 20)};
    CHECK_THROWS_AS(median_normalize(rows), DataError);
}

TEST_CASE("min-max examples") {
    ProteinProfile p;
    p.control = {{37, 1, 2}, {40, 1, 4}, {43, 1, 6}};
    auto s = min_max_scale(p);
    CHECK(s.control[0].abundance == 0.0);
    CHECK(s.control[1].abundance == doctest::Approx(0.5));
    CHECK(s.control[2].abundance == 1.0);

    ProteinProfile flat;
    flat.control = {{37, 1, 5}, {40, 1, 5}, {43, 1, 5}};
    CHECK(min_max_scale(flat).status == ProteinStatus::FilteredDegenerate);

    ProteinProfile joint;
    joint.control = {{37, 1, 2}, {40, 1, 6}};
    joint.perturbation = {{37, 1, 4}};
    auto j = min_max_scale(joint);
    CHECK(j.control[0].abundance == 0.0);
    CHECK(j.control[1].abundance == 1.0);
    CHECK(j.perturbation[0].abundance == doctest::Approx(0.5));
}

TEST_CASE("filter partition on random tables") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rows = testdata::random_raw_table(rng);
        std::set<std::string> ids;
        for (auto& m : rows) ids.insert(m.protein_id);
        const auto prepared = prepare_profiles(rows);
        const auto c = prepared.counts;
        CHECK(c.ok + c.filtered_psm + c.filtered_replicates + c.filtered_degenerate == ids.size());
        CHECK(c.total == ids.size());
        for (const auto& p : prepared.profiles) {
            if (p.status != ProteinStatus::Ok) continue;
            double lo = 1, hi = 0;
            for (auto* obs : {&p.control, &p.perturbation})
                for (auto& o : *obs) {
                    lo = std::min(lo, o.abundance);
                    hi = std::max(hi, o.abundance);
                }
            CHECK(lo == 0.0);
            CHECK(hi == 1.0);
        }
    }
}

TEST_CASE("normalization is idempotent on random tables") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rows = testdata::random_raw_table(rng);
        for (auto mode : {NormalizationMode::ReferenceChannel, NormalizationMode::Column}) {
            const auto once = median_normalize(rows, mode).first;
            const auto [twice, report] = median_normalize(once, mode);
            for (std::size_t i = 0; i < once.size(); ++i) {
                REQUIRE(once[i].abundance.has_value() == twice[i].abundance.has_value());
                if (once[i].abundance) CHECK(rel_diff(*once[i].abundance, *twice[i].abundance) < 1e-9);
            }
            if (mode == NormalizationMode::Column) {
                for (const auto& c : report.columns) CHECK(rel_diff(c.median, report.reference_median) < 1e-9);
            }
        }
    }
}

TEST_CASE("min-max is invariant to positive affine maps") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> a(0.01, 100), b(-50, 50);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rows = testdata::random_raw_table(rng);
        for (auto& p : filter_proteins(rows)) {
            if (p.status != ProteinStatus::Ok) continue;
            ProteinProfile q = p;
            const double sa = a(rng), sb = b(rng);
            for (auto* obs : {&q.control, &q.perturbation})
                for (auto& o : *obs) o.abundance = sa * o.abundance + sb;
            const auto x = min_max_scale(p);
            const auto y = min_max_scale(q);
            REQUIRE(x.status == y.status);
            for (std::size_t i = 0; i < x.control.size(); ++i)
                CHECK(x.control[i].abundance == doctest::Approx(y.control[i].abundance).epsilon(1e-9));
            for (std::size_t i = 0; i < x.perturbation.size(); ++i)
                CHECK(x.perturbation[i].abundance == doctest::Approx(y.perturbation[i].abundance).epsilon(1e-9));
        }
    }
}

TEST_CASE("parse, write, parse is a fixpoint") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rows = testdata::random_raw_table(rng);
        for (char delim : {',', '\t'}) {
            FormatOptions opts;
            opts.delimiter = delim;
            std::ostringstream first;
            write_table(first, rows, opts);
            const auto parsed = parse(first.str());
            REQUIRE(parsed.measurements.size() == rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                CHECK(parsed.measurements[i].abundance == rows[i].abundance);
                CHECK(parsed.measurements[i].psm_count == rows[i].psm_count);
                CHECK(parsed.measurements[i].temperature == rows[i].temperature);
            }
            std::ostringstream second;
            write_table(second, parsed.measurements, opts);
            CHECK(first.str() == second.str());
        }
    }
}

TEST_CASE("prepare_profiles reports every protein and scales Ok ones") {
    std::vector<RawMeasurement> rows = full_protein("keep", 6, 5, 1000);
    for (auto& m : full_protein("drop", 6, 1)) rows.push_back(m);
    const auto prepared = prepare_profiles(rows);
    REQUIRE(prepared.profiles.size() == 2);
    CHECK(prepared.profiles[0].protein_id == "drop");
    CHECK(prepared.profiles[0].status == ProteinStatus::FilteredPsm);
    CHECK(prepared.profiles[1].status == ProteinStatus::Ok);
    CHECK(prepared.counts.ok == 1);
    CHECK(prepared.profiles[1].control.front().abundance == doctest::Approx(1.0));
}
