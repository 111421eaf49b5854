#include "thermal/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "thermal/gp.hpp"

namespace thermal::synth {

CurveFamily parse_family(std::string_view name) {
    if (name == "sigmoid") return CurveFamily::Sigmoid;
    if (name == "nonsigmoid" || name == "gp") return CurveFamily::NonSigmoid;
    if (name == "mixed") return CurveFamily::Mixed;
    throw std::invalid_argument("unknown curve family '" + std::string(name) + "'");
}

std::string_view to_string(CurveFamily f) {
    switch (f) {
        case CurveFamily::Sigmoid: return "sigmoid";
        case CurveFamily::NonSigmoid: return "nonsigmoid";
        case CurveFamily::Mixed: return "mixed";
    }
    return "sigmoid";
}

std::vector<double> default_gradient() {
    std::vector<double> t(10);
    for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = 37.0 + 30.0 * i / 9.0;
    return t;
}

void SyntheticSpec::validate() const {
    if (proteins < 1) throw std::invalid_argument("protein count must be positive");
    if (!(fraction_perturbed >= 0.0 && fraction_perturbed <= 1.0)) {
        throw std::invalid_argument("fraction perturbed must lie in [0, 1]");
    }
    if (temperatures.size() < 2) throw std::invalid_argument("temperature gradient needs at least 2 points");
    for (std::size_t i = 1; i < temperatures.size(); ++i) {
        if (!(temperatures[i] > temperatures[i - 1])) {
            throw std::invalid_argument("temperature gradient must be strictly increasing");
        }
    }
    if (replicates < 1) throw std::invalid_argument("replicates must be positive");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw std::invalid_argument("noise must be >= 0");
    if (!std::isfinite(tm_shift) || !std::isfinite(amplitude_change) || !std::isfinite(mean_shift)) {
        throw std::invalid_argument("perturbation sizes must be finite");
    }
}

std::string protein_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%05d", index + 1);
    return buf;
}

namespace {

struct Curves {
    std::vector<double> control;
    std::vector<double> perturbation;
};

Curves sigmoid_curves(const SyntheticSpec& spec, bool affected, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> tm_dist(45.0, 57.0), slope_dist(0.25, 0.6), plateau_dist(0.0, 0.2);
    const double tm = tm_dist(rng);
    const double slope = slope_dist(rng);
    const double plateau = plateau_dist(rng);
    auto curve = [&](double t, double tm_, double p) { return (1.0 - p) / (1.0 + std::exp(slope * (t - tm_))) + p; };
    Curves c;
    for (double t : spec.temperatures) {
        c.control.push_back(curve(t, tm, plateau));
        c.perturbation.push_back(affected ? curve(t, tm + spec.tm_shift, std::clamp(plateau + spec.amplitude_change, 0.0, 0.95))
                                          : curve(t, tm, plateau));
    }
    return c;
}

Curves gp_curves(const SyntheticSpec& spec, bool affected, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> length_dist(3.0, 12.0);
    std::normal_distribution<double> normal;
    const double length = length_dist(rng);
    const gp::Hyperparams hp{length, 1.0, 1e-9, 0.0};
    const Eigen::MatrixXd k = gp::build_covariance(spec.temperatures, hp, 1e-8);
    const Eigen::MatrixXd lower = Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
    Eigen::VectorXd z(k.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    const Eigen::VectorXd f = lower * z;

    const double t_lo = spec.temperatures.front();
    const double t_hi = spec.temperatures.back();
    const double t_mid = 0.5 * (t_lo + t_hi);
    const double width = (t_hi - t_lo) / 20.0;
    Curves c;
    for (std::size_t i = 0; i < spec.temperatures.size(); ++i) {
        const double base = 0.5 + 0.2 * f[static_cast<Eigen::Index>(i)];
        c.control.push_back(base);
        if (affected) {
            const double step = 1.0 / (1.0 + std::exp(-(spec.temperatures[i] - t_mid) / width));
            c.perturbation.push_back(0.5 + 0.2 * (1.0 + spec.amplitude_change) * f[static_cast<Eigen::Index>(i)] +
                                     spec.mean_shift * step);
        } else {
            c.perturbation.push_back(base);
        }
    }
    return c;
}

}  // namespace

LabeledDataset generate(const SyntheticSpec& spec) {
    spec.validate();
    const int n = spec.proteins;
    const auto n_affected = static_cast<int>(std::lround(spec.fraction_perturbed * n));

    std::vector<std::string> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = protein_name(i);

    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    const std::uint64_t label_seed = mix64(spec.seed ^ 0x6c6162656c73ULL);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = derive_seed(label_seed, ids[a]);
        const auto hb = derive_seed(label_seed, ids[b]);
        return ha != hb ? ha < hb : ids[a] < ids[b];
    });

    LabeledDataset ds;
    for (const auto& id : ids) ds.affected[id] = false;
    for (int k = 0; k < n_affected; ++k) ds.affected[ids[order[static_cast<std::size_t>(k)]]] = true;

    for (const auto& id : ids) {
        const bool affected = ds.affected.at(id);
        std::mt19937_64 rng(derive_seed(spec.seed, id));
        CurveFamily family = spec.family;
        if (family == CurveFamily::Mixed) {
            family = (derive_seed(spec.seed ^ 0x66616d696c79ULL, id) & 1U) ? CurveFamily::NonSigmoid : CurveFamily::Sigmoid;
        }
        const Curves curves =
            family == CurveFamily::Sigmoid ? sigmoid_curves(spec, affected, rng) : gp_curves(spec, affected, rng);

        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<ingest::RawMeasurement> rows;
        double lowest = INFINITY;
        for (Condition cond : {Condition::Control, Condition::Perturbation}) {
            const auto& curve = cond == Condition::Control ? curves.control : curves.perturbation;
            for (int r = 1; r <= spec.replicates; ++r) {
                for (std::size_t t = 0; t < spec.temperatures.size(); ++t) {
                    const double y = curve[t] + spec.noise_sd * noise(rng);
                    lowest = std::min(lowest, y);
                    rows.push_back({id, cond, r, spec.temperatures[t], y, std::nullopt});
                }
            }
        }

        std::uniform_real_distribution<double> log_scale(std::log(1e4), std::log(1e6)), offset(0.05, 0.3);
        std::uniform_int_distribution<int> psm(3, 40);
        const double scale = std::exp(log_scale(rng));
        const double shift = std::max(0.0, -lowest) + offset(rng);
        const int psm_count = psm(rng);
        for (auto& row : rows) {
            row.abundance = scale * (*row.abundance + shift);
            row.psm_count = psm_count;
            ds.measurements.push_back(std::move(row));
        }
    }
    return ds;
}

void write_labels(std::ostream& out, const std::map<std::string, bool>& labels) {
    out << "protein_id,label\n";
    for (const auto& [id, affected] : labels) out << id << ',' << (affected ? "affected" : "unaffected") << '\n';
}

std::map<std::string, bool> read_labels(std::istream& in) {
    std::map<std::string, bool> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (line_no == 1 && line.rfind("protein_id", 0) == 0)) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("label line " + std::to_string(line_no) + " has no comma");
        const auto id = line.substr(0, comma);
        const auto label = line.substr(comma + 1);
        if (label == "affected" || label == "1" || label == "true") {
            labels[id] = true;
        } else if (label == "unaffected" || label == "0" || label == "false") {
            labels[id] = false;
        } else {
            throw DataError("label line " + std::to_string(line_no) + ": unknown label '" + label + "'");
        }
    }
    return labels;
}

RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels, std::span<const double> alphas) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    const auto negatives = static_cast<double>(labels.size()) - positives;
    if (positives == 0 || negatives == 0) throw std::invalid_argument("ROC needs both positive and negative labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    RocResult roc;
    roc.curve.push_back({-INFINITY, 0.0, 0.0});
    double tp = 0;
    double fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double threshold = scores[order[k]];
        for (; k < order.size() && scores[order[k]] == threshold; ++k) {
            (labels[order[k]] ? tp : fp) += 1.0;
        }
        const RocPoint p{threshold, fp / negatives, tp / positives};
        const auto& prev = roc.curve.back();
        roc.auc += 0.5 * (p.false_positive_rate - prev.false_positive_rate) *
                   (p.true_positive_rate + prev.true_positive_rate);
        roc.curve.push_back(p);
    }

    for (double alpha : alphas) {
        OperatingPoint op;
        op.alpha = alpha;
        double hit_tp = 0;
        double hit_fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] < alpha) (labels[i] ? hit_tp : hit_fp) += 1.0;
        }
        op.hits = static_cast<std::size_t>(hit_tp + hit_fp);
        op.sensitivity = hit_tp / positives;
        op.specificity = (negatives - hit_fp) / negatives;
        roc.operating_points.push_back(op);
    }
    return roc;
}

double ks_uniform(std::span<const double> p_values) {
    std::vector<double> p(p_values.begin(), p_values.end());
    std::sort(p.begin(), p.end());
    const auto n = static_cast<double>(p.size());
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double u = std::clamp(p[i], 0.0, 1.0);
        d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
    }
    return d;
}

CalibrationReport calibration_report(std::span<const double> p_values) {
    CalibrationReport r;
    r.count = p_values.size();
    if (p_values.empty()) return r;
    r.ks_statistic = ks_uniform(p_values);
    std::size_t below = 0;
    for (double p : p_values) {
        const auto bin = static_cast<std::size_t>(std::clamp(std::floor(p * 10.0), 0.0, 9.0));
        ++r.bins[bin];
        if (p < 0.05) ++below;
    }
    r.fraction_below_005 = static_cast<double>(below) / static_cast<double>(p_values.size());
    return r;
}

}  // namespace thermal::synth
