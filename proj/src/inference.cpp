#include "thermal/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "thermal/curves.hpp"
#include "thermal/parallel.hpp"

namespace thermal::inference {

double lr_statistic(double mll_joint, double mll_control, double mll_perturbation) {
    return -2.0 * (mll_joint - (mll_control + mll_perturbation));
}

gp::Design design_of(const ingest::ProteinProfile& profile, Condition condition) {
    gp::Design d;
    for (const auto& o : profile.observations(condition)) {
        d.x.push_back(o.temperature);
        d.y.push_back(o.abundance);
    }
    return d;
}

ProteinFit fit_designs(std::string protein_id, gp::Design control, gp::Design perturbation,
                       const gp::FitConfig& config) {
    ProteinFit fit;
    fit.protein_id = std::move(protein_id);
    gp::Design pooled = control;
    pooled.x.insert(pooled.x.end(), perturbation.x.begin(), perturbation.x.end());
    pooled.y.insert(pooled.y.end(), perturbation.y.begin(), perturbation.y.end());

    fit.control = gp::fit_gp(control, config);
    fit.perturbation = gp::fit_gp(perturbation, config);
    fit.joint = gp::fit_gp(std::move(pooled), config);
    fit.control_data = std::move(control);
    fit.perturbation_data = std::move(perturbation);
    fit.lambda = lr_statistic(fit.joint.mll(), fit.control.mll(), fit.perturbation.mll());
    return fit;
}

ProteinFit fit_protein(const ingest::ProteinProfile& profile, const gp::FitConfig& config) {
    return fit_designs(profile.protein_id, design_of(profile, Condition::Control),
                       design_of(profile, Condition::Perturbation), config);
}

NullSamples sample_null(const ProteinFit& fit, int samples_per_protein, std::uint64_t seed,
                        const gp::FitConfig& config, int max_retries) {
    const std::size_t n_control = fit.control_data.size();
    std::vector<double> x_all = fit.control_data.x;
    x_all.insert(x_all.end(), fit.perturbation_data.x.begin(), fit.perturbation_data.x.end());
    const auto n = static_cast<Eigen::Index>(x_all.size());

    const auto pred = gp::posterior_predict(fit.joint, x_all);
    Eigen::MatrixXd cov = pred.predictive_covariance;
    Eigen::MatrixXd lower;
    for (double jitter = 0.0;; jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0) {
        Eigen::MatrixXd k = cov;
        k.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(k);
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            break;
        }
        if (jitter > 1e-2) throw FitError("joint predictive covariance is not positive definite");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    NullSamples out;
    out.lambdas.reserve(static_cast<std::size_t>(samples_per_protein));
    Eigen::VectorXd z(n);
    for (int s = 0; s < samples_per_protein; ++s) {
        bool done = false;
        for (int attempt = 0; attempt <= max_retries && !done; ++attempt) {
            for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
            const Eigen::VectorXd y = pred.predictive_mean + lower * z;
            gp::Design control{fit.control_data.x, {}};
            gp::Design perturbation{fit.perturbation_data.x, {}};
            for (Eigen::Index i = 0; i < n; ++i) {
                (static_cast<std::size_t>(i) < n_control ? control.y : perturbation.y).push_back(y[i]);
            }
            try {
                out.lambdas.push_back(fit_designs(fit.protein_id, std::move(control), std::move(perturbation), config).lambda);
                done = true;
            } catch (const FitError&) {
                ++out.failed_draws;
            }
        }
        if (!done) ++out.skipped;
    }
    return out;
}

NullDistribution pool_null(std::vector<ProteinNull> per_protein, int samples_per_protein, std::uint64_t seed) {
    std::sort(per_protein.begin(), per_protein.end(),
              [](const ProteinNull& a, const ProteinNull& b) { return a.protein_id < b.protein_id; });
    NullDistribution null;
    null.samples_per_protein = samples_per_protein;
    null.seed = seed;
    for (auto& p : per_protein) {
        null.protein_ids.push_back(p.protein_id);
        null.counts.push_back(p.lambdas.size());
        null.samples.insert(null.samples.end(), p.lambdas.begin(), p.lambdas.end());
    }
    if (null.samples.empty()) throw DataError("null distribution is empty: no statistic could be sampled");
    null.sorted = null.samples;
    std::sort(null.sorted.begin(), null.sorted.end());
    return null;
}

double empirical_pvalue(double observed, const NullDistribution& null) {
    const auto& s = null.sorted;
    const auto at_least = static_cast<double>(s.end() - std::lower_bound(s.begin(), s.end(), observed));
    return (1.0 + at_least) / (1.0 + static_cast<double>(s.size()));
}

std::vector<double> bh_adjust(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        // the running minimum gives tied p-values the adjustment of their highest rank
        const std::size_t rank = k + 1;
        const double p = p_values[order[k]];
        const double q = std::min(1.0, p * (static_cast<double>(m) / static_cast<double>(rank)));
        running = std::min(running, q);
        adjusted[order[k]] = running;
    }
    return adjusted;
}

InferenceOutput run_inference(std::span<const ingest::ProteinProfile> profiles, const InferenceConfig& config) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].status == ProteinStatus::Ok) ok.push_back(i);
    }
    if (ok.empty()) {
        const auto c = ingest::count_statuses(profiles);
        std::ostringstream msg;
        msg << "no protein passed filtering (total " << c.total << ", FilteredPsm " << c.filtered_psm
            << ", FilteredReplicates " << c.filtered_replicates << ", FilteredDegenerate " << c.filtered_degenerate
            << ")";
        throw DataError(msg.str());
    }

    struct Slot {
        std::optional<ProteinFit> fit;
        NullSamples null;
        report::EffectSize effect;
    };
    std::vector<Slot> slots(ok.size());
    parallel_for(ok.size(), config.workers, [&](std::size_t k) {
        const auto& profile = profiles[ok[k]];
        auto& slot = slots[k];
        try {
            slot.fit = fit_protein(profile, config.fit);
            slot.null = sample_null(*slot.fit, config.samples_per_protein, derive_seed(config.seed, profile.protein_id),
                                    config.fit, config.max_null_retries);
        } catch (const FitError&) {
            slot.fit.reset();
            return;
        }
        slot.effect = report::effect_size(report::make_grid(slot.fit->control, slot.fit->perturbation, config.grid_size));
    });

    InferenceOutput out;
    out.results.resize(profiles.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        out.results[i].protein_id = profiles[i].protein_id;
        out.results[i].status = profiles[i].status;
    }

    std::vector<ProteinNull> per_protein;
    std::vector<std::size_t> tested;
    for (std::size_t k = 0; k < ok.size(); ++k) {
        auto& slot = slots[k];
        auto& result = out.results[ok[k]];
        if (!slot.fit) {
            result.status = ProteinStatus::FitFailed;
            ++out.diagnostics.fit_failed;
            continue;
        }
        out.diagnostics.null_skipped += static_cast<std::size_t>(slot.null.skipped);
        out.diagnostics.null_failed_draws += static_cast<std::size_t>(slot.null.failed_draws);
        per_protein.push_back({slot.fit->protein_id, std::move(slot.null.lambdas)});
        result.lambda = slot.fit->lambda;
        result.effect_size = slot.effect.value;
        result.signed_effect_size = slot.effect.signed_value;
        tested.push_back(ok[k]);
    }
    out.null = pool_null(std::move(per_protein), config.samples_per_protein, config.seed);
    out.diagnostics.tested = tested.size();

    std::vector<double> p(tested.size());
    for (std::size_t j = 0; j < tested.size(); ++j) {
        auto& r = out.results[tested[j]];
        r.p_value = empirical_pvalue(*r.lambda, out.null);
        p[j] = *r.p_value;
    }
    const auto q = bh_adjust(p);
    for (std::size_t j = 0; j < tested.size(); ++j) out.results[tested[j]].p_adjusted = q[j];

    for (auto& slot : slots) {
        if (slot.fit) out.fits.push_back(std::move(*slot.fit));
    }
    std::sort(out.fits.begin(), out.fits.end(),
              [](const ProteinFit& a, const ProteinFit& b) { return a.protein_id < b.protein_id; });
    return out;
}

}  // namespace thermal::inference
