#include "attribaudit/roar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attribaudit/errors.hpp"
#include "attribaudit/rng.hpp"

namespace attribaudit::roar {

std::vector<std::size_t> rank_scores(const std::vector<double>& abs_scores) {
    for (double v : abs_scores) {
        if (!std::isfinite(v)) {
            throw MetricError("cannot rank non-finite attribution scores");
        }
    }
    std::vector<std::size_t> order(abs_scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return abs_scores[a] > abs_scores[b];
    });
    return order;
}

std::vector<std::size_t> rank_cells(const attribution::AttributionResult& result) {
    return rank_scores(result.abs_scores);
}

std::size_t ablation_count(double ratio, std::size_t d) {
    if (ratio < 0.0 || ratio > 1.0) {
        throw ConfigError("ablation ratio must lie in [0, 1]");
    }
    // The epsilon absorbs FP noise in ratio * d (0.1 * 1200 must give 120).
    const double cells = std::ceil(ratio * static_cast<double>(d) - 1e-9);
    return std::min(d, static_cast<std::size_t>(std::max(0.0, cells)));
}

std::vector<double> ablate(const std::vector<double>& xs, std::size_t n, std::size_t d,
                           const std::vector<std::vector<std::size_t>>& rankings,
                           double ratio, const std::vector<double>& replacement) {
    if (rankings.size() != n) {
        throw ConfigError("need one ranking per sample: " + std::to_string(rankings.size()) +
                          " rankings for " + std::to_string(n) + " samples");
    }
    if (replacement.size() != d || xs.size() != n * d) {
        throw ConfigError("ablation shapes disagree");
    }
    const std::size_t k = ablation_count(ratio, d);
    std::vector<double> out = xs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<std::size_t>& order = rankings[i];
        if (order.size() != d) {
            throw ConfigError("ranking for sample " + std::to_string(i) +
                              " has wrong length");
        }
        for (std::size_t r = 0; r < k; ++r) {
            out[i * d + order[r]] = replacement[order[r]];
        }
    }
    return out;
}

std::vector<double> sequential_replacement(const data::Cohort& cohort,
                                           const std::vector<std::size_t>& train) {
    if (train.empty()) {
        throw ConfigError("replacement means need a nonempty train split");
    }
    std::vector<double> mean(cohort.f, 0.0);
    for (std::size_t idx : train) {
        for (std::size_t ti = 0; ti < cohort.t; ++ti) {
            for (std::size_t j = 0; j < cohort.f; ++j) {
                mean[j] += cohort.at(idx, ti, j);
            }
        }
    }
    const double denom = static_cast<double>(train.size() * cohort.t);
    for (double& v : mean) {
        v /= denom;
    }
    std::vector<double> replacement(cohort.t * cohort.f);
    for (std::size_t ti = 0; ti < cohort.t; ++ti) {
        for (std::size_t j = 0; j < cohort.f; ++j) {
            replacement[ti * cohort.f + j] = mean[j];
        }
    }
    return replacement;
}

std::vector<double> tabular_replacement(const data::TabularSummary& tab,
                                        const std::vector<std::size_t>& train) {
    if (train.empty()) {
        throw ConfigError("replacement means need a nonempty train split");
    }
    std::vector<double> mean(tab.f, 0.0);
    for (std::size_t idx : train) {
        for (std::size_t j = 0; j < tab.f; ++j) {
            mean[j] += tab.xs[idx * tab.f + j];
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(train.size());
    }
    return mean;
}

namespace {

// Planted features ordered by |coefficient| descending, index ascending on ties.
std::vector<std::size_t> planted_order(const data::Cohort& cohort) {
    if (cohort.ground_truth_informative.empty()) {
        throw ConfigError("oracle ranking needs a synthetic cohort with planted features");
    }
    std::vector<std::size_t> idx(cohort.ground_truth_informative.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(cohort.informative_coeffs[a]) >
               std::fabs(cohort.informative_coeffs[b]);
    });
    std::vector<std::size_t> features(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        features[k] = cohort.ground_truth_informative[idx[k]];
    }
    return features;
}

std::vector<std::size_t> front_then_rest(const std::vector<std::size_t>& front,
                                         std::size_t d) {
    std::vector<char> used(d, 0);
    std::vector<std::size_t> order;
    order.reserve(d);
    for (std::size_t c : front) {
        order.push_back(c);
        used[c] = 1;
    }
    for (std::size_t c = 0; c < d; ++c) {
        if (!used[c]) {
            order.push_back(c);
        }
    }
    return order;
}

}  // namespace

std::vector<std::size_t> oracle_cells_sequential(const data::Cohort& cohort) {
    std::vector<std::size_t> front;
    for (std::size_t j : planted_order(cohort)) {
        for (std::size_t ti = 0; ti < cohort.t; ++ti) {
            front.push_back(ti * cohort.f + j);
        }
    }
    return front_then_rest(front, cohort.t * cohort.f);
}

std::vector<std::size_t> oracle_cells_tabular(const data::Cohort& cohort,
                                              const data::TabularSummary& tab) {
    std::vector<std::size_t> front;
    for (std::size_t j : planted_order(cohort)) {
        for (std::size_t col = 0; col < tab.f; ++col) {
            if (tab.provenance[col].statistic != "static" &&
                tab.provenance[col].source_feature == j) {
                front.push_back(col);
            }
        }
    }
    return front_then_rest(front, tab.f);
}

std::vector<std::vector<std::size_t>> random_rankings(std::size_t n, std::size_t d,
                                                      std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        SeededRng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        out[i].resize(d);
        std::iota(out[i].begin(), out[i].end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(out[i]));
    }
    return out;
}

double curve_auc(const std::vector<double>& ratios, const std::vector<double>& values) {
    if (ratios.size() < 2 || ratios.size() != values.size()) {
        throw MetricError("curve integration needs at least 2 aligned points");
    }
    double area = 0.0;
    for (std::size_t i = 1; i < ratios.size(); ++i) {
        if (ratios[i] <= ratios[i - 1]) {
            throw MetricError("curve ratios must be strictly ascending");
        }
        area += (ratios[i] - ratios[i - 1]) * 0.5 * (values[i] + values[i - 1]);
    }
    return area;
}

DegradationCurve roar_curve(const RoarInput& input, const models::TrainConfig& train_cfg,
                            std::uint64_t seed) {
    if (input.xs == nullptr || input.y == nullptr) {
        throw ConfigError("roar input is missing data");
    }
    const std::size_t d = input.t * input.f;
    const std::size_t n = input.y->size();
    if (input.xs->size() != n * d) {
        throw ConfigError("roar input shapes disagree");
    }

    DegradationCurve curve;
    curve.method = input.method;
    curve.model_kind = models::model_kind_name(input.kind);

    auto gather = [&](const std::vector<double>& xs, const std::vector<std::size_t>& idx,
                      std::vector<double>& x_out, std::vector<int>& y_out) {
        x_out.resize(idx.size() * d);
        y_out.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::copy(xs.begin() + idx[k] * d, xs.begin() + (idx[k] + 1) * d,
                      x_out.begin() + k * d);
            y_out[k] = (*input.y)[idx[k]];
        }
    };

    std::vector<double> x_train, x_test;
    std::vector<int> y_train, y_test;
    for (std::size_t ri = 0; ri <= 10; ++ri) {
        const double ratio = static_cast<double>(ri) / 10.0;
        const std::vector<double> ablated =
            ri == 0 ? *input.xs
                    : ablate(*input.xs, n, d, input.rankings, ratio, input.replacement);
        gather(ablated, input.splits.train, x_train, y_train);
        gather(ablated, input.splits.test, x_test, y_test);

        models::TrainConfig cfg = train_cfg;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(ri));
        models::PredictiveModel model;
        try {
            model = models::train(input.kind, input.sequential, input.t, input.f, x_train,
                                  y_train, {}, {}, cfg);
        } catch (const TrainingError& e) {
            throw TrainingError("retrain at ratio " + io::format_double(ratio) +
                                " failed: " + e.what());
        }
        const std::vector<double> scores = model.logits(x_test.data(), y_test.size());
        const models::EvalMetrics metrics = models::evaluate(scores, y_test);
        curve.ratios.push_back(ratio);
        curve.auprc_values.push_back(metrics.auprc);
        curve.auroc_values.push_back(metrics.auroc);
    }
    curve.curve_auc_auprc = curve_auc(curve.ratios, curve.auprc_values);
    curve.curve_auc_auroc = curve_auc(curve.ratios, curve.auroc_values);
    return curve;
}

void write_curve_csv(const std::string& path, const DegradationCurve& curve) {
    io::CsvWriter w({"ratio", "auprc", "auroc"});
    for (std::size_t i = 0; i < curve.ratios.size(); ++i) {
        w.add_row({io::format_double(curve.ratios[i]),
                   io::format_double(curve.auprc_values[i]),
                   io::format_double(curve.auroc_values[i])});
    }
    io::write_file_atomic(path, w.str());
}

void write_summary_csv(const std::string& path,
                       const std::vector<DegradationCurve>& curves) {
    io::CsvWriter w({"method", "model", "curve_auc_auprc", "curve_auc_auroc"});
    for (const DegradationCurve& c : curves) {
        w.add_row({c.method, c.model_kind, io::format_double(c.curve_auc_auprc),
                   io::format_double(c.curve_auc_auroc)});
    }
    io::write_file_atomic(path, w.str());
}

}  // namespace attribaudit::roar
