#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attribaudit/attribution.hpp"
#include "attribaudit/data.hpp"
#include "attribaudit/models.hpp"

// Remove-and-retrain evaluation: overwrite the top-ranked cells with training
// means in both splits, retrain from scratch, and integrate the degradation.

namespace attribaudit::roar {

struct DegradationCurve {
    std::vector<double> ratios;  // 0.0, 0.1, ..., 1.0
    std::vector<double> auprc_values;
    std::vector<double> auroc_values;
    std::string method;
    std::string model_kind;
    double curve_auc_auprc = 0.0;
    double curve_auc_auroc = 0.0;
};

// Descending abs score; ties broken by ascending cell index.
std::vector<std::size_t> rank_scores(const std::vector<double>& abs_scores);
std::vector<std::size_t> rank_cells(const attribution::AttributionResult& result);

// Cells replaced at a ratio: the top ceil(ratio * d) of the ranking.
std::size_t ablation_count(double ratio, std::size_t d);

// Per-sample overwrite of the top-ranked cells with `replacement` values.
// xs is n x d row-major; rankings[i] must be a permutation of {0..d-1}.
std::vector<double> ablate(const std::vector<double>& xs, std::size_t n, std::size_t d,
                           const std::vector<std::vector<std::size_t>>& rankings,
                           double ratio, const std::vector<double>& replacement);

// Mean of each temporal feature over the train split, broadcast over
// timesteps: replacement[t * f + j] = mean_j.
std::vector<double> sequential_replacement(const data::Cohort& cohort,
                                           const std::vector<std::size_t>& train);
// Mean of each summary column over the train split.
std::vector<double> tabular_replacement(const data::TabularSummary& tab,
                                        const std::vector<std::size_t>& train);

// Planted-first ranking from the generator's ground truth (largest coefficient
// first, remaining cells by ascending index). Tabular ranks summary columns
// whose source feature is planted first.
std::vector<std::size_t> oracle_cells_sequential(const data::Cohort& cohort);
std::vector<std::size_t> oracle_cells_tabular(const data::Cohort& cohort,
                                              const data::TabularSummary& tab);

// Independent uniform ranking per sample.
std::vector<std::vector<std::size_t>> random_rankings(std::size_t n, std::size_t d,
                                                      std::uint64_t seed);

struct RoarInput {
    models::ModelKind kind = models::ModelKind::recurrent;
    bool sequential = true;
    std::size_t t = 1, f = 0;               // model input shape; d = t * f
    const std::vector<double>* xs = nullptr;  // all cohort samples, n x d
    const std::vector<int>* y = nullptr;
    data::SplitIndices splits;
    std::vector<std::vector<std::size_t>> rankings;  // per cohort sample
    std::vector<double> replacement;                 // length d
    std::string method;
};

// Retrains at each ratio with a seed derived from (seed, ratio index) and a
// fixed epoch budget (no validation checkpointing). Training failures abort
// with the offending ratio named.
DegradationCurve roar_curve(const RoarInput& input, const models::TrainConfig& train_cfg,
                            std::uint64_t seed);

// Trapezoid over the unit ratio span. MetricError under 2 points.
double curve_auc(const std::vector<double>& ratios, const std::vector<double>& values);

void write_curve_csv(const std::string& path, const DegradationCurve& curve);
void write_summary_csv(const std::string& path,
                       const std::vector<DegradationCurve>& curves);

}  // namespace attribaudit::roar
