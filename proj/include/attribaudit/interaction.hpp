#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attribaudit/attribution.hpp"
#include "attribaudit/fairness.hpp"

// Aggregation of per-sample attributions into global feature rankings,
// cross-method agreement, and group-importance statistics.

namespace attribaudit::interaction {

struct GlobalRanking {
    std::vector<double> mean_rank;   // per feature; cell ranks averaged over
                                     // samples and timesteps
    std::vector<std::size_t> order;  // features, lowest mean rank first
};

// Ordinal cell ranks per sample (descending abs score, index tie-break),
// averaged per feature. All results must share shape and method.
GlobalRanking global_rank_aggregate(
    const std::vector<attribution::AttributionResult>& results);

// |top-k intersection| / |top-k union| of two orders.
double jaccard_topk(const std::vector<std::size_t>& order1,
                    const std::vector<std::size_t>& order2, std::size_t k);

// Timestep-mean of abs scores: one value per feature for one sample.
std::vector<double> timestep_mean_abs(const attribution::AttributionResult& result);

struct GroupImportanceRow {
    std::string attribute;
    std::string group;
    std::size_t feature = 0;
    double g_value = 0.0;   // group mean of timestep-mean abs scores
    std::size_t rank = 0;   // 1-based rank of the feature within its group
};

// g_{i,A} per (group, feature); grouping labels align with results.
std::vector<GroupImportanceRow> group_feature_importance(
    const std::vector<attribution::AttributionResult>& results,
    const fairness::ProtectedGrouping& grouping);

struct ImportanceFairnessRow {
    std::string attribute;
    double mean_importance = 0.0;  // attribute encoding's mean abs attribution
    double auc_min = 0.0;
};

struct ImportanceFairness {
    std::vector<ImportanceFairnessRow> rows;
    double pearson = 0.0;
};

// Pairs each attribute's importance with its auc_min; needs 3+ attributes.
ImportanceFairness importance_vs_fairness(std::vector<ImportanceFairnessRow> rows);

void write_global_ranking_csv(const std::string& path, const GlobalRanking& ranking,
                              const std::vector<std::string>& feature_names);
// Square symmetric matrix of top-k Jaccard agreement between named orders.
void write_jaccard_matrix_csv(const std::string& path,
                              const std::vector<std::string>& names,
                              const std::vector<std::vector<std::size_t>>& orders,
                              std::size_t k);
void write_group_importance_csv(const std::string& path,
                                const std::vector<GroupImportanceRow>& rows,
                                const std::vector<std::string>& feature_names);
void write_importance_fairness_csv(const std::string& path,
                                   const ImportanceFairness& table);

}  // namespace attribaudit::interaction
