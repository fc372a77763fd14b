#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attribaudit/data.hpp"

// Group-stratified audits: prediction quality per protected group, treatment
// disparity, and the mortality-vs-AUC correlation.

namespace attribaudit::fairness {

struct ProtectedGrouping {
    std::string attribute;
    std::vector<std::string> labels;  // one group label per record
};

// Categorical attributes map through their vocabulary; age maps to its bin.
// SchemaError on a value outside the vocabulary.
ProtectedGrouping stratify(const std::vector<data::StaticRecord>& statics,
                           const std::string& attribute);

struct TreatmentCell {
    std::string attribute;
    std::string group;
    std::string treatment;
    std::size_t group_size = 0;
    std::size_t treated_count = 0;
    double adoption_rate = 0.0;  // treated / group size
    std::optional<double> mean_duration_hours;  // over treated members; absent if none
};

// One row per (group with members, treatment type). Multi-span durations sum.
std::vector<TreatmentCell> treatment_disparity(
    const std::vector<data::StaticRecord>& statics, const ProtectedGrouping& grouping);

struct GroupStats {
    std::string name;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double mortality_rate = 0.0;
    double auroc = 0.0;      // meaningless when degenerate
    bool degenerate = false;  // single-class group, excluded from summaries
};

struct FairnessReport {
    std::string attribute;
    std::vector<GroupStats> groups;  // vocabulary order, test-present groups
    double auc_min = 0.0;
    double auc_macro_avg = 0.0;
    double auc_minority = 0.0;
    double overall_auroc = 0.0;
    std::string minority_group;  // smallest training-set count, ties to vocab order
    std::vector<std::string> warnings;
};

// Scores and labels are the test split; group_labels align with them.
// MetricError when every group is degenerate.
FairnessReport group_auc_report(std::span<const double> scores,
                                std::span<const int> labels,
                                const std::vector<std::string>& group_labels,
                                const std::map<std::string, std::size_t>& train_counts,
                                const std::string& attribute);

double pearson_r(std::span<const double> xs, std::span<const double> ys);

// Continued-fraction evaluation of I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);
// Two-sided p for a t statistic: I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

struct Correlation {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

// Pearson r over (group mortality rate, group AUC) pairs with the t-transform
// p-value on n-2 degrees of freedom. Needs at least 3 pairs.
Correlation mortality_auc_correlation(std::span<const double> mortality_rates,
                                      std::span<const double> aucs);

// Samples whose severity flag equals `severe`. MetricError on an empty slice.
data::Cohort comorbidity_slice(const data::Cohort& cohort, bool severe);

// JSON: per-attribute reports, a pooled cross-attribute summary, the optional
// mortality correlation, and the denominator/minority-rule metadata.
void write_fairness_json(const std::string& path,
                         const std::vector<FairnessReport>& reports,
                         const Correlation* mortality_correlation);

// CSV: attribute,group,treatment,adoption_rate,mean_duration_hours.
void write_treatment_csv(const std::string& path,
                         const std::vector<TreatmentCell>& cells);

}  // namespace attribaudit::fairness
