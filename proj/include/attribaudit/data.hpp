#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attribaudit/io.hpp"

// Cohort data: synthetic generation with planted ground truth, ingestion of
// event/static CSV pairs, and the preprocessing chain
// filter -> truncate/aggregate -> impute -> summarize -> split.

namespace attribaudit::data {

struct EventRecord {
    std::string stay_id;
    double time = 0.0;  // hours; re-anchored so each stay's first record is t=0
    std::string feature;
    double value = 0.0;
};

struct Treatment {
    std::string type;
    std::vector<double> spans;  // duration hours, each > 0
    double total_hours() const;
};

struct StaticRecord {
    std::string stay_id;
    double age = 0.0;
    std::string gender;
    std::string ethnicity;
    std::string marital_status;
    std::string insurance;
    int label = 0;
    std::vector<Treatment> treatments;
};

// Protected-attribute vocabularies. Age is binned; the rest are categorical.
const std::vector<std::string>& attribute_names();  // age, gender, ethnicity, marital_status, insurance
const std::vector<std::string>& vocabulary(const std::string& attribute);
const std::vector<std::string>& treatment_types();  // 5 ventilation categories
std::size_t age_bin(double age);
const std::string& age_bin_label(std::size_t bin);
// Group label of a record under one attribute (age maps to its bin label).
const std::string& attribute_value(const StaticRecord& rec, const std::string& attribute);

struct Cohort {
    std::size_t n = 0, t = 0, f = 0;
    std::size_t temporal_features = 0;       // features [temporal_features, f) are static encodings
    std::vector<double> x;                   // n*t*f row-major
    std::vector<std::uint8_t> mask;          // observed-before-imputation flags, n*t*f
    std::vector<int> y;
    std::vector<std::string> feature_names;  // length f
    std::vector<StaticRecord> statics;

    // Synthetic-only ground truth; empty for loaded cohorts.
    std::vector<std::size_t> ground_truth_informative;  // ascending temporal feature indices
    std::vector<double> informative_coeffs;             // aligned with the above
    std::vector<double> oracle_logit;                   // generating logit per sample
    std::vector<std::uint8_t> severe_comorbidity;

    std::size_t cell(std::size_t i, std::size_t ti, std::size_t j) const {
        return (i * t + ti) * f + j;
    }
    double at(std::size_t i, std::size_t ti, std::size_t j) const {
        return x[cell(i, ti, j)];
    }
    double& at(std::size_t i, std::size_t ti, std::size_t j) {
        return x[cell(i, ti, j)];
    }
};

struct GroupBias {
    std::string attribute;
    std::string group;
    double mortality_shift = 0.0;    // added to the label probability
    double label_noise_shift = 0.0;  // added to the flip probability
};

struct GroupFeatureEffect {
    std::string attribute;
    std::string group;
    std::size_t feature = 0;   // temporal feature index
    double coeff_delta = 0.0;  // extra logit weight for members of the group
};

struct TreatmentBias {
    std::string attribute;
    std::string group;
    std::string treatment;
    double adoption_shift = 0.0;
    double duration_scale = 1.0;
};

struct GeneratorSpec {
    std::size_t n = 1000;
    std::size_t t = 24;
    std::size_t f = 50;            // temporal feature count
    std::size_t informative = 5;   // k planted features
    double missingness = 0.1;
    double label_noise = 0.0;
    double base_logit = -1.2;
    double informative_coeff = 1.0;  // coefficient scale; planted weights ramp up from it
    double treatment_rate = 0.25;
    bool balanced_groups = false;  // uniform sampling over each vocabulary
    std::vector<GroupBias> group_bias;
    std::vector<GroupFeatureEffect> group_feature_effects;
    std::vector<TreatmentBias> treatment_bias;

    void validate() const;  // throws ConfigError
    static GeneratorSpec from_config(const io::Config& cfg);  // [generator] section
};

// Deterministic in (spec, seed): identical inputs give bit-identical cohorts.
Cohort generate_synthetic_cohort(const GeneratorSpec& spec, std::uint64_t seed);

// Cohort selection rule: adults, stay length 12h..10d, first ICU stay.
bool keep_stay(double age, double duration_hours, bool first_stay);

// Hourly grid for one stay. Events before t=0 or at/after T hours are dropped;
// multiple values in one [h, h+1) bin are averaged.
void truncate_and_aggregate(const std::vector<EventRecord>& events, std::size_t t,
                            const std::map<std::string, std::size_t>& feature_index,
                            double* grid, std::uint8_t* mask);

// Forward fill, then backward fill, then train mean for all-missing series.
void impute_series(double* x, const std::uint8_t* mask, std::size_t t,
                   std::size_t stride, double train_mean);
void impute(Cohort& cohort, const std::vector<double>& feature_means);

// Mean of observed cells per feature; features with no observations fall back to 0.
std::vector<double> observed_feature_means(const Cohort& cohort);

struct TabularSummary {
    std::size_t n = 0, f = 0;
    std::vector<double> xs;  // n*f row-major
    std::vector<std::string> column_names;
    struct Provenance {
        std::size_t source_feature;
        std::string statistic;  // min | max | mean | static
    };
    std::vector<Provenance> provenance;
};

// Three columns (min, max, mean) per temporal feature, then statics verbatim.
TabularSummary summarize_tabular(const Cohort& cohort);

// Row subset preserving ground-truth sidecars and statics.
Cohort subset_cohort(const Cohort& cohort, const std::vector<std::size_t>& indices);

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// 60/20/20: val and test get floor(n/5) each, train takes the remainder.
SplitIndices split(std::size_t n, std::uint64_t seed);

// CSV ingestion; applies the full preprocessing chain.
Cohort load_cohort(const std::string& events_path, const std::string& static_path,
                   std::size_t t = 24);

// Binary cohort cache for chaining CLI stages; byte-stable given equal cohorts.
void save_cohort(const Cohort& cohort, const std::string& path);
Cohort load_cohort_binary(const std::string& path);

// External-schema export of a cohort (observed cells only in the events file).
void export_cohort_csv(const Cohort& cohort, const std::string& events_path,
                       const std::string& static_path);

}  // namespace attribaudit::data
