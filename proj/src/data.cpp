#include "attribaudit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include <json.hpp>

#include "attribaudit/errors.hpp"
#include "attribaudit/mathx.hpp"
#include "attribaudit/rng.hpp"

namespace attribaudit::data {

using nlohmann::json;

double Treatment::total_hours() const {
    double s = 0.0;
    for (double d : spans) s += d;
    return s;
}

namespace {

const std::vector<std::string> kAttributes = {"age", "gender", "ethnicity",
                                              "marital_status", "insurance"};

const std::vector<std::string> kAgeBins = {"<55 YRS", "55-67 YRS", "67-78 YRS",
                                           ">=78 YRS"};
const std::vector<std::string> kGender = {"FEMALE", "MALE"};
const std::vector<std::string> kEthnicity = {"ASIAN", "BLACK/AFRICAN AMERICAN",
                                             "HISPANIC/LATINO", "OTHER", "WHITE"};
const std::vector<std::string> kMarital = {"MARRIED", "SINGLE", "DIVORCED/WIDOWED"};
const std::vector<std::string> kInsurance = {"MEDICAID/MEDICARE", "PRIVATE"};

const std::vector<std::string> kTreatments = {"HighFlow", "InvasiveVent",
                                              "NonInvasiveVent", "Oxygen", "Trach"};

// Sampling weights for realistic-looking cohorts; balanced_groups overrides.
const std::vector<double> kGenderP = {0.45, 0.55};
const std::vector<double> kEthnicityP = {0.05, 0.15, 0.08, 0.12, 0.60};
const std::vector<double> kMaritalP = {0.45, 0.35, 0.20};
const std::vector<double> kInsuranceP = {0.55, 0.45};

std::size_t vocab_index(const std::vector<std::string>& vocab, const std::string& v,
                        const std::string& attribute) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i] == v) return i;
    }
    throw ConfigError("unknown " + attribute + " value '" + v + "'");
}

double static_encoding(const StaticRecord& rec, std::size_t static_slot) {
    switch (static_slot) {
        case 0:
            return (rec.age - 15.0) / 80.0;
        case 1:
            return static_cast<double>(vocab_index(kGender, rec.gender, "gender")) /
                   double(kGender.size() - 1);
        case 2:
            return static_cast<double>(
                       vocab_index(kEthnicity, rec.ethnicity, "ethnicity")) /
                   double(kEthnicity.size() - 1);
        case 3:
            return static_cast<double>(
                       vocab_index(kMarital, rec.marital_status, "marital_status")) /
                   double(kMarital.size() - 1);
        case 4:
            return static_cast<double>(
                       vocab_index(kInsurance, rec.insurance, "insurance")) /
                   double(kInsurance.size() - 1);
        default:
            throw Error("static slot out of range");
    }
}

void append_static_encodings(Cohort& c) {
    for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t s = 0; s < kAttributes.size(); ++s) {
            const double v = static_encoding(c.statics[i], s);
            const std::size_t j = c.temporal_features + s;
            for (std::size_t ti = 0; ti < c.t; ++ti) {
                c.x[c.cell(i, ti, j)] = v;
                c.mask[c.cell(i, ti, j)] = 1;
            }
        }
    }
}

std::size_t sample_categorical(SeededRng& rng, const std::vector<double>& probs,
                               bool balanced) {
    if (balanced) return rng.uniform_index(probs.size());
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

std::string padded_name(std::size_t idx, std::size_t count) {
    std::size_t width = 1;
    for (std::size_t v = count > 0 ? count - 1 : 0; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(idx);
    return "f" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

const std::vector<std::string>& attribute_names() { return kAttributes; }

const std::vector<std::string>& vocabulary(const std::string& attribute) {
    if (attribute == "age") return kAgeBins;
    if (attribute == "gender") return kGender;
    if (attribute == "ethnicity") return kEthnicity;
    if (attribute == "marital_status") return kMarital;
    if (attribute == "insurance") return kInsurance;
    throw ConfigError("unknown protected attribute '" + attribute + "'");
}

const std::vector<std::string>& treatment_types() { return kTreatments; }

std::size_t age_bin(double age) {
    if (age < 55.0) return 0;
    if (age < 67.0) return 1;
    if (age < 78.0) return 2;
    return 3;
}

const std::string& age_bin_label(std::size_t bin) { return kAgeBins.at(bin); }

const std::string& attribute_value(const StaticRecord& rec, const std::string& attribute) {
    if (attribute == "age") return kAgeBins[age_bin(rec.age)];
    if (attribute == "gender") return rec.gender;
    if (attribute == "ethnicity") return rec.ethnicity;
    if (attribute == "marital_status") return rec.marital_status;
    if (attribute == "insurance") return rec.insurance;
    throw ConfigError("unknown protected attribute '" + attribute + "'");
}

void GeneratorSpec::validate() const {
    if (n < 10) throw ConfigError("generator: n must be at least 10");
    if (t < 1) throw ConfigError("generator: t must be positive");
    if (f < 1) throw ConfigError("generator: f must be positive");
    if (informative > f) throw ConfigError("generator: informative count exceeds f");
    if (!(missingness >= 0.0 && missingness < 1.0)) {
        throw ConfigError("generator: missingness must lie in [0, 1)");
    }
    if (!(label_noise >= 0.0 && label_noise <= 0.5)) {
        throw ConfigError("generator: label_noise must lie in [0, 0.5]");
    }
    if (!(treatment_rate >= 0.0 && treatment_rate <= 1.0)) {
        throw ConfigError("generator: treatment_rate must lie in [0, 1]");
    }
    auto check_group = [](const std::string& attribute, const std::string& group) {
        const auto& vocab = vocabulary(attribute);
        if (std::find(vocab.begin(), vocab.end(), group) == vocab.end()) {
            throw ConfigError("generator: '" + group + "' is not a " + attribute +
                              " group");
        }
    };
    for (const auto& b : group_bias) check_group(b.attribute, b.group);
    for (const auto& e : group_feature_effects) {
        check_group(e.attribute, e.group);
        if (e.feature >= f) {
            throw ConfigError("generator: feature effect index out of range");
        }
    }
    for (const auto& b : treatment_bias) {
        check_group(b.attribute, b.group);
        if (std::find(kTreatments.begin(), kTreatments.end(), b.treatment) ==
            kTreatments.end()) {
            throw ConfigError("generator: unknown treatment '" + b.treatment + "'");
        }
    }
}

GeneratorSpec GeneratorSpec::from_config(const io::Config& cfg) {
    GeneratorSpec s;
    const std::string sec = "generator";
    s.n = static_cast<std::size_t>(cfg.get_int_or(sec, "samples", 1000));
    s.t = static_cast<std::size_t>(cfg.get_int_or(sec, "timesteps", 24));
    s.f = static_cast<std::size_t>(cfg.get_int_or(sec, "features", 50));
    s.informative = static_cast<std::size_t>(cfg.get_int_or(sec, "informative", 5));
    s.missingness = cfg.get_double_or(sec, "missingness", 0.1);
    s.label_noise = cfg.get_double_or(sec, "label_noise", 0.0);
    s.base_logit = cfg.get_double_or(sec, "base_logit", -1.2);
    s.informative_coeff = cfg.get_double_or(sec, "informative_coeff", 1.0);
    s.treatment_rate = cfg.get_double_or(sec, "treatment_rate", 0.25);
    s.balanced_groups = cfg.get_bool_or(sec, "balanced_groups", false);

    auto entries = [&cfg, &sec](const std::string& key) {
        std::vector<std::vector<std::string>> out;
        if (!cfg.has(sec, key)) return out;
        for (const auto& entry : io::split(cfg.get(sec, key), ';')) {
            const std::string_view e = io::trim(entry);
            if (e.empty()) continue;
            auto fields = io::split(e, ':');
            for (auto& f : fields) f = std::string(io::trim(f));
            out.push_back(std::move(fields));
        }
        return out;
    };

    for (const auto& e : entries("group_bias")) {
        if (e.size() != 4) {
            throw ConfigError(
                "[generator] group_bias: expected attribute:group:mortality_shift:noise_shift");
        }
        s.group_bias.push_back({e[0], e[1],
                                io::parse_double(e[2], "group_bias mortality_shift"),
                                io::parse_double(e[3], "group_bias noise_shift")});
    }
    for (const auto& e : entries("group_feature_effects")) {
        if (e.size() != 4) {
            throw ConfigError(
                "[generator] group_feature_effects: expected attribute:group:feature:coeff_delta");
        }
        s.group_feature_effects.push_back(
            {e[0], e[1],
             static_cast<std::size_t>(io::parse_int(e[2], "feature index")),
             io::parse_double(e[3], "coeff_delta")});
    }
    for (const auto& e : entries("treatment_bias")) {
        if (e.size() != 5) {
            throw ConfigError(
                "[generator] treatment_bias: expected attribute:group:treatment:adoption_shift:duration_scale");
        }
        s.treatment_bias.push_back({e[0], e[1], e[2],
                                    io::parse_double(e[3], "adoption_shift"),
                                    io::parse_double(e[4], "duration_scale")});
    }
    s.validate();
    return s;
}

Cohort generate_synthetic_cohort(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();

    Cohort c;
    c.n = spec.n;
    c.t = spec.t;
    c.temporal_features = spec.f;
    c.f = spec.f + kAttributes.size();
    c.x.assign(c.n * c.t * c.f, 0.0);
    c.mask.assign(c.n * c.t * c.f, 0);
    c.y.assign(c.n, 0);
    c.statics.resize(c.n);
    c.oracle_logit.assign(c.n, 0.0);
    c.severe_comorbidity.assign(c.n, 0);

    for (std::size_t j = 0; j < spec.f; ++j) {
        c.feature_names.push_back(padded_name(j, spec.f));
    }
    for (const auto& a : kAttributes) c.feature_names.push_back(a);

    SeededRng rng_select(derive_seed(seed, "select"));
    SeededRng rng_static(derive_seed(seed, "static"));
    SeededRng rng_x(derive_seed(seed, "x"));
    SeededRng rng_miss(derive_seed(seed, "missing"));
    SeededRng rng_label(derive_seed(seed, "label"));
    SeededRng rng_treat(derive_seed(seed, "treatment"));
    SeededRng rng_sev(derive_seed(seed, "severity"));

    std::vector<std::size_t> order(spec.f);
    for (std::size_t j = 0; j < spec.f; ++j) order[j] = j;
    rng_select.shuffle(std::span(order));
    c.ground_truth_informative.assign(order.begin(),
                                      order.begin() + long(spec.informative));
    std::sort(c.ground_truth_informative.begin(), c.ground_truth_informative.end());
    for (std::size_t r = 0; r < spec.informative; ++r) {
        c.informative_coeffs.push_back(spec.informative_coeff * (1.0 + 0.25 * double(r)));
    }

    const std::size_t width = std::to_string(spec.n - 1).size();
    for (std::size_t i = 0; i < c.n; ++i) {
        StaticRecord& rec = c.statics[i];
        std::string digits = std::to_string(i);
        rec.stay_id = "s" + std::string(width - digits.size(), '0') + digits;
        rec.age = rng_static.uniform(16.0, 95.0);
        rec.gender = kGender[sample_categorical(rng_static, kGenderP, spec.balanced_groups)];
        rec.ethnicity =
            kEthnicity[sample_categorical(rng_static, kEthnicityP, spec.balanced_groups)];
        rec.marital_status =
            kMarital[sample_categorical(rng_static, kMaritalP, spec.balanced_groups)];
        rec.insurance =
            kInsurance[sample_categorical(rng_static, kInsuranceP, spec.balanced_groups)];
    }

    // Temporal values: per-sample feature level plus small per-step noise, so
    // the hourly mean tracks the planted signal.
    std::vector<double> mu(spec.f);
    for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t j = 0; j < spec.f; ++j) mu[j] = rng_x.normal();
        for (std::size_t ti = 0; ti < c.t; ++ti) {
            for (std::size_t j = 0; j < spec.f; ++j) {
                c.x[c.cell(i, ti, j)] = mu[j] + 0.25 * rng_x.normal();
                c.mask[c.cell(i, ti, j)] = 1;
            }
        }
    }

    append_static_encodings(c);

    for (std::size_t i = 0; i < c.n; ++i) {
        double z = spec.base_logit;
        for (std::size_t r = 0; r < c.ground_truth_informative.size(); ++r) {
            const std::size_t j = c.ground_truth_informative[r];
            double mean = 0.0;
            for (std::size_t ti = 0; ti < c.t; ++ti) mean += c.at(i, ti, j);
            mean /= double(c.t);
            z += c.informative_coeffs[r] * mean;
        }
        for (const auto& e : spec.group_feature_effects) {
            if (attribute_value(c.statics[i], e.attribute) != e.group) continue;
            double mean = 0.0;
            for (std::size_t ti = 0; ti < c.t; ++ti) mean += c.at(i, ti, e.feature);
            mean /= double(c.t);
            z += e.coeff_delta * mean;
        }
        c.oracle_logit[i] = z;

        double p = stable_sigmoid(z);
        double flip = spec.label_noise;
        for (const auto& b : spec.group_bias) {
            if (attribute_value(c.statics[i], b.attribute) != b.group) continue;
            p += b.mortality_shift;
            flip += b.label_noise_shift;
        }
        p = std::clamp(p, 0.0, 1.0);
        flip = std::clamp(flip, 0.0, 0.5);

        int y = rng_label.bernoulli(p) ? 1 : 0;
        if (rng_label.bernoulli(flip)) y = 1 - y;
        c.y[i] = y;
        c.statics[i].label = y;

        c.severe_comorbidity[i] = rng_sev.bernoulli(0.2 + 0.3 * p) ? 1 : 0;
    }

    for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t k = 0; k < kTreatments.size(); ++k) {
            double adopt = spec.treatment_rate;
            double dur_scale = 1.0;
            for (const auto& b : spec.treatment_bias) {
                if (b.treatment != kTreatments[k]) continue;
                if (attribute_value(c.statics[i], b.attribute) != b.group) continue;
                adopt += b.adoption_shift;
                dur_scale *= b.duration_scale;
            }
            if (!rng_treat.bernoulli(std::clamp(adopt, 0.0, 1.0))) continue;
            Treatment tr;
            tr.type = kTreatments[k];
            const std::size_t spans = 1 + rng_treat.uniform_index(3);
            for (std::size_t s = 0; s < spans; ++s) {
                tr.spans.push_back(rng_treat.uniform(1.0, 48.0) * dur_scale);
            }
            c.statics[i].treatments.push_back(std::move(tr));
        }
    }

    if (spec.missingness > 0.0) {
        for (std::size_t i = 0; i < c.n; ++i) {
            for (std::size_t ti = 0; ti < c.t; ++ti) {
                for (std::size_t j = 0; j < spec.f; ++j) {
                    if (rng_miss.bernoulli(spec.missingness)) {
                        c.mask[c.cell(i, ti, j)] = 0;
                    }
                }
            }
        }
        impute(c, observed_feature_means(c));
    }
    return c;
}

bool keep_stay(double age, double duration_hours, bool first_stay) {
    return first_stay && age >= 15.0 && duration_hours >= 12.0 &&
           duration_hours <= 240.0;
}

void truncate_and_aggregate(const std::vector<EventRecord>& events, std::size_t t,
                            const std::map<std::string, std::size_t>& feature_index,
                            double* grid, std::uint8_t* mask) {
    const std::size_t f = feature_index.size();
    std::vector<std::pair<std::size_t, double>> binned;
    binned.reserve(events.size());
    for (const auto& e : events) {
        if (!std::isfinite(e.value) || !std::isfinite(e.time)) {
            throw ConfigError("non-finite event for stay '" + e.stay_id + "'");
        }
        if (e.time < 0.0 || e.time >= double(t)) continue;
        auto it = feature_index.find(e.feature);
        if (it == feature_index.end()) {
            throw ConfigError("unknown feature '" + e.feature + "'");
        }
        const std::size_t bin = static_cast<std::size_t>(e.time);
        binned.emplace_back(bin * f + it->second, e.value);
    }
    // Sorting by (cell, value) fixes the summation order, so the grid does not
    // depend on the incoming event order.
    std::sort(binned.begin(), binned.end());
    std::fill(grid, grid + t * f, 0.0);
    std::fill(mask, mask + t * f, 0);
    for (std::size_t s = 0; s < binned.size();) {
        std::size_t e = s;
        double sum = 0.0;
        while (e < binned.size() && binned[e].first == binned[s].first) {
            sum += binned[e].second;
            ++e;
        }
        grid[binned[s].first] = sum / double(e - s);
        mask[binned[s].first] = 1;
        s = e;
    }
}

void impute_series(double* x, const std::uint8_t* mask, std::size_t t,
                   std::size_t stride, double train_mean) {
    bool any = false;
    double last = 0.0;
    for (std::size_t ti = 0; ti < t; ++ti) {
        if (mask[ti * stride]) {
            last = x[ti * stride];
            any = true;
        } else if (any) {
            x[ti * stride] = last;
        }
    }
    if (!any) {
        for (std::size_t ti = 0; ti < t; ++ti) x[ti * stride] = train_mean;
        return;
    }
    // Head cells before the first observation take the first observed value.
    for (std::size_t ti = 0; ti < t && !mask[ti * stride]; ++ti) {
        std::size_t next = ti;
        while (!mask[next * stride]) ++next;
        x[ti * stride] = x[next * stride];
    }
}

void impute(Cohort& cohort, const std::vector<double>& feature_means) {
    if (feature_means.size() != cohort.f) {
        throw ConfigError("impute: feature_means length mismatch");
    }
    for (double m : feature_means) {
        if (!std::isfinite(m)) throw ConfigError("impute: non-finite train mean");
    }
    for (std::size_t i = 0; i < cohort.n; ++i) {
        for (std::size_t j = 0; j < cohort.f; ++j) {
            impute_series(&cohort.x[cohort.cell(i, 0, j)], &cohort.mask[cohort.cell(i, 0, j)],
                          cohort.t, cohort.f, feature_means[j]);
        }
    }
}

std::vector<double> observed_feature_means(const Cohort& cohort) {
    std::vector<double> sums(cohort.f, 0.0);
    std::vector<std::size_t> counts(cohort.f, 0);
    for (std::size_t i = 0; i < cohort.n; ++i) {
        for (std::size_t ti = 0; ti < cohort.t; ++ti) {
            for (std::size_t j = 0; j < cohort.f; ++j) {
                if (cohort.mask[cohort.cell(i, ti, j)]) {
                    sums[j] += cohort.at(i, ti, j);
                    counts[j] += 1;
                }
            }
        }
    }
    for (std::size_t j = 0; j < cohort.f; ++j) {
        sums[j] = counts[j] > 0 ? sums[j] / double(counts[j]) : 0.0;
    }
    return sums;
}

TabularSummary summarize_tabular(const Cohort& cohort) {
    TabularSummary s;
    s.n = cohort.n;
    const std::size_t temporal = cohort.temporal_features;
    const std::size_t statics = cohort.f - temporal;
    s.f = 3 * temporal + statics;
    s.xs.assign(s.n * s.f, 0.0);
    for (std::size_t j = 0; j < temporal; ++j) {
        for (const char* stat : {"min", "max", "mean"}) {
            s.column_names.push_back(cohort.feature_names[j] + ":" + stat);
            s.provenance.push_back({j, stat});
        }
    }
    for (std::size_t j = temporal; j < cohort.f; ++j) {
        s.column_names.push_back(cohort.feature_names[j]);
        s.provenance.push_back({j, "static"});
    }
    for (std::size_t i = 0; i < cohort.n; ++i) {
        for (std::size_t j = 0; j < temporal; ++j) {
            double mn = cohort.at(i, 0, j), mx = mn, sum = 0.0;
            for (std::size_t ti = 0; ti < cohort.t; ++ti) {
                const double v = cohort.at(i, ti, j);
                mn = std::min(mn, v);
                mx = std::max(mx, v);
                sum += v;
            }
            s.xs[i * s.f + 3 * j + 0] = mn;
            s.xs[i * s.f + 3 * j + 1] = mx;
            s.xs[i * s.f + 3 * j + 2] = sum / double(cohort.t);
        }
        for (std::size_t j = temporal; j < cohort.f; ++j) {
            s.xs[i * s.f + 3 * temporal + (j - temporal)] = cohort.at(i, 0, j);
        }
    }
    return s;
}

Cohort subset_cohort(const Cohort& cohort, const std::vector<std::size_t>& indices) {
    Cohort out;
    out.n = indices.size();
    out.t = cohort.t;
    out.f = cohort.f;
    out.temporal_features = cohort.temporal_features;
    out.feature_names = cohort.feature_names;
    out.ground_truth_informative = cohort.ground_truth_informative;
    out.informative_coeffs = cohort.informative_coeffs;
    const std::size_t d = cohort.t * cohort.f;
    out.x.resize(out.n * d);
    out.mask.resize(out.n * d);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= cohort.n) throw ConfigError("subset index out of range");
        std::copy(cohort.x.begin() + i * d, cohort.x.begin() + (i + 1) * d,
                  out.x.begin() + k * d);
        std::copy(cohort.mask.begin() + i * d, cohort.mask.begin() + (i + 1) * d,
                  out.mask.begin() + k * d);
        out.y.push_back(cohort.y[i]);
        if (!cohort.statics.empty()) out.statics.push_back(cohort.statics[i]);
        if (!cohort.oracle_logit.empty()) out.oracle_logit.push_back(cohort.oracle_logit[i]);
        if (!cohort.severe_comorbidity.empty())
            out.severe_comorbidity.push_back(cohort.severe_comorbidity[i]);
    }
    return out;
}

SplitIndices split(std::size_t n, std::uint64_t seed) {
    if (n < 10) throw ConfigError("split: need at least 10 samples");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    SeededRng rng(seed);
    rng.shuffle(std::span(perm));
    const std::size_t n_val = n / 5;
    const std::size_t n_test = n / 5;
    const std::size_t n_train = n - n_val - n_test;
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + long(n_train));
    s.val.assign(perm.begin() + long(n_train), perm.begin() + long(n_train + n_val));
    s.test.assign(perm.begin() + long(n_train + n_val), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

namespace {

StaticRecord parse_static_row(const io::CsvTable& t, std::size_t row) {
    StaticRecord rec;
    rec.stay_id = t.field(row, t.column("stay_id"));
    rec.age = t.field_double(row, t.column("age"));
    rec.gender = t.field(row, t.column("gender"));
    rec.ethnicity = t.field(row, t.column("ethnicity"));
    rec.marital_status = t.field(row, t.column("marital_status"));
    rec.insurance = t.field(row, t.column("insurance"));
    const long long label = t.field_int(row, t.column("label"));
    const std::size_t line = t.line_numbers[row];
    if (rec.stay_id.empty()) throw SchemaError(t.path, line, "stay_id", "empty identifier");
    if (!(rec.age > 0.0) || !std::isfinite(rec.age)) {
        throw SchemaError(t.path, line, "age", "age must be a positive number");
    }
    if (label != 0 && label != 1) {
        throw SchemaError(t.path, line, "label", "label must be 0 or 1");
    }
    rec.label = static_cast<int>(label);
    auto check = [&](const char* col, const std::vector<std::string>& vocab,
                     const std::string& v) {
        if (std::find(vocab.begin(), vocab.end(), v) == vocab.end()) {
            throw SchemaError(t.path, line, col, "unknown value '" + v + "'");
        }
    };
    check("gender", kGender, rec.gender);
    check("ethnicity", kEthnicity, rec.ethnicity);
    check("marital_status", kMarital, rec.marital_status);
    check("insurance", kInsurance, rec.insurance);
    return rec;
}

std::optional<Treatment> parse_treatment_fields(const io::CsvTable& t, std::size_t row) {
    const std::string& type = t.field(row, t.column("treatment_type"));
    const std::string& spans = t.field(row, t.column("treatment_spans"));
    const std::size_t line = t.line_numbers[row];
    if (type.empty()) {
        if (!spans.empty()) {
            throw SchemaError(t.path, line, "treatment_spans",
                              "spans given without a treatment_type");
        }
        return std::nullopt;
    }
    if (std::find(kTreatments.begin(), kTreatments.end(), type) == kTreatments.end()) {
        throw SchemaError(t.path, line, "treatment_type", "unknown value '" + type + "'");
    }
    Treatment tr;
    tr.type = type;
    for (const auto& part : io::split(spans, ';')) {
        const std::string_view p = io::trim(part);
        if (p.empty()) continue;
        double d = 0.0;
        try {
            d = io::parse_double(p, "treatment span");
        } catch (const ConfigError&) {
            throw SchemaError(t.path, line, "treatment_spans",
                              "'" + std::string(p) + "' is not a number");
        }
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw SchemaError(t.path, line, "treatment_spans",
                              "span durations must be positive");
        }
        tr.spans.push_back(d);
    }
    if (tr.spans.empty()) {
        throw SchemaError(t.path, line, "treatment_spans",
                          "treatment_type without span durations");
    }
    return tr;
}

bool same_static_fields(const StaticRecord& a, const StaticRecord& b) {
    return a.age == b.age && a.gender == b.gender && a.ethnicity == b.ethnicity &&
           a.marital_status == b.marital_status && a.insurance == b.insurance &&
           a.label == b.label;
}

}  // namespace

Cohort load_cohort(const std::string& events_path, const std::string& static_path,
                   std::size_t t) {
    auto st = io::read_csv(static_path,
                           {"stay_id", "age", "gender", "ethnicity", "marital_status",
                            "insurance", "label", "treatment_type", "treatment_spans"});
    std::vector<StaticRecord> records;            // static-file order
    std::map<std::string, std::size_t> by_stay;   // stay_id -> records slot
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
        StaticRecord rec = parse_static_row(st, r);
        auto treatment = parse_treatment_fields(st, r);
        auto [it, inserted] = by_stay.emplace(rec.stay_id, records.size());
        if (inserted) {
            records.push_back(std::move(rec));
        } else if (!same_static_fields(records[it->second], rec)) {
            throw SchemaError(static_path, st.line_numbers[r], "stay_id",
                              "conflicting duplicate rows for '" + rec.stay_id + "'");
        }
        if (treatment) records[it->second].treatments.push_back(std::move(*treatment));
    }

    auto ev = io::read_csv(events_path, {"stay_id", "hour", "feature", "value"});
    std::map<std::string, std::vector<EventRecord>> events;
    std::map<std::string, std::size_t> feature_index;  // first-appearance order
    std::vector<std::string> feature_names;
    const std::size_t id_col = ev.column("stay_id");
    const std::size_t hour_col = ev.column("hour");
    const std::size_t feat_col = ev.column("feature");
    const std::size_t val_col = ev.column("value");
    for (std::size_t r = 0; r < ev.rows.size(); ++r) {
        EventRecord e;
        e.stay_id = ev.field(r, id_col);
        e.time = ev.field_double(r, hour_col);
        e.feature = ev.field(r, feat_col);
        e.value = ev.field_double(r, val_col);
        const std::size_t line = ev.line_numbers[r];
        if (by_stay.find(e.stay_id) == by_stay.end()) {
            throw SchemaError(events_path, line, "stay_id",
                              "event references unknown stay '" + e.stay_id + "'");
        }
        if (!std::isfinite(e.value)) {
            throw SchemaError(events_path, line, "value", "non-finite value");
        }
        if (!std::isfinite(e.time)) {
            throw SchemaError(events_path, line, "hour", "non-finite hour");
        }
        if (e.feature.empty()) {
            throw SchemaError(events_path, line, "feature", "empty feature name");
        }
        if (feature_index.emplace(e.feature, feature_index.size()).second) {
            feature_names.push_back(e.feature);
        }
        events[e.stay_id].push_back(std::move(e));
    }

    // First record anchors t=0; stay duration is the observed record span.
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < records.size(); ++r) {
        auto it = events.find(records[r].stay_id);
        double duration = 0.0;
        if (it != events.end() && !it->second.empty()) {
            double lo = it->second.front().time, hi = lo;
            for (const auto& e : it->second) {
                lo = std::min(lo, e.time);
                hi = std::max(hi, e.time);
            }
            duration = hi - lo;
            for (auto& e : it->second) e.time -= lo;
        }
        if (keep_stay(records[r].age, duration, true)) kept.push_back(r);
    }

    Cohort c;
    c.n = kept.size();
    c.t = t;
    c.temporal_features = feature_index.size();
    c.f = c.temporal_features + kAttributes.size();
    c.x.assign(c.n * c.t * c.f, 0.0);
    c.mask.assign(c.n * c.t * c.f, 0);
    c.feature_names = feature_names;
    for (const auto& a : kAttributes) c.feature_names.push_back(a);
    std::vector<double> grid(c.t * c.temporal_features);
    std::vector<std::uint8_t> gmask(c.t * c.temporal_features);
    for (std::size_t i = 0; i < c.n; ++i) {
        const StaticRecord& rec = records[kept[i]];
        c.statics.push_back(rec);
        c.y.push_back(rec.label);
        truncate_and_aggregate(events[rec.stay_id], c.t, feature_index, grid.data(),
                               gmask.data());
        for (std::size_t ti = 0; ti < c.t; ++ti) {
            for (std::size_t j = 0; j < c.temporal_features; ++j) {
                c.x[c.cell(i, ti, j)] = grid[ti * c.temporal_features + j];
                c.mask[c.cell(i, ti, j)] = gmask[ti * c.temporal_features + j];
            }
        }
    }
    append_static_encodings(c);
    impute(c, observed_feature_means(c));
    return c;
}

void save_cohort(const Cohort& c, const std::string& path) {
    json meta;
    meta["n"] = c.n;
    meta["t"] = c.t;
    meta["f"] = c.f;
    meta["temporal_features"] = c.temporal_features;
    meta["feature_names"] = c.feature_names;
    meta["y"] = c.y;
    meta["ground_truth_informative"] = c.ground_truth_informative;
    meta["informative_coeffs"] = c.informative_coeffs;
    meta["has_oracle"] = !c.oracle_logit.empty();
    meta["has_severity"] = !c.severe_comorbidity.empty();
    json statics = json::array();
    for (const auto& r : c.statics) {
        json treatments = json::array();
        for (const auto& tr : r.treatments) {
            treatments.push_back({{"type", tr.type}, {"spans", tr.spans}});
        }
        statics.push_back({{"stay_id", r.stay_id},
                           {"age", r.age},
                           {"gender", r.gender},
                           {"ethnicity", r.ethnicity},
                           {"marital_status", r.marital_status},
                           {"insurance", r.insurance},
                           {"label", r.label},
                           {"treatments", treatments}});
    }
    meta["statics"] = std::move(statics);

    const std::string header = meta.dump();
    std::string out = "ATTRIBAUDIT_COHORT v1 " + std::to_string(header.size()) + "\n";
    out += header;
    auto append_raw = [&out](const void* p, std::size_t bytes) {
        out.append(static_cast<const char*>(p), bytes);
    };
    append_raw(c.x.data(), c.x.size() * sizeof(double));
    append_raw(c.mask.data(), c.mask.size());
    if (!c.oracle_logit.empty()) {
        append_raw(c.oracle_logit.data(), c.oracle_logit.size() * sizeof(double));
    }
    if (!c.severe_comorbidity.empty()) {
        append_raw(c.severe_comorbidity.data(), c.severe_comorbidity.size());
    }
    io::write_file_atomic(path, out);
}

Cohort load_cohort_binary(const std::string& path) {
    const std::string blob = io::read_file(path);
    const std::size_t nl = blob.find('\n');
    if (nl == std::string::npos || blob.rfind("ATTRIBAUDIT_COHORT v1 ", 0) != 0) {
        throw ConfigError("'" + path + "' is not a cohort file");
    }
    const std::size_t meta_len = static_cast<std::size_t>(
        io::parse_int(blob.substr(22, nl - 22), "cohort header length"));
    if (blob.size() < nl + 1 + meta_len) {
        throw ConfigError("'" + path + "' is truncated");
    }
    json meta = json::parse(blob.substr(nl + 1, meta_len));

    Cohort c;
    c.n = meta.at("n").get<std::size_t>();
    c.t = meta.at("t").get<std::size_t>();
    c.f = meta.at("f").get<std::size_t>();
    c.temporal_features = meta.at("temporal_features").get<std::size_t>();
    c.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
    c.y = meta.at("y").get<std::vector<int>>();
    c.ground_truth_informative =
        meta.at("ground_truth_informative").get<std::vector<std::size_t>>();
    c.informative_coeffs = meta.at("informative_coeffs").get<std::vector<double>>();
    for (const auto& r : meta.at("statics")) {
        StaticRecord rec;
        rec.stay_id = r.at("stay_id").get<std::string>();
        rec.age = r.at("age").get<double>();
        rec.gender = r.at("gender").get<std::string>();
        rec.ethnicity = r.at("ethnicity").get<std::string>();
        rec.marital_status = r.at("marital_status").get<std::string>();
        rec.insurance = r.at("insurance").get<std::string>();
        rec.label = r.at("label").get<int>();
        for (const auto& tr : r.at("treatments")) {
            rec.treatments.push_back(
                {tr.at("type").get<std::string>(), tr.at("spans").get<std::vector<double>>()});
        }
        c.statics.push_back(std::move(rec));
    }

    const std::size_t cells = c.n * c.t * c.f;
    std::size_t off = nl + 1 + meta_len;
    auto take = [&blob, &off, &path](void* dst, std::size_t bytes) {
        if (off + bytes > blob.size()) throw ConfigError("'" + path + "' is truncated");
        std::memcpy(dst, blob.data() + off, bytes);
        off += bytes;
    };
    c.x.resize(cells);
    take(c.x.data(), cells * sizeof(double));
    c.mask.resize(cells);
    take(c.mask.data(), cells);
    if (meta.at("has_oracle").get<bool>()) {
        c.oracle_logit.resize(c.n);
        take(c.oracle_logit.data(), c.n * sizeof(double));
    }
    if (meta.at("has_severity").get<bool>()) {
        c.severe_comorbidity.resize(c.n);
        take(c.severe_comorbidity.data(), c.n);
    }
    return c;
}

void export_cohort_csv(const Cohort& c, const std::string& events_path,
                       const std::string& static_path) {
    io::CsvWriter events({"stay_id", "hour", "feature", "value"});
    for (std::size_t i = 0; i < c.n; ++i) {
        for (std::size_t ti = 0; ti < c.t; ++ti) {
            for (std::size_t j = 0; j < c.temporal_features; ++j) {
                if (!c.mask[c.cell(i, ti, j)]) continue;
                events.add_row({c.statics[i].stay_id, io::format_int(long(ti)),
                                c.feature_names[j], io::format_double(c.at(i, ti, j))});
            }
        }
    }
    events.write(events_path);

    io::CsvWriter statics({"stay_id", "age", "gender", "ethnicity", "marital_status",
                           "insurance", "label", "treatment_type", "treatment_spans"});
    for (const auto& r : c.statics) {
        auto base_row = [&r](const std::string& type, const std::string& spans) {
            return std::vector<std::string>{r.stay_id,        io::format_double(r.age),
                                            r.gender,         r.ethnicity,
                                            r.marital_status, r.insurance,
                                            io::format_int(r.label), type, spans};
        };
        if (r.treatments.empty()) {
            statics.add_row(base_row("", ""));
            continue;
        }
        for (const auto& tr : r.treatments) {
            std::string spans;
            for (std::size_t s = 0; s < tr.spans.size(); ++s) {
                if (s) spans += ';';
                spans += io::format_double(tr.spans[s]);
            }
            statics.add_row(base_row(tr.type, spans));
        }
    }
    statics.write(static_path);
}

}  // namespace attribaudit::data
