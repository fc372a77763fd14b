#include "attribaudit/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "attribaudit/errors.hpp"
#include "attribaudit/io.hpp"
#include "attribaudit/models.hpp"

namespace attribaudit::fairness {

using nlohmann::json;

ProtectedGrouping stratify(const std::vector<data::StaticRecord>& statics,
                           const std::string& attribute) {
    const std::vector<std::string>& vocab = data::vocabulary(attribute);
    ProtectedGrouping g;
    g.attribute = attribute;
    g.labels.reserve(statics.size());
    for (const data::StaticRecord& rec : statics) {
        const std::string& label = data::attribute_value(rec, attribute);
        if (std::find(vocab.begin(), vocab.end(), label) == vocab.end()) {
            throw SchemaError("stay " + rec.stay_id + " has " + attribute + " '" + label +
                              "' outside the vocabulary");
        }
        g.labels.push_back(label);
    }
    return g;
}

std::vector<TreatmentCell> treatment_disparity(
    const std::vector<data::StaticRecord>& statics, const ProtectedGrouping& grouping) {
    if (statics.size() != grouping.labels.size()) {
        throw ConfigError("grouping does not cover the static records");
    }
    std::vector<TreatmentCell> cells;
    for (const std::string& group : data::vocabulary(grouping.attribute)) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < statics.size(); ++i) {
            if (grouping.labels[i] == group) {
                members.push_back(i);
            }
        }
        if (members.empty()) {
            continue;
        }
        for (const std::string& treatment : data::treatment_types()) {
            TreatmentCell cell;
            cell.attribute = grouping.attribute;
            cell.group = group;
            cell.treatment = treatment;
            cell.group_size = members.size();
            double total_hours = 0.0;
            for (std::size_t i : members) {
                double hours = 0.0;
                bool treated = false;
                for (const data::Treatment& t : statics[i].treatments) {
                    if (t.type == treatment) {
                        treated = true;
                        hours += t.total_hours();
                    }
                }
                if (treated) {
                    cell.treated_count += 1;
                    total_hours += hours;
                }
            }
            cell.adoption_rate =
                static_cast<double>(cell.treated_count) / static_cast<double>(members.size());
            if (cell.treated_count > 0) {
                cell.mean_duration_hours =
                    total_hours / static_cast<double>(cell.treated_count);
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

FairnessReport group_auc_report(std::span<const double> scores,
                                std::span<const int> labels,
                                const std::vector<std::string>& group_labels,
                                const std::map<std::string, std::size_t>& train_counts,
                                const std::string& attribute) {
    if (scores.size() != labels.size() || scores.size() != group_labels.size()) {
        throw ConfigError("scores, labels and group labels must align");
    }
    if (scores.empty()) {
        throw ConfigError("fairness report needs a nonempty test split");
    }
    FairnessReport report;
    report.attribute = attribute;
    report.overall_auroc = models::auroc(scores, labels);

    const std::vector<std::string>& vocab = data::vocabulary(attribute);
    for (const std::string& label : group_labels) {
        if (std::find(vocab.begin(), vocab.end(), label) == vocab.end()) {
            throw ConfigError("group label '" + label + "' is not a " + attribute +
                              " group");
        }
    }
    for (const std::string& group : vocab) {
        std::vector<double> gs;
        std::vector<int> gl;
        for (std::size_t i = 0; i < group_labels.size(); ++i) {
            if (group_labels[i] == group) {
                gs.push_back(scores[i]);
                gl.push_back(labels[i]);
            }
        }
        if (gs.empty()) {
            continue;
        }
        GroupStats stats;
        stats.name = group;
        stats.n_test = gs.size();
        const auto it = train_counts.find(group);
        stats.n_train = it == train_counts.end() ? 0 : it->second;
        double positives = 0.0;
        for (int y : gl) {
            positives += y;
        }
        stats.mortality_rate = positives / static_cast<double>(gl.size());
        const bool both_classes = positives > 0.0 && positives < static_cast<double>(gl.size());
        if (both_classes) {
            stats.auroc = models::auroc(gs, gl);
        } else {
            stats.degenerate = true;
            report.warnings.push_back("group '" + group +
                                      "' has a single label class; excluded from summaries");
        }
        report.groups.push_back(std::move(stats));
    }
    if (report.groups.empty()) {
        throw MetricError("no group of attribute '" + attribute + "' appears in the test split");
    }

    double min_auc = std::numeric_limits<double>::infinity();
    double sum_auc = 0.0;
    std::size_t usable = 0;
    const GroupStats* minority = nullptr;
    for (const GroupStats& g : report.groups) {
        if (g.degenerate) {
            continue;
        }
        min_auc = std::min(min_auc, g.auroc);
        sum_auc += g.auroc;
        usable += 1;
        if (minority == nullptr || g.n_train < minority->n_train) {
            minority = &g;
        }
    }
    if (usable == 0) {
        throw MetricError("every group of attribute '" + attribute +
                          "' is single-class; no AUC summary is possible");
    }
    report.auc_min = min_auc;
    report.auc_macro_avg = sum_auc / static_cast<double>(usable);
    report.auc_minority = minority->auroc;
    report.minority_group = minority->name;
    for (const GroupStats& g : report.groups) {
        if (g.degenerate && g.n_train < minority->n_train) {
            report.warnings.push_back("smallest trained group '" + g.name +
                                      "' is single-class; minority AUC uses '" +
                                      minority->name + "'");
        }
    }
    return report;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw MetricError("pearson correlation needs at least 2 aligned pairs");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw MetricError("pearson correlation is undefined under zero variance");
    }
    return sxy / std::sqrt(sxx * syy);
}

namespace {

// Lentz's continued fraction for the incomplete beta function.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double dm = static_cast<double>(m);
        const double m2 = 2.0 * dm;
        double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            return h;
        }
    }
    throw MetricError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) {
        throw MetricError("incomplete beta needs positive shape parameters");
    }
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(a, b, x) / a;
    }
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) {
        throw MetricError("t-distribution needs positive degrees of freedom");
    }
    if (!std::isfinite(t)) {
        return 0.0;
    }
    const double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

Correlation mortality_auc_correlation(std::span<const double> mortality_rates,
                                      std::span<const double> aucs) {
    if (mortality_rates.size() < 3 || mortality_rates.size() != aucs.size()) {
        throw MetricError("mortality-AUC correlation needs at least 3 aligned pairs");
    }
    Correlation c;
    c.n = mortality_rates.size();
    c.r = pearson_r(mortality_rates, aucs);
    const double df = static_cast<double>(c.n - 2);
    const double denom = 1.0 - c.r * c.r;
    if (denom <= 0.0) {
        c.p_value = 0.0;
    } else {
        const double t = c.r * std::sqrt(df / denom);
        c.p_value = student_t_two_sided_p(t, df);
    }
    return c;
}

data::Cohort comorbidity_slice(const data::Cohort& cohort, bool severe) {
    if (cohort.severe_comorbidity.size() != cohort.n) {
        throw ConfigError("cohort has no severity flags");
    }
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < cohort.n; ++i) {
        if ((cohort.severe_comorbidity[i] != 0) == severe) {
            indices.push_back(i);
        }
    }
    if (indices.empty()) {
        throw MetricError("comorbidity slice is empty");
    }
    return data::subset_cohort(cohort, indices);
}

void write_fairness_json(const std::string& path,
                         const std::vector<FairnessReport>& reports,
                         const Correlation* mortality_correlation) {
    json doc;
    json attribute_reports = json::array();
    double pooled_min = std::numeric_limits<double>::infinity();
    double pooled_sum = 0.0;
    std::size_t pooled_count = 0;
    for (const FairnessReport& r : reports) {
        json groups = json::array();
        for (const GroupStats& g : r.groups) {
            json gj;
            gj["name"] = g.name;
            gj["n_train"] = g.n_train;
            gj["n_test"] = g.n_test;
            gj["mortality_rate"] = g.mortality_rate;
            gj["degenerate"] = g.degenerate;
            if (!g.degenerate) {
                gj["auroc"] = g.auroc;
                pooled_min = std::min(pooled_min, g.auroc);
                pooled_sum += g.auroc;
                pooled_count += 1;
            }
            groups.push_back(std::move(gj));
        }
        json rj;
        rj["attribute"] = r.attribute;
        rj["groups"] = std::move(groups);
        rj["auc_min"] = r.auc_min;
        rj["auc_macro_avg"] = r.auc_macro_avg;
        rj["auc_minority"] = r.auc_minority;
        rj["minority_group"] = r.minority_group;
        rj["overall_auroc"] = r.overall_auroc;
        rj["warnings"] = r.warnings;
        attribute_reports.push_back(std::move(rj));
    }
    doc["attribute_reports"] = std::move(attribute_reports);
    if (pooled_count > 0) {
        doc["pooled_across_attributes"] = {
            {"auc_min", pooled_min},
            {"auc_macro_avg", pooled_sum / static_cast<double>(pooled_count)},
            {"group_count", pooled_count},
        };
    }
    if (mortality_correlation != nullptr) {
        doc["mortality_auc_correlation"] = {
            {"pearson_r", mortality_correlation->r},
            {"p_value", mortality_correlation->p_value},
            {"pairs", mortality_correlation->n},
        };
    }
    doc["metadata"] = {
        {"minority_rule", "smallest training-set count"},
        {"duration_denominator", "treated members only"},
        {"score", "pre-sigmoid logit"},
    };
    io::write_file_atomic(path, doc.dump(2) + "\n");
}

void write_treatment_csv(const std::string& path,
                         const std::vector<TreatmentCell>& cells) {
    io::CsvWriter w({"attribute", "group", "treatment", "adoption_rate",
                     "mean_duration_hours"});
    for (const TreatmentCell& c : cells) {
        w.add_row({c.attribute, c.group, c.treatment, io::format_double(c.adoption_rate),
                   c.mean_duration_hours ? io::format_double(*c.mean_duration_hours) : ""});
    }
    io::write_file_atomic(path, w.str());
}

}  // namespace attribaudit::fairness
