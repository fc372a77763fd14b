#include "attribaudit/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "attribaudit/errors.hpp"
#include "attribaudit/io.hpp"
#include "attribaudit/roar.hpp"

namespace attribaudit::interaction {

GlobalRanking global_rank_aggregate(
    const std::vector<attribution::AttributionResult>& results) {
    if (results.empty()) {
        throw ConfigError("global ranking needs at least one attribution result");
    }
    const std::size_t t = results.front().t;
    const std::size_t f = results.front().f;
    const std::string& method = results.front().method;
    std::vector<double> mean_rank(f, 0.0);
    for (const attribution::AttributionResult& r : results) {
        if (r.t != t || r.f != f || r.method != method) {
            throw ConfigError("attribution results disagree in shape or method");
        }
        const std::vector<std::size_t> order = roar::rank_cells(r);
        for (std::size_t k = 0; k < order.size(); ++k) {
            mean_rank[order[k] % f] += static_cast<double>(k + 1);
        }
    }
    const double denom = static_cast<double>(results.size() * t);
    for (double& v : mean_rank) {
        v /= denom;
    }
    GlobalRanking g;
    g.mean_rank = mean_rank;
    g.order.resize(f);
    std::iota(g.order.begin(), g.order.end(), std::size_t{0});
    std::stable_sort(g.order.begin(), g.order.end(), [&](std::size_t a, std::size_t b) {
        return mean_rank[a] < mean_rank[b];
    });
    return g;
}

double jaccard_topk(const std::vector<std::size_t>& order1,
                    const std::vector<std::size_t>& order2, std::size_t k) {
    if (k == 0) {
        throw ConfigError("jaccard needs k >= 1");
    }
    if (k > order1.size() || k > order2.size()) {
        throw ConfigError("jaccard k exceeds the order length");
    }
    const std::set<std::size_t> a(order1.begin(), order1.begin() + k);
    const std::set<std::size_t> b(order2.begin(), order2.begin() + k);
    std::size_t inter = 0;
    for (std::size_t v : a) {
        inter += b.count(v);
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> timestep_mean_abs(const attribution::AttributionResult& result) {
    std::vector<double> phi(result.f, 0.0);
    for (std::size_t ti = 0; ti < result.t; ++ti) {
        for (std::size_t j = 0; j < result.f; ++j) {
            phi[j] += result.abs_scores[ti * result.f + j];
        }
    }
    for (double& v : phi) {
        v /= static_cast<double>(result.t);
    }
    return phi;
}

std::vector<GroupImportanceRow> group_feature_importance(
    const std::vector<attribution::AttributionResult>& results,
    const fairness::ProtectedGrouping& grouping) {
    if (results.size() != grouping.labels.size()) {
        throw ConfigError("grouping does not cover the attribution results");
    }
    if (results.empty()) {
        throw ConfigError("group importance needs at least one result");
    }
    const std::size_t f = results.front().f;
    std::vector<GroupImportanceRow> rows;
    for (const std::string& group : data::vocabulary(grouping.attribute)) {
        std::vector<double> g_value(f, 0.0);
        std::size_t members = 0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (grouping.labels[i] != group) {
                continue;
            }
            const std::vector<double> phi = timestep_mean_abs(results[i]);
            for (std::size_t j = 0; j < f; ++j) {
                g_value[j] += phi[j];
            }
            members += 1;
        }
        if (members == 0) {
            continue;
        }
        for (double& v : g_value) {
            v /= static_cast<double>(members);
        }
        const std::vector<std::size_t> order = roar::rank_scores(g_value);
        std::vector<std::size_t> rank_of(f);
        for (std::size_t k = 0; k < f; ++k) {
            rank_of[order[k]] = k + 1;
        }
        for (std::size_t j = 0; j < f; ++j) {
            rows.push_back({grouping.attribute, group, j, g_value[j], rank_of[j]});
        }
    }
    return rows;
}

ImportanceFairness importance_vs_fairness(std::vector<ImportanceFairnessRow> rows) {
    if (rows.size() < 3) {
        throw MetricError("importance-fairness table needs at least 3 attributes");
    }
    std::vector<double> xs, ys;
    for (const ImportanceFairnessRow& r : rows) {
        xs.push_back(r.mean_importance);
        ys.push_back(r.auc_min);
    }
    ImportanceFairness out;
    out.rows = std::move(rows);
    out.pearson = fairness::pearson_r(xs, ys);
    return out;
}

void write_global_ranking_csv(const std::string& path, const GlobalRanking& ranking,
                              const std::vector<std::string>& feature_names) {
    if (feature_names.size() != ranking.mean_rank.size()) {
        throw ConfigError("feature name count does not match the ranking");
    }
    io::CsvWriter w({"feature", "mean_rank", "global_order"});
    for (std::size_t pos = 0; pos < ranking.order.size(); ++pos) {
        const std::size_t j = ranking.order[pos];
        w.add_row({feature_names[j], io::format_double(ranking.mean_rank[j]),
                   io::format_int(static_cast<long long>(pos + 1))});
    }
    io::write_file_atomic(path, w.str());
}

void write_jaccard_matrix_csv(const std::string& path,
                              const std::vector<std::string>& names,
                              const std::vector<std::vector<std::size_t>>& orders,
                              std::size_t k) {
    if (names.size() != orders.size()) {
        throw ConfigError("jaccard matrix needs one name per order");
    }
    std::vector<std::string> header = {"name"};
    header.insert(header.end(), names.begin(), names.end());
    io::CsvWriter w(header);
    for (std::size_t i = 0; i < orders.size(); ++i) {
        std::vector<std::string> row = {names[i]};
        for (std::size_t j = 0; j < orders.size(); ++j) {
            row.push_back(io::format_double(jaccard_topk(orders[i], orders[j], k)));
        }
        w.add_row(std::move(row));
    }
    io::write_file_atomic(path, w.str());
}

void write_group_importance_csv(const std::string& path,
                                const std::vector<GroupImportanceRow>& rows,
                                const std::vector<std::string>& feature_names) {
    io::CsvWriter w({"attribute", "group", "feature", "g_value", "rank"});
    for (const GroupImportanceRow& r : rows) {
        if (r.feature >= feature_names.size()) {
            throw ConfigError("group importance row names a feature out of range");
        }
        w.add_row({r.attribute, r.group, feature_names[r.feature],
                   io::format_double(r.g_value),
                   io::format_int(static_cast<long long>(r.rank))});
    }
    io::write_file_atomic(path, w.str());
}

void write_importance_fairness_csv(const std::string& path,
                                   const ImportanceFairness& table) {
    io::CsvWriter w({"attribute", "mean_importance", "auc_min", "pearson_r"});
    for (const ImportanceFairnessRow& r : table.rows) {
        w.add_row({r.attribute, io::format_double(r.mean_importance),
                   io::format_double(r.auc_min), io::format_double(table.pearson)});
    }
    io::write_file_atomic(path, w.str());
}

}  // namespace attribaudit::interaction
