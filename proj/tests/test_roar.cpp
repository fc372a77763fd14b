#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "attribaudit/data.hpp"
#include "attribaudit/errors.hpp"
#include "attribaudit/io.hpp"
#include "attribaudit/models.hpp"
#include "attribaudit/rng.hpp"
#include "attribaudit/roar.hpp"
#include "doctest.h"

using namespace attribaudit;
using namespace attribaudit::roar;

namespace {

data::Cohort planted_cohort(std::uint64_t seed) {
    data::GeneratorSpec spec;
    spec.n = 600;
    spec.t = 8;
    spec.f = 12;
    spec.informative = 3;
    spec.missingness = 0.0;
    spec.label_noise = 0.0;
    spec.informative_coeff = 1.2;
    return data::generate_synthetic_cohort(spec, seed);
}

bool is_permutation_of_iota(const std::vector<std::size_t>& order, std::size_t d) {
    if (order.size() != d) {
        return false;
    }
    std::vector<char> seen(d, 0);
    for (std::size_t v : order) {
        if (v >= d || seen[v]) {
            return false;
        }
        seen[v] = 1;
    }
    return true;
}

}  // namespace

TEST_CASE("rank_scores sorts descending with index tie-break") {
    CHECK(rank_scores({0.1, 0.9, 0.5}) == std::vector<std::size_t>{1, 2, 0});
    CHECK(rank_scores({0.7, 0.7, 0.7, 0.7}) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(rank_scores({0.5, 0.9, 0.9, 0.1}) == std::vector<std::size_t>{1, 2, 0, 3});
    CHECK_THROWS_AS(rank_scores({0.5, std::nan("")}), MetricError);

    // A random attribution assigns rank values; the induced order walks the
    // values downward.
    SeededRng rng(5);
    std::vector<double> scores(12);
    std::iota(scores.begin(), scores.end(), 1.0);
    rng.shuffle(std::span<double>(scores));
    const std::vector<std::size_t> order = rank_scores(scores);
    for (std::size_t k = 0; k < scores.size(); ++k) {
        CHECK(scores[order[k]] == static_cast<double>(scores.size() - k));
    }
}

TEST_CASE("ablation_count matches exact rational ceilings at every tenth") {
    for (std::size_t d : {1u, 7u, 50u, 120u, 1200u, 1319u}) {
        for (std::size_t ri = 0; ri <= 10; ++ri) {
            const double ratio = static_cast<double>(ri) / 10.0;
            const std::size_t expected = (ri * d + 9) / 10;  // ceil(ri*d/10) in integers
            CHECK(ablation_count(ratio, d) == expected);
        }
    }
    CHECK(ablation_count(0.1, 1200) == 120);
    CHECK(ablation_count(0.25, 10) == 3);
    CHECK_THROWS_AS(ablation_count(-0.1, 10), ConfigError);
    CHECK_THROWS_AS(ablation_count(1.5, 10), ConfigError);
}

TEST_CASE("ablate replaces exactly the top-ranked cells and is idempotent") {
    const std::size_t n = 4, d = 6;
    SeededRng rng(11);
    std::vector<double> xs(n * d);
    for (double& v : xs) {
        v = rng.uniform(1.0, 2.0);
    }
    const std::vector<double> original = xs;
    std::vector<double> replacement(d);
    for (std::size_t j = 0; j < d; ++j) {
        replacement[j] = -static_cast<double>(j);
    }
    const auto rankings = random_rankings(n, d, 13);

    const std::vector<double> half = ablate(xs, n, d, rankings, 0.5, replacement);
    CHECK(xs == original);  // input untouched
    const std::size_t k = ablation_count(0.5, d);
    for (std::size_t i = 0; i < n; ++i) {
        std::set<std::size_t> top(rankings[i].begin(), rankings[i].begin() + k);
        for (std::size_t j = 0; j < d; ++j) {
            if (top.count(j)) {
                CHECK(half[i * d + j] == replacement[j]);
            } else {
                CHECK(half[i * d + j] == original[i * d + j]);
            }
        }
    }
    CHECK(ablate(half, n, d, rankings, 0.5, replacement) == half);
    CHECK(ablate(xs, n, d, rankings, 0.0, replacement) == original);

    const std::vector<double> full = ablate(xs, n, d, rankings, 1.0, replacement);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(full[i * d + j] == replacement[j]);
        }
    }
    CHECK_THROWS_AS(ablate(xs, n, d, {rankings[0]}, 0.5, replacement), ConfigError);
}

TEST_CASE("curve_auc reproduces hand trapezoids") {
    CHECK(curve_auc({0.0, 0.5, 1.0}, {0.8, 0.8, 0.8}) == doctest::Approx(0.8));
    CHECK(curve_auc({0.0, 1.0}, {1.0, 0.0}) == doctest::Approx(0.5));
    CHECK(curve_auc({0.0, 0.5, 1.0}, {1.0, 0.5, 0.5}) == doctest::Approx(0.625));
    // Independent accumulation for an 11-point curve.
    std::vector<double> ratios, values;
    SeededRng rng(17);
    for (std::size_t i = 0; i <= 10; ++i) {
        ratios.push_back(static_cast<double>(i) / 10.0);
        values.push_back(rng.uniform());
    }
    double hand = 0.0;
    for (std::size_t i = 1; i <= 10; ++i) {
        hand += 0.1 * 0.5 * (values[i] + values[i - 1]);
    }
    CHECK(curve_auc(ratios, values) == doctest::Approx(hand).epsilon(1e-12));
    CHECK_THROWS_AS(curve_auc({0.0}, {1.0}), MetricError);
    CHECK_THROWS_AS(curve_auc({0.0, 0.0}, {1.0, 1.0}), MetricError);
}

TEST_CASE("replacement vectors are train-split feature means") {
    const data::Cohort c = planted_cohort(19);
    const data::SplitIndices splits = data::split(c.n, 19);
    const std::vector<double> rep = sequential_replacement(c, splits.train);
    REQUIRE(rep.size() == c.t * c.f);
    for (std::size_t j = 0; j < c.f; ++j) {
        double mean = 0.0;
        for (std::size_t idx : splits.train) {
            for (std::size_t ti = 0; ti < c.t; ++ti) {
                mean += c.at(idx, ti, j);
            }
        }
        mean /= static_cast<double>(splits.train.size() * c.t);
        for (std::size_t ti = 0; ti < c.t; ++ti) {
            CHECK(rep[ti * c.f + j] == doctest::Approx(mean).epsilon(1e-12));
        }
    }

    const data::TabularSummary tab = data::summarize_tabular(c);
    const std::vector<double> trep = tabular_replacement(tab, splits.train);
    REQUIRE(trep.size() == tab.f);
    double col0 = 0.0;
    for (std::size_t idx : splits.train) {
        col0 += tab.xs[idx * tab.f];
    }
    CHECK(trep[0] == doctest::Approx(col0 / splits.train.size()).epsilon(1e-12));
}

TEST_CASE("oracle rankings put planted cells first, largest coefficient leading") {
    const data::Cohort c = planted_cohort(23);
    const std::size_t k = c.ground_truth_informative.size();
    const std::vector<std::size_t> order = oracle_cells_sequential(c);
    REQUIRE(is_permutation_of_iota(order, c.t * c.f));
    std::set<std::size_t> planted_cells;
    double best = 0.0;
    std::size_t best_feature = 0;
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t j = c.ground_truth_informative[r];
        for (std::size_t ti = 0; ti < c.t; ++ti) {
            planted_cells.insert(ti * c.f + j);
        }
        if (std::fabs(c.informative_coeffs[r]) > best) {
            best = std::fabs(c.informative_coeffs[r]);
            best_feature = j;
        }
    }
    for (std::size_t r = 0; r < planted_cells.size(); ++r) {
        CHECK(planted_cells.count(order[r]) == 1);
    }
    for (std::size_t ti = 0; ti < c.t; ++ti) {
        CHECK(order[ti] % c.f == best_feature);
    }

    const data::TabularSummary tab = data::summarize_tabular(c);
    const std::vector<std::size_t> torder = oracle_cells_tabular(c, tab);
    REQUIRE(is_permutation_of_iota(torder, tab.f));
    for (std::size_t r = 0; r < 3 * k; ++r) {
        const auto& prov = tab.provenance[torder[r]];
        CHECK(prov.statistic != "static");
        CHECK(std::count(c.ground_truth_informative.begin(),
                         c.ground_truth_informative.end(), prov.source_feature) == 1);
    }
}

TEST_CASE("random rankings are seeded permutations, distinct across samples") {
    const auto a = random_rankings(5, 30, 29);
    const auto b = random_rankings(5, 30, 29);
    const auto c = random_rankings(5, 30, 31);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& order : a) {
        CHECK(is_permutation_of_iota(order, 30));
    }
    CHECK(a[0] != a[1]);
}

TEST_CASE("roar curve degrades toward the constant-input degenerate point") {
    const data::Cohort c = planted_cohort(37);
    const data::SplitIndices splits = data::split(c.n, 37);

    RoarInput input;
    input.kind = models::ModelKind::recurrent;
    input.sequential = true;
    input.t = c.t;
    input.f = c.f;
    input.xs = &c.x;
    input.y = &c.y;
    input.splits = splits;
    input.rankings.assign(c.n, oracle_cells_sequential(c));
    input.replacement = sequential_replacement(c, splits.train);
    input.method = "oracle";

    models::TrainConfig tc;
    tc.epochs = 8;
    tc.hidden = 8;
    tc.learning_rate = 0.08;

    const DegradationCurve curve = roar_curve(input, tc, 41);
    REQUIRE(curve.ratios.size() == 11);
    CHECK(curve.ratios.front() == 0.0);
    CHECK(curve.ratios.back() == 1.0);
    CHECK(curve.method == "oracle");
    CHECK(curve.model_kind == "recurrent");
    for (std::size_t i = 0; i < 11; ++i) {
        CHECK(curve.auroc_values[i] >= 0.0);
        CHECK(curve.auroc_values[i] <= 1.0);
        CHECK(curve.auprc_values[i] >= 0.0);
        CHECK(curve.auprc_values[i] <= 1.0);
    }
    // Ratio 1.0: identical inputs give constant scores, so AUROC is exactly the
    // all-ties value and AUPRC the test prevalence.
    CHECK(curve.auroc_values.back() == doctest::Approx(0.5).epsilon(1e-12));
    double positives = 0.0;
    for (std::size_t idx : splits.test) {
        positives += c.y[idx];
    }
    CHECK(curve.auprc_values.back() ==
          doctest::Approx(positives / splits.test.size()).epsilon(1e-12));

    // Determinism.
    const DegradationCurve again = roar_curve(input, tc, 41);
    CHECK(again.auroc_values == curve.auroc_values);
    CHECK(again.auprc_values == curve.auprc_values);
    CHECK(again.curve_auc_auroc == curve.curve_auc_auroc);

    // Strong planted signal: removing every planted cell (ratio 0.3 covers
    // 3 of 12 features) must cost at least the calibrated margin.
    CHECK(curve.auroc_values[0] - curve.auroc_values[3] >= 0.2);

    // Oracle dominance against random rankings on both integrated metrics.
    RoarInput rnd = input;
    rnd.rankings = random_rankings(c.n, c.t * c.f, 43);
    rnd.method = "random";
    const DegradationCurve random_curve = roar_curve(rnd, tc, 41);
    CHECK(curve.curve_auc_auroc < random_curve.curve_auc_auroc);
    CHECK(curve.curve_auc_auprc < random_curve.curve_auc_auprc);

    const std::string curve_path = "roar_curve_test.csv";
    const std::string summary_path = "roar_summary_test.csv";
    write_curve_csv(curve_path, curve);
    write_summary_csv(summary_path, {curve, random_curve});
    const io::CsvTable ct = io::read_csv(curve_path, {"ratio", "auprc", "auroc"});
    CHECK(ct.rows.size() == 11);
    CHECK(ct.field_double(0, ct.column("auroc")) == curve.auroc_values[0]);
    const io::CsvTable st = io::read_csv(
        summary_path, {"method", "model", "curve_auc_auprc", "curve_auc_auroc"});
    CHECK(st.rows.size() == 2);
    CHECK(st.field(0, st.column("method")) == "oracle");
    CHECK(st.field_double(1, st.column("curve_auc_auroc")) ==
          doctest::Approx(random_curve.curve_auc_auroc).epsilon(1e-15));
    std::filesystem::remove(curve_path);
    std::filesystem::remove(summary_path);
}

TEST_CASE("train and test splits are ablated by the same rule") {
    const data::Cohort c = planted_cohort(47);
    const data::SplitIndices splits = data::split(c.n, 47);
    const std::size_t d = c.t * c.f;
    const auto rankings = random_rankings(c.n, d, 53);
    const std::vector<double> rep = sequential_replacement(c, splits.train);
    const std::vector<double> ablated = ablate(c.x, c.n, d, rankings, 0.3, rep);
    const std::size_t k = ablation_count(0.3, d);
    auto check_split = [&](const std::vector<std::size_t>& idx) {
        for (std::size_t i : idx) {
            std::set<std::size_t> top(rankings[i].begin(), rankings[i].begin() + k);
            for (std::size_t cell = 0; cell < d; ++cell) {
                if (top.count(cell)) {
                    CHECK(ablated[i * d + cell] == rep[cell]);
                } else {
                    CHECK(ablated[i * d + cell] == c.x[i * d + cell]);
                }
            }
        }
    };
    check_split(splits.train);
    check_split(splits.test);
}
