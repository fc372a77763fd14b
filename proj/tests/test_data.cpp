#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "attribaudit/data.hpp"
#include "attribaudit/errors.hpp"
#include "attribaudit/io.hpp"
#include "attribaudit/rng.hpp"

using namespace attribaudit;
using namespace attribaudit::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("attribaudit_data_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double group_rate(const Cohort& c, const std::string& attribute, const std::string& group) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < c.n; ++i) {
        if (attribute_value(c.statics[i], attribute) == group) {
            sum += c.y[i];
            ++count;
        }
    }
    REQUIRE(count > 0);
    return sum / double(count);
}

double label_feature_corr(const Cohort& c, std::size_t feature) {
    double my = 0.0, mx = 0.0;
    std::vector<double> means(c.n);
    for (std::size_t i = 0; i < c.n; ++i) {
        double m = 0.0;
        for (std::size_t ti = 0; ti < c.t; ++ti) m += c.at(i, ti, feature);
        means[i] = m / double(c.t);
        mx += means[i];
        my += c.y[i];
    }
    mx /= double(c.n);
    my /= double(c.n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < c.n; ++i) {
        const double dx = means[i] - mx, dy = c.y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("generator echoes spec shape and plants the requested features") {
    GeneratorSpec spec;
    spec.n = 1000;
    spec.t = 24;
    spec.f = 50;
    spec.informative = 5;
    auto c = generate_synthetic_cohort(spec, 7);
    CHECK(c.n == 1000);
    CHECK(c.t == 24);
    CHECK(c.temporal_features == 50);
    CHECK(c.f == 55);
    CHECK(c.ground_truth_informative.size() == 5);
    CHECK(c.informative_coeffs.size() == 5);
    CHECK(c.feature_names.size() == 55);
    CHECK(c.feature_names[0] == "f00");
    CHECK(c.feature_names[50] == "age");
    CHECK(std::is_sorted(c.ground_truth_informative.begin(),
                         c.ground_truth_informative.end()));
    for (auto j : c.ground_truth_informative) CHECK(j < 50);
}

TEST_CASE("zero missingness leaves every cell observed") {
    GeneratorSpec spec;
    spec.n = 50;
    spec.f = 8;
    spec.missingness = 0.0;
    auto c = generate_synthetic_cohort(spec, 3);
    for (auto m : c.mask) CHECK(m == 1);
}

TEST_CASE("generated cohorts are finite after imputation, even when sparse") {
    GeneratorSpec spec;
    spec.n = 60;
    spec.f = 6;
    spec.t = 12;
    spec.missingness = 0.6;
    auto c = generate_synthetic_cohort(spec, 11);
    for (double v : c.x) CHECK(std::isfinite(v));
    bool any_missing = false;
    for (auto m : c.mask) any_missing = any_missing || m == 0;
    CHECK(any_missing);
}

TEST_CASE("identical spec and seed give bit-identical cohorts") {
    GeneratorSpec spec;
    spec.n = 80;
    spec.f = 10;
    spec.missingness = 0.2;
    spec.label_noise = 0.1;
    auto a = generate_synthetic_cohort(spec, 99);
    auto b = generate_synthetic_cohort(spec, 99);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.mask == b.mask);
    CHECK(a.oracle_logit == b.oracle_logit);
    CHECK(a.ground_truth_informative == b.ground_truth_informative);
    for (std::size_t i = 0; i < a.n; ++i) {
        CHECK(a.statics[i].stay_id == b.statics[i].stay_id);
        CHECK(a.statics[i].treatments.size() == b.statics[i].treatments.size());
    }
    auto c = generate_synthetic_cohort(spec, 100);
    CHECK(a.x != c.x);
}

TEST_CASE("group mortality shift moves the empirical rate by its size") {
    GeneratorSpec spec;
    spec.n = 10000;
    spec.t = 8;
    spec.f = 10;
    spec.informative = 5;
    spec.informative_coeff = 0.2;
    spec.missingness = 0.0;
    spec.group_bias.push_back({"gender", "FEMALE", 0.3, 0.0});
    auto c = generate_synthetic_cohort(spec, 21);
    const double gap = group_rate(c, "gender", "FEMALE") - group_rate(c, "gender", "MALE");
    CHECK(gap > 0.25);
    CHECK(gap < 0.35);
}

TEST_CASE("raising an informative coefficient raises the label correlation") {
    GeneratorSpec lo, hi;
    lo.n = hi.n = 10000;
    lo.t = hi.t = 6;
    lo.f = hi.f = 10;
    lo.informative = hi.informative = 3;
    lo.missingness = hi.missingness = 0.0;
    lo.informative_coeff = 0.3;
    hi.informative_coeff = 1.5;
    auto a = generate_synthetic_cohort(lo, 42);
    auto b = generate_synthetic_cohort(hi, 42);
    REQUIRE(a.ground_truth_informative == b.ground_truth_informative);
    const std::size_t top = a.ground_truth_informative.back();
    const double corr_lo = label_feature_corr(a, top);
    const double corr_hi = label_feature_corr(b, top);
    CHECK(corr_lo > 0.05);
    CHECK(corr_hi > corr_lo + 0.05);

    std::set<std::size_t> informative(a.ground_truth_informative.begin(),
                                      a.ground_truth_informative.end());
    for (std::size_t j = 0; j < a.temporal_features; ++j) {
        if (!informative.count(j)) {
            CHECK(std::abs(label_feature_corr(a, j)) < 0.05);
            break;
        }
    }
}

TEST_CASE("cohort filter keeps adults with 12h-10d first stays") {
    CHECK_FALSE(keep_stay(14.9, 48.0, true));
    CHECK_FALSE(keep_stay(20.0, 11.9, true));
    CHECK(keep_stay(20.0, 12.0, true));
    CHECK(keep_stay(15.0, 240.0, true));
    CHECK_FALSE(keep_stay(20.0, 240.1, true));
    CHECK_FALSE(keep_stay(20.0, 48.0, false));
}

TEST_CASE("hourly aggregation averages bins and drops out-of-window events") {
    std::map<std::string, std::size_t> dict{{"hr", 0}};
    std::vector<EventRecord> events = {
        {"a", 3.2, "hr", 2.0}, {"a", 3.9, "hr", 4.0}, {"a", 0.0, "hr", 5.0},
        {"a", 25.5, "hr", 99.0},
    };
    std::vector<double> grid(24);
    std::vector<std::uint8_t> mask(24);
    truncate_and_aggregate(events, 24, dict, grid.data(), mask.data());
    CHECK(grid[3] == 3.0);
    CHECK(grid[0] == 5.0);
    CHECK(mask[3] == 1);
    CHECK(mask[25 % 24] == mask[1]);
    for (std::size_t h = 0; h < 24; ++h) {
        if (h != 0 && h != 3) CHECK(mask[h] == 0);
    }
}

TEST_CASE("aggregation is exactly permutation invariant") {
    SeededRng rng(17);
    std::map<std::string, std::size_t> dict{{"a", 0}, {"b", 1}, {"c", 2}};
    std::vector<EventRecord> events;
    for (int i = 0; i < 200; ++i) {
        const char* names[3] = {"a", "b", "c"};
        events.push_back({"s", rng.uniform(0.0, 12.0), names[rng.uniform_index(3)],
                          rng.normal(0.0, 10.0)});
    }
    std::vector<double> grid1(12 * 3), grid2(12 * 3);
    std::vector<std::uint8_t> mask1(12 * 3), mask2(12 * 3);
    truncate_and_aggregate(events, 12, dict, grid1.data(), mask1.data());
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(std::span(events));
        truncate_and_aggregate(events, 12, dict, grid2.data(), mask2.data());
        CHECK(grid1 == grid2);
        CHECK(mask1 == mask2);
    }
}

TEST_CASE("aggregation rejects non-finite values") {
    std::map<std::string, std::size_t> dict{{"a", 0}};
    std::vector<EventRecord> events = {{"s", 1.0, "a", std::nan("")}};
    std::vector<double> grid(4);
    std::vector<std::uint8_t> mask(4);
    CHECK_THROWS_AS(truncate_and_aggregate(events, 4, dict, grid.data(), mask.data()),
                    ConfigError);
}

TEST_CASE("imputation forward-fills, backfills the head, and falls back to the mean") {
    {
        double x[4] = {0, 3, 0, 5};
        std::uint8_t m[4] = {0, 1, 0, 1};
        impute_series(x, m, 4, 1, 99.0);
        CHECK(x[0] == 3.0);
        CHECK(x[1] == 3.0);
        CHECK(x[2] == 3.0);
        CHECK(x[3] == 5.0);
    }
    {
        double x[4] = {0, 0, 0, 0};
        std::uint8_t m[4] = {0, 0, 0, 0};
        impute_series(x, m, 4, 1, 2.5);
        for (double v : x) CHECK(v == 2.5);
    }
    {
        double x[3] = {1.5, -2.0, 7.0};
        std::uint8_t m[3] = {1, 1, 1};
        impute_series(x, m, 3, 1, 99.0);
        CHECK(x[0] == 1.5);
        CHECK(x[1] == -2.0);
        CHECK(x[2] == 7.0);
    }
}

TEST_CASE("tabular summary emits min/max/mean per temporal feature plus statics") {
    GeneratorSpec spec;
    spec.n = 40;
    spec.t = 24;
    spec.f = 50;
    auto c = generate_synthetic_cohort(spec, 5);
    auto s = summarize_tabular(c);
    CHECK(s.f == 155);
    CHECK(s.column_names.size() == 155);
    CHECK(s.provenance.size() == 155);
    CHECK(s.column_names[0] == "f00:min");
    CHECK(s.column_names[2] == "f00:mean");
    CHECK(s.column_names[150] == "age");
    CHECK(s.provenance[150].statistic == "static");
    for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = 0; j < 50; ++j) {
            const double mn = s.xs[i * s.f + 3 * j];
            const double mx = s.xs[i * s.f + 3 * j + 1];
            const double mean = s.xs[i * s.f + 3 * j + 2];
            CHECK(mn <= mean);
            CHECK(mean <= mx);
        }
    }
}

TEST_CASE("summary of hand-built series is exact") {
    Cohort c;
    c.n = 1;
    c.t = 3;
    c.f = 2;
    c.temporal_features = 1;
    c.x = {1.0, 0.5, 2.0, 0.5, 3.0, 0.5};
    c.mask.assign(6, 1);
    c.y = {0};
    c.feature_names = {"v", "age"};
    c.statics.resize(1);
    auto s = summarize_tabular(c);
    CHECK(s.f == 4);
    CHECK(s.xs[0] == 1.0);
    CHECK(s.xs[1] == 3.0);
    CHECK(s.xs[2] == 2.0);
    CHECK(s.xs[3] == 0.5);
}

TEST_CASE("split is a deterministic 60/20/20 partition") {
    auto s = split(10, 4);
    CHECK(s.train.size() == 6);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);
    auto s2 = split(10, 4);
    CHECK(s.train == s2.train);
    CHECK(s.val == s2.val);
    CHECK(s.test == s2.test);

    auto big = split(43005, 1);
    CHECK(big.train.size() == 25803);
    CHECK(big.val.size() == 8601);
    CHECK(big.test.size() == 8601);

    for (std::size_t n : {10u, 11u, 99u, 1000u}) {
        for (std::uint64_t seed : {1ull, 2ull, 77ull}) {
            auto sp = split(n, seed);
            std::set<std::size_t> all;
            for (auto i : sp.train) all.insert(i);
            for (auto i : sp.val) all.insert(i);
            for (auto i : sp.test) all.insert(i);
            CHECK(all.size() == n);
            CHECK(sp.train.size() + sp.val.size() + sp.test.size() == n);
            CHECK(*all.rbegin() == n - 1);
        }
    }
    CHECK_THROWS_AS(split(9, 1), ConfigError);
}

namespace {

void write_loader_fixture(const TempDir& tmp) {
    io::write_file_atomic(tmp.file("events.csv"),
                          "stay_id,hour,feature,value\n"
                          "a,100,hr,80\n"
                          "a,103.2,hr,2\n"
                          "a,103.9,hr,4\n"
                          "a,113,bp,120\n"
                          "b,0,hr,70\n"
                          "b,5,hr,75\n"
                          "kid,0,hr,100\n"
                          "kid,20,hr,100\n");
    io::write_file_atomic(
        tmp.file("static.csv"),
        "stay_id,age,gender,ethnicity,marital_status,insurance,label,treatment_type,treatment_spans\n"
        "a,65,FEMALE,WHITE,MARRIED,PRIVATE,1,InvasiveVent,10;5\n"
        "a,65,FEMALE,WHITE,MARRIED,PRIVATE,1,Oxygen,3\n"
        "b,40,MALE,ASIAN,SINGLE,MEDICAID/MEDICARE,0,,\n"
        "kid,14,MALE,OTHER,SINGLE,PRIVATE,0,,\n"
        "ghost,50,FEMALE,HISPANIC/LATINO,DIVORCED/WIDOWED,PRIVATE,1,,\n");
}

}  // namespace

TEST_CASE("load_cohort anchors, filters, aggregates, and merges treatments") {
    TempDir tmp;
    write_loader_fixture(tmp);
    auto c = load_cohort(tmp.file("events.csv"), tmp.file("static.csv"));
    // a: 13h span kept; b: 5h too short; kid: under 15; ghost: no events.
    REQUIRE(c.n == 1);
    CHECK(c.statics[0].stay_id == "a");
    CHECK(c.temporal_features == 2);
    CHECK(c.f == 7);
    const std::size_t hr = 0;
    CHECK(c.feature_names[hr] == "hr");
    CHECK(c.at(0, 0, hr) == 80.0);
    CHECK(c.at(0, 3, hr) == 3.0);
    CHECK(c.mask[c.cell(0, 3, hr)] == 1);
    CHECK(c.mask[c.cell(0, 4, hr)] == 0);
    CHECK(c.at(0, 4, hr) == 3.0);  // forward fill
    REQUIRE(c.statics[0].treatments.size() == 2);
    CHECK(c.statics[0].treatments[0].total_hours() == 15.0);
    CHECK(c.y[0] == 1);
    for (double v : c.x) CHECK(std::isfinite(v));
}

TEST_CASE("load_cohort rejects schema violations with context") {
    TempDir tmp;
    io::write_file_atomic(tmp.file("e.csv"), "stay_id,hour,feature,value\nzz,0,hr,1\n");
    io::write_file_atomic(
        tmp.file("s.csv"),
        "stay_id,age,gender,ethnicity,marital_status,insurance,label,treatment_type,treatment_spans\n"
        "a,65,FEMALE,WHITE,MARRIED,PRIVATE,1,,\n");
    try {
        load_cohort(tmp.file("e.csv"), tmp.file("s.csv"));
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }

    io::write_file_atomic(
        tmp.file("nolabel.csv"),
        "stay_id,age,gender,ethnicity,marital_status,insurance,treatment_type,treatment_spans\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("nolabel.csv")), SchemaError);

    io::write_file_atomic(
        tmp.file("badcat.csv"),
        "stay_id,age,gender,ethnicity,marital_status,insurance,label,treatment_type,treatment_spans\n"
        "a,65,ROBOT,WHITE,MARRIED,PRIVATE,1,,\n");
    try {
        load_cohort(tmp.file("e.csv"), tmp.file("badcat.csv"));
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gender") != std::string::npos);
        CHECK(msg.find("ROBOT") != std::string::npos);
    }

    io::write_file_atomic(
        tmp.file("badspan.csv"),
        "stay_id,age,gender,ethnicity,marital_status,insurance,label,treatment_type,treatment_spans\n"
        "a,65,FEMALE,WHITE,MARRIED,PRIVATE,1,Oxygen,5;-2\n");
    CHECK_THROWS_AS(load_cohort(tmp.file("e.csv"), tmp.file("badspan.csv")), SchemaError);
}

TEST_CASE("binary cohort cache round-trips exactly") {
    TempDir tmp;
    GeneratorSpec spec;
    spec.n = 30;
    spec.f = 6;
    spec.t = 5;
    spec.missingness = 0.3;
    auto a = generate_synthetic_cohort(spec, 8);
    const std::string p = tmp.file("cohort.bin");
    save_cohort(a, p);
    auto b = load_cohort_binary(p);
    CHECK(a.x == b.x);
    CHECK(a.mask == b.mask);
    CHECK(a.y == b.y);
    CHECK(a.feature_names == b.feature_names);
    CHECK(a.ground_truth_informative == b.ground_truth_informative);
    CHECK(a.informative_coeffs == b.informative_coeffs);
    CHECK(a.oracle_logit == b.oracle_logit);
    CHECK(a.severe_comorbidity == b.severe_comorbidity);
    REQUIRE(a.statics.size() == b.statics.size());
    for (std::size_t i = 0; i < a.n; ++i) {
        CHECK(a.statics[i].stay_id == b.statics[i].stay_id);
        CHECK(a.statics[i].age == b.statics[i].age);
        CHECK(a.statics[i].treatments.size() == b.statics[i].treatments.size());
    }

    save_cohort(a, tmp.file("again.bin"));
    CHECK(io::read_file(p) == io::read_file(tmp.file("again.bin")));
}

TEST_CASE("csv export is loadable and preserves observed values") {
    TempDir tmp;
    GeneratorSpec spec;
    spec.n = 25;
    spec.f = 4;
    spec.informative = 2;
    spec.t = 24;
    spec.missingness = 0.05;
    spec.treatment_rate = 0.5;
    auto a = generate_synthetic_cohort(spec, 13);
    export_cohort_csv(a, tmp.file("ev.csv"), tmp.file("st.csv"));
    auto b = load_cohort(tmp.file("ev.csv"), tmp.file("st.csv"));
    CHECK(b.n > 0);
    CHECK(b.temporal_features <= a.temporal_features);
    std::map<std::string, std::size_t> a_by_id, b_feat;
    for (std::size_t i = 0; i < a.n; ++i) a_by_id[a.statics[i].stay_id] = i;
    for (std::size_t j = 0; j < b.temporal_features; ++j) b_feat[b.feature_names[j]] = j;
    for (std::size_t bi = 0; bi < b.n; ++bi) {
        const std::size_t ai = a_by_id.at(b.statics[bi].stay_id);
        CHECK(a.y[ai] == b.y[bi]);
        for (std::size_t ti = 0; ti < b.t; ++ti) {
            for (auto& [name, bj] : b_feat) {
                std::size_t aj = 0;
                while (a.feature_names[aj] != name) ++aj;
                if (a.mask[a.cell(ai, ti, aj)]) {
                    CHECK(b.at(bi, ti, bj) == a.at(ai, ti, aj));
                }
            }
        }
    }
}

TEST_CASE("age bins follow the published boundaries") {
    CHECK(age_bin(54.9) == 0);
    CHECK(age_bin(55.0) == 1);
    CHECK(age_bin(66.9) == 1);
    CHECK(age_bin(67.0) == 2);
    CHECK(age_bin(77.9) == 2);
    CHECK(age_bin(78.0) == 3);
    CHECK(age_bin_label(0) == "<55 YRS");
    CHECK(age_bin_label(3) == ">=78 YRS");
}

TEST_CASE("generator spec validation rejects bad parameters") {
    GeneratorSpec s;
    s.n = 5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.n = 100;
    s.informative = 200;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.informative = 5;
    s.missingness = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.missingness = 0.1;
    s.group_bias.push_back({"gender", "NOPE", 0.1, 0.0});
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.group_bias.clear();
    s.validate();
}

TEST_CASE("generator spec parses from config sections") {
    auto cfg = io::Config::parse_string(
        "[generator]\n"
        "samples = 120\n"
        "features = 9\n"
        "informative = 2\n"
        "missingness = 0.05\n"
        "group_bias = gender:FEMALE:0.2:0.1 ; ethnicity:ASIAN:-0.05:0\n"
        "group_feature_effects = gender:MALE:3:0.7\n"
        "treatment_bias = insurance:PRIVATE:Oxygen:0.2:1.5\n",
        "t.cfg");
    auto s = GeneratorSpec::from_config(cfg);
    CHECK(s.n == 120);
    CHECK(s.f == 9);
    REQUIRE(s.group_bias.size() == 2);
    CHECK(s.group_bias[0].group == "FEMALE");
    CHECK(s.group_bias[0].mortality_shift == 0.2);
    CHECK(s.group_bias[1].mortality_shift == -0.05);
    REQUIRE(s.group_feature_effects.size() == 1);
    CHECK(s.group_feature_effects[0].feature == 3);
    REQUIRE(s.treatment_bias.size() == 1);
    CHECK(s.treatment_bias[0].duration_scale == 1.5);
}
