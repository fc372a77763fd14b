#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "attribaudit/data.hpp"
#include "attribaudit/errors.hpp"
#include "attribaudit/models.hpp"
#include "attribaudit/rng.hpp"

using namespace attribaudit;
using namespace attribaudit::models;
namespace fs = std::filesystem;

namespace {

// Oracle: every positive-negative pair, ties worth 1/2.
double auroc_pairwise(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

// Oracle: precision/recall at every distinct threshold, summed over recall
// increments.
double ap_threshold_sweep(const std::vector<double>& s, const std::vector<int>& y) {
    std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
    std::size_t n_pos = 0;
    for (int v : y) n_pos += std::size_t(v);
    double ap = 0.0, prev_recall = 0.0;
    for (double th : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= th) (y[i] == 1 ? tp : fp) += 1;
        }
        const double recall = double(tp) / double(n_pos);
        const double precision = double(tp) / double(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Oracle: central finite differences on the logit.
std::vector<double> fd_gradient(const PredictiveModel& m, std::vector<double> x,
                                double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = m.logit(x.data());
        x[i] = keep - h;
        const double down = m.logit(x.data());
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

void check_gradient_matches_fd(const PredictiveModel& m, SeededRng& rng, int points,
                               double tol = 1e-4) {
    const std::size_t d = m.flat();
    for (int p = 0; p < points; ++p) {
        std::vector<double> x(d);
        for (double& v : x) v = rng.normal();
        const auto g = m.input_gradient(x.data());
        const auto fd = fd_gradient(m, x);
        for (std::size_t i = 0; i < d; ++i) {
            const double scale = std::max({std::abs(g[i]), std::abs(fd[i]), 1e-8});
            CHECK(std::abs(g[i] - fd[i]) / scale <= tol);
        }
    }
}

PredictiveModel toy_model(ModelKind kind, std::size_t t, std::size_t f,
                          std::uint64_t seed) {
    SeededRng rng(seed);
    const std::size_t n = 40, d = t * f;
    std::vector<double> x(n * d);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = rng.normal();
        y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.hidden = 5;
    cfg.seed = seed;
    return train(kind, kind == ModelKind::recurrent, t, f, x, y, {}, {}, cfg);
}

}  // namespace

TEST_CASE("input gradients match central finite differences for every model") {
    SeededRng rng(1001);
    check_gradient_matches_fd(toy_model(ModelKind::linear, 1, 12, 5), rng, 5);
    check_gradient_matches_fd(toy_model(ModelKind::feedforward, 1, 12, 6), rng, 20);
    check_gradient_matches_fd(toy_model(ModelKind::recurrent, 6, 4, 7), rng, 20);
}

TEST_CASE("linear gradient is the weight vector everywhere") {
    auto m = toy_model(ModelKind::linear, 1, 8, 3);
    SeededRng rng(4);
    std::vector<double> x(8);
    for (double& v : x) v = rng.normal();
    CHECK(m.input_gradient(x.data()) == m.w1);
    for (double& v : x) v = rng.normal(5.0, 10.0);
    CHECK(m.input_gradient(x.data()) == m.w1);
}

TEST_CASE("single relu unit follows the chain rule in its active region") {
    PredictiveModel m;
    m.kind = ModelKind::feedforward;
    m.t = 1;
    m.f = 3;
    m.hidden = 1;
    m.w1 = {0.5, -1.0, 2.0};
    m.b1 = {0.1};
    m.w2 = {3.0};
    m.b2 = 0.0;
    std::vector<double> x = {1.0, 0.2, 0.5};  // z1 = 1.4 > 0
    auto g = m.input_gradient(x.data());
    CHECK(g[0] == doctest::Approx(3.0 * 0.5).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(3.0 * -1.0).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(3.0 * 2.0).epsilon(1e-12));
    auto fd = fd_gradient(m, x);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(fd[i]).epsilon(1e-4));

    std::vector<double> dead = {-10.0, 0.0, 0.0};  // z1 < 0
    for (double v : m.input_gradient(dead.data())) CHECK(v == 0.0);
}

TEST_CASE("gradient-incapable models refuse input_gradient") {
    auto m = toy_model(ModelKind::feedforward, 1, 4, 9);
    m.gradient_capable = false;
    std::vector<double> x(4, 0.0);
    CHECK_THROWS_AS(m.input_gradient(x.data()), CapabilityError);
}

TEST_CASE("predict_proba is sigmoid of the logit, strictly inside (0,1)") {
    PredictiveModel m;
    m.kind = ModelKind::linear;
    m.t = 1;
    m.f = 2;
    m.w1 = {0.0, 0.0};
    m.b2 = 0.0;
    m.train_mean = {0.0, 0.0};
    std::vector<double> x = {123.0, -9.0};
    CHECK(m.predict_proba(x.data(), 1)[0] == 0.5);

    m.w1 = {2.0, 0.0};
    std::vector<double> lo = {1.0, 0.0}, hi = {2.0, 0.0};
    CHECK(m.predict_proba(hi.data(), 1)[0] > m.predict_proba(lo.data(), 1)[0]);

    std::vector<double> extreme = {1e9, 0.0};
    const double p = m.predict_proba(extreme.data(), 1)[0];
    CHECK(p > 0.0);
    CHECK(p < 1.0);

    std::vector<double> batch = {1.0, 0.0, 2.0, 0.0};
    auto probs = m.predict_proba(batch.data(), 2);
    REQUIRE(probs.size() == 2);
    CHECK(probs[0] < probs[1]);
}

TEST_CASE("auroc matches the worked 4-sample example and its oracle") {
    std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    std::vector<int> y = {0, 0, 1, 1};
    CHECK(auroc(s, y) == 0.75);
    CHECK(auroc_pairwise(s, y) == 0.75);
}

TEST_CASE("auroc handles separation, ties, and tied-score vectors exactly") {
    std::vector<double> sep = {0.1, 0.2, 0.8, 0.9};
    std::vector<int> y = {0, 0, 1, 1};
    CHECK(auroc(sep, y) == 1.0);
    std::vector<double> equal = {0.4, 0.4, 0.4, 0.4};
    CHECK(auroc(equal, y) == 0.5);

    SeededRng rng(2020);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng.uniform_index(40);
        std::vector<double> s(n);
        std::vector<int> lab(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = double(rng.uniform_index(6));  // heavy ties
            lab[i] = rng.bernoulli(0.4) ? 1 : 0;
            (lab[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        CHECK(auroc(s, lab) == auroc_pairwise(s, lab));
    }
}

TEST_CASE("auroc is invariant under strictly monotone transforms") {
    SeededRng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 10 + rng.uniform_index(30);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.normal();
            y[i] = rng.bernoulli(0.5) ? 1 : 0;
            (y[i] ? pos : neg) = true;
        }
        if (!pos || !neg) continue;
        const double base = auroc(s, y);
        std::vector<double> t1(n), t2(n), t3(n);
        for (std::size_t i = 0; i < n; ++i) {
            t1[i] = 3.0 * s[i] + 11.0;
            t2[i] = std::exp(s[i]);
            t3[i] = std::atan(s[i]);
        }
        CHECK(auroc(t1, y) == base);
        CHECK(auroc(t2, y) == base);
        CHECK(auroc(t3, y) == base);
        std::vector<double> neg_s(n);
        for (std::size_t i = 0; i < n; ++i) neg_s[i] = 1.0 - s[i];
        CHECK(auroc(neg_s, y) == doctest::Approx(1.0 - base).epsilon(1e-12));
    }
}

TEST_CASE("auroc and auprc reject degenerate inputs") {
    std::vector<double> s = {0.1, 0.2};
    std::vector<int> ones = {1, 1}, zeros = {0, 0};
    CHECK_THROWS_AS(auroc(s, ones), MetricError);
    CHECK_THROWS_AS(auroc(s, zeros), MetricError);
    CHECK_THROWS_AS(auprc(s, zeros), MetricError);
    std::vector<double> bad = {0.1, std::nan("")};
    std::vector<int> y = {0, 1};
    CHECK_THROWS_AS(auroc(bad, y), MetricError);
}

TEST_CASE("auprc matches hand enumeration and the threshold-sweep oracle") {
    {
        std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
        std::vector<int> y = {1, 1, 0, 0};
        CHECK(auprc(s, y) == 1.0);
    }
    {
        std::vector<double> s = {0.9, 0.5, 0.1};
        std::vector<int> y = {0, 1, 0};
        CHECK(auprc(s, y) == 0.5);
    }
    {
        // Positives ranked last: AP = (1/3)(1/2) + (2/4)(1/2) = 5/12.
        std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
        std::vector<int> y = {0, 0, 1, 1};
        CHECK(auprc(s, y) == doctest::Approx(5.0 / 12.0).epsilon(1e-12));
        CHECK(auprc(s, y) == doctest::Approx(ap_threshold_sweep(s, y)).epsilon(1e-12));
    }
    SeededRng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 4 + rng.uniform_index(30);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool pos = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = double(rng.uniform_index(5));
            y[i] = rng.bernoulli(0.3) ? 1 : 0;
            pos = pos || y[i] == 1;
        }
        if (!pos) continue;
        CHECK(auprc(s, y) == doctest::Approx(ap_threshold_sweep(s, y)).epsilon(1e-10));
    }
}

TEST_CASE("training solves a separable toy problem") {
    SeededRng rng(55);
    const std::size_t n = 60;
    std::vector<double> x(n * 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i % 2 == 0 ? 1 : 0;
        x[i * 2] = (y[i] == 1 ? 2.0 : -2.0) + 0.1 * rng.normal();
        x[i * 2 + 1] = rng.normal();
    }
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.5;
    cfg.batch_size = 16;
    cfg.seed = 9;
    auto m = train(ModelKind::linear, false, 1, 2, x, y, {}, {}, cfg);
    auto probs = m.predict_proba(x.data(), n);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += std::size_t((probs[i] > 0.5) == (y[i] == 1));
    }
    CHECK(correct == n);
    REQUIRE(m.train_loss_log.size() == 200);
    CHECK(m.train_loss_log.back() < m.train_loss_log.front());
}

TEST_CASE("training is bit-deterministic in the seed") {
    for (ModelKind kind :
         {ModelKind::linear, ModelKind::feedforward, ModelKind::recurrent}) {
        auto a = toy_model(kind, kind == ModelKind::recurrent ? 4 : 1, 6, 77);
        auto b = toy_model(kind, kind == ModelKind::recurrent ? 4 : 1, 6, 77);
        CHECK(a.w1 == b.w1);
        CHECK(a.wh == b.wh);
        CHECK(a.b1 == b.b1);
        CHECK(a.w2 == b.w2);
        CHECK(a.b2 == b.b2);
        auto c = toy_model(kind, kind == ModelKind::recurrent ? 4 : 1, 6, 78);
        CHECK(a.w1 != c.w1);
    }
}

TEST_CASE("diverging training reports a learning-rate diagnostic") {
    std::vector<double> x = {100.0, -100.0, 80.0, -90.0};
    std::vector<int> y = {1, 0, 1, 0};
    TrainConfig cfg;
    cfg.learning_rate = 1e308;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    try {
        train(ModelKind::linear, false, 1, 1, x, y, {}, {}, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("learning rate") != std::string::npos);
    }
}

TEST_CASE("recurrent model approaches the generator's oracle on a planted cohort") {
    data::GeneratorSpec spec;
    spec.n = 2000;
    spec.t = 12;
    spec.f = 20;
    spec.informative = 5;
    spec.informative_coeff = 0.8;
    spec.missingness = 0.0;
    auto cohort = data::generate_synthetic_cohort(spec, 31);
    auto idx = data::split(cohort.n, 17);

    const std::size_t d = cohort.t * cohort.f;
    auto gather = [&](const std::vector<std::size_t>& ids, std::vector<double>& x,
                      std::vector<int>& y) {
        x.resize(ids.size() * d);
        y.resize(ids.size());
        for (std::size_t r = 0; r < ids.size(); ++r) {
            std::copy_n(cohort.x.begin() + long(ids[r] * d), d, x.begin() + long(r * d));
            y[r] = cohort.y[ids[r]];
        }
    };
    std::vector<double> xtr, xva, xte;
    std::vector<int> ytr, yva, yte;
    gather(idx.train, xtr, ytr);
    gather(idx.val, xva, yva);
    gather(idx.test, xte, yte);

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.learning_rate = 0.08;
    cfg.momentum = 0.9;
    cfg.hidden = 12;
    cfg.batch_size = 32;
    cfg.seed = 3;
    auto m = train(ModelKind::recurrent, true, cohort.t, cohort.f, xtr, ytr, xva, yva, cfg);

    const auto scores = m.logits(xte.data(), yte.size());
    const double model_auc = auroc(scores, yte);
    std::vector<double> oracle(idx.test.size());
    for (std::size_t r = 0; r < idx.test.size(); ++r) {
        oracle[r] = cohort.oracle_logit[idx.test[r]];
    }
    const double oracle_auc = auroc(oracle, yte);
    CHECK(model_auc >= 0.85);
    CHECK(model_auc >= 0.9 * oracle_auc);
}

TEST_CASE("glassbox importance is |w * (x - train_mean)| for linear models") {
    PredictiveModel m;
    m.kind = ModelKind::linear;
    m.glassbox = true;
    m.t = 1;
    m.f = 2;
    m.w1 = {2.0, -1.0};
    m.train_mean = {0.5, -0.25};
    std::vector<double> at_mean = {0.5, -0.25};
    for (double v : m.glassbox_importance(at_mean.data())) CHECK(v == 0.0);
    std::vector<double> shifted = {1.5, 0.75};
    auto s = m.glassbox_importance(shifted.data());
    CHECK(s[0] == 2.0);
    CHECK(s[1] == 1.0);

    auto rec = toy_model(ModelKind::recurrent, 4, 3, 21);
    std::vector<double> x(12, 0.0);
    CHECK_THROWS_AS(rec.glassbox_importance(x.data()), CapabilityError);
}

TEST_CASE("model checkpoints round-trip exactly") {
    auto tmp = fs::temp_directory_path() /
               ("attribaudit_model_" + std::to_string(::getpid()) + ".json");
    for (ModelKind kind :
         {ModelKind::linear, ModelKind::feedforward, ModelKind::recurrent}) {
        auto m = toy_model(kind, kind == ModelKind::recurrent ? 3 : 1, 5, 42);
        save_model(m, tmp.string());
        auto r = load_model(tmp.string());
        CHECK(r.kind == m.kind);
        CHECK(r.t == m.t);
        CHECK(r.f == m.f);
        CHECK(r.w1 == m.w1);
        CHECK(r.wh == m.wh);
        CHECK(r.b1 == m.b1);
        CHECK(r.w2 == m.w2);
        CHECK(r.b2 == m.b2);
        CHECK(r.train_mean == m.train_mean);
        CHECK(r.glassbox == m.glassbox);
        CHECK(r.config.learning_rate == m.config.learning_rate);
        SeededRng rng(1);
        std::vector<double> x(m.flat());
        for (double& v : x) v = rng.normal();
        CHECK(r.logit(x.data()) == m.logit(x.data()));
    }
    fs::remove(tmp);
}

TEST_CASE("checkpoint loader rejects junk") {
    auto tmp = fs::temp_directory_path() /
               ("attribaudit_badmodel_" + std::to_string(::getpid()) + ".json");
    io::write_file_atomic(tmp.string(), "not json");
    CHECK_THROWS_AS(load_model(tmp.string()), ConfigError);
    io::write_file_atomic(tmp.string(), "{\"version\": 9}");
    CHECK_THROWS_AS(load_model(tmp.string()), ConfigError);
    fs::remove(tmp);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.learning_rate = 0.1;
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.momentum = 0.9;
    c.validate();

    auto cfg = io::Config::parse_string(
        "[train]\nlearning_rate = 0.2\nepochs = 9\nhidden = 7\nmomentum = 0.5\n", "t");
    auto tc = TrainConfig::from_config(cfg, "train");
    CHECK(tc.learning_rate == 0.2);
    CHECK(tc.epochs == 9);
    CHECK(tc.hidden == 7);
    CHECK(tc.momentum == 0.5);
}

TEST_CASE("shape mismatches are rejected") {
    std::vector<double> x(10, 0.0);
    std::vector<int> y = {0, 1};
    TrainConfig cfg;
    CHECK_THROWS_AS(train(ModelKind::linear, false, 1, 4, x, y, {}, {}, cfg), ConfigError);
    CHECK_THROWS_AS(train(ModelKind::recurrent, false, 1, 5, x, y, {}, {}, cfg),
                    ConfigError);
    CHECK_THROWS_AS(train(ModelKind::linear, true, 2, 5, x, y, {}, {}, cfg), ConfigError);
    std::vector<int> bad = {0, 2};
    CHECK_THROWS_AS(train(ModelKind::linear, false, 1, 5, x, bad, {}, {}, cfg),
                    ConfigError);
}
