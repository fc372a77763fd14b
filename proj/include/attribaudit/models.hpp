#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attribaudit/io.hpp"

// Small binary classifiers with hand-written exact gradients. The attribution
// target everywhere is the pre-sigmoid logit; reports echo that choice.

namespace attribaudit::models {

enum class ModelKind { linear, feedforward, recurrent };

ModelKind parse_model_kind(const std::string& name);  // throws ConfigError
const char* model_kind_name(ModelKind kind);

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::size_t hidden = 16;
    double l2 = 0.0;
    double momentum = 0.0;
    std::uint64_t seed = 1;

    void validate() const;
    static TrainConfig from_config(const io::Config& cfg, const std::string& section);
};

struct PredictiveModel {
    ModelKind kind = ModelKind::linear;
    bool sequential = false;  // true: input is t x f; false: flat f with t == 1
    std::size_t t = 1;
    std::size_t f = 0;
    std::size_t hidden = 0;
    bool gradient_capable = true;
    bool glassbox = false;

    // linear: w1 = weights (flat), b2 = bias.
    // feedforward: w1 = W1 (hidden x flat), b1, w2, b2.
    // recurrent: w1 = Wx (hidden x f), wh = Wh (hidden x hidden), b1, w2, b2.
    std::vector<double> w1;
    std::vector<double> wh;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    std::vector<double> train_mean;      // per input cell, from the training split
    std::vector<double> train_loss_log;  // per-epoch mean logistic loss (not serialized)
    TrainConfig config;                  // echoed into checkpoints

    std::size_t flat() const { return t * f; }

    double logit(const double* x) const;
    std::vector<double> logits(const double* xs, std::size_t n) const;
    std::vector<double> predict_proba(const double* xs, std::size_t n) const;

    // d logit / d input, exact reverse mode. CapabilityError when not
    // gradient_capable.
    std::vector<double> input_gradient(const double* x) const;

    // |w_i * (x_i - train_mean_i)|; linear models only. CapabilityError otherwise.
    std::vector<double> glassbox_importance(const double* x) const;
};

// Deterministic in cfg.seed. Picks the epoch with the best validation AUROC
// when a usable validation set is given, the final epoch otherwise.
// Throws TrainingError when the loss goes non-finite.
PredictiveModel train(ModelKind kind, bool sequential, std::size_t t, std::size_t f,
                      std::span<const double> x_train, std::span<const int> y_train,
                      std::span<const double> x_val, std::span<const int> y_val,
                      const TrainConfig& cfg);

struct EvalMetrics {
    double auroc = 0.0;
    double auprc = 0.0;
};

// Mann-Whitney statistic; tied score pairs count 1/2. MetricError unless both
// classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision with each tied-score block treated as one threshold.
// MetricError without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

EvalMetrics evaluate(std::span<const double> scores, std::span<const int> labels);

// Checkpoint JSON: version, kind, shapes, parameters, capabilities, train-mean
// vector, config echo.
void save_model(const PredictiveModel& model, const std::string& path);
PredictiveModel load_model(const std::string& path);

}  // namespace attribaudit::models
