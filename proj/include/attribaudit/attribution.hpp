#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "attribaudit/io.hpp"
#include "attribaudit/models.hpp"

// Feature-importance methods under one contract: per-cell signed scores plus
// the nonnegative scores used for ranking. The attribution target is always
// the pre-sigmoid logit.

namespace attribaudit::attribution {

struct BaselineSpec {
    enum class Mode { zeros, uniform_random, fixed_vector, distribution_sample };
    Mode mode = Mode::zeros;
    std::vector<double> fixed;  // fixed_vector only
    std::size_t count = 8;      // distribution_sample only

    static BaselineSpec zeros();
    static BaselineSpec uniform_random();
    static BaselineSpec fixed_vector(std::vector<double> v);
    static BaselineSpec distribution(std::size_t count);
    static BaselineSpec parse(const std::string& text);  // config syntax

    // Concrete baseline vectors; random modes draw from the given seed.
    std::vector<std::vector<double>> materialize(std::size_t d, std::uint64_t seed) const;
    std::string describe() const;
};

struct AttributionResult {
    std::string method;
    std::string sample_id;
    std::string baseline_echo;
    std::uint64_t seed = 0;
    std::size_t t = 1, f = 0;            // reporting shape; scores are flat t*f
    std::vector<double> signed_scores;
    std::vector<double> abs_scores;      // ranking scores, finite and >= 0
    double completeness_residual = std::numeric_limits<double>::quiet_NaN();
};

// The eleven methods. `x` is one flat sample of model.flat() values; batch
// methods take row-major xs. Gradient methods throw CapabilityError on
// gradient-incapable models.

std::vector<double> saliency(const models::PredictiveModel& m, const double* x);

// Riemann midpoint approximation; signed scores; optional residual out.
std::vector<double> integrated_gradients(const models::PredictiveModel& m,
                                         const double* x, const double* baseline,
                                         std::size_t steps,
                                         double* completeness_residual = nullptr);

// Rescale rule along the built-in layer graphs; secant slope falls back to the
// exact derivative when |z - z'| <= 1e-9.
std::vector<double> deeplift(const models::PredictiveModel& m, const double* x,
                             const double* baseline);

std::vector<double> gradient_shap(const models::PredictiveModel& m, const double* x,
                                  const std::vector<std::vector<double>>& baselines,
                                  std::size_t n_samples, double noise_sd,
                                  std::uint64_t seed);

std::vector<double> deeplift_shap(const models::PredictiveModel& m, const double* x,
                                  const std::vector<std::vector<double>>& baselines,
                                  std::size_t n_samples, std::uint64_t seed);

struct SmoothgradScores {
    std::vector<double> signed_mean;
    std::vector<double> abs_mean;  // mean of |gradient|, the ranking score
};
SmoothgradScores smoothgrad_saliency(const models::PredictiveModel& m, const double* x,
                                     double noise_sd, std::size_t n_samples,
                                     std::uint64_t seed);

// Sampled permutations of baseline->input flips; signed means. When
// `stderr_out` is given it receives the per-feature standard error of the
// mean over permutations.
std::vector<double> shapley_sampling(const models::PredictiveModel& m, const double* x,
                                     const double* baseline, std::size_t n_permutations,
                                     std::uint64_t seed,
                                     std::vector<double>* stderr_out = nullptr);

// All d! permutations (d <= 10).
std::vector<double> shapley_exact(const models::PredictiveModel& m, const double* x,
                                  const double* baseline);

// Batch method: column shuffles across samples (cyclic, so nothing stays put);
// per sample |logit delta|. Returns n_samples score vectors.
std::vector<std::vector<double>> feature_permutation(const models::PredictiveModel& m,
                                                     const double* xs, std::size_t n,
                                                     std::uint64_t seed);

std::vector<double> feature_ablation(const models::PredictiveModel& m, const double* x,
                                     const double* baseline);

struct OcclusionScores {
    std::vector<double> signed_mean;  // mean logit delta over covering windows
    std::vector<double> abs_mean;     // mean |logit delta|, the ranking score
};
OcclusionScores occlusion(const models::PredictiveModel& m, const double* x,
                          std::size_t window_t, std::size_t window_f,
                          const double* baseline);

// Squared discrete difference quotient against the zero baseline. Cells at
// exactly zero use the squared exact partial at the zero vector when the
// model has gradients, else score zero.
std::vector<double> arch_detect(const models::PredictiveModel& m, const double* x);

// Seeded permutation of {1..d}: a uniformly random ranking.
std::vector<double> random_attribution(std::size_t d, std::uint64_t seed);

struct MethodConfig {
    std::string method = "saliency";
    BaselineSpec baseline;                 // methods default to U[0,1] unless set
    std::size_t ig_steps = 64;
    std::size_t n_samples = 16;            // gradient_shap / deeplift_shap / smoothgrad
    std::size_t n_permutations = 32;       // shapley_sampling
    bool shapley_exhaustive = false;
    double noise_sd = 0.1;
    std::size_t window_t = 1, window_f = 1;  // occlusion

    void validate() const;
    // Reads shared keys from [attribution]; method name supplied separately.
    static MethodConfig from_config(const io::Config& cfg, const std::string& method);
};

const std::vector<std::string>& method_names();  // the 11 + random + glassbox
bool is_known_method(const std::string& name);

// Dispatcher. Per-sample seeds derive from (seed, sample index) so samples are
// decoupled; feature_permutation treats the batch as one unit.
std::vector<AttributionResult> attribute_batch(const models::PredictiveModel& m,
                                               const double* xs, std::size_t n,
                                               const std::vector<std::string>& sample_ids,
                                               const MethodConfig& cfg,
                                               std::uint64_t seed);

// Dump rows: sample_id,timestep,feature,signed_score,abs_score,method,seed.
void write_attribution_csv(const std::string& path,
                           const std::vector<AttributionResult>& results,
                           const std::vector<std::string>& feature_names);

}  // namespace attribaudit::attribution
