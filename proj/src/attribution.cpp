#include "attribaudit/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include "attribaudit/errors.hpp"
#include "attribaudit/kernels.hpp"
#include "attribaudit/rng.hpp"

namespace attribaudit::attribution {

namespace {

constexpr double kSecantEps = 1e-9;

std::vector<double> abs_of(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::fabs(v[i]);
    }
    return out;
}

void require_gradients(const models::PredictiveModel& m, const char* method) {
    if (!m.gradient_capable) {
        throw CapabilityError(std::string(method) + " needs a gradient-capable model");
    }
}

// Hidden pre-activations of the built-in architectures, needed for secant
// slopes. Layout: feedforward -> hidden values; recurrent -> t * hidden.
std::vector<double> hidden_preacts(const models::PredictiveModel& m, const double* x) {
    const std::size_t h = m.hidden;
    if (m.kind == models::ModelKind::feedforward) {
        std::vector<double> z(h);
        kernels::matvec(m.w1.data(), h, m.flat(), x, z.data());
        for (std::size_t u = 0; u < h; ++u) {
            z[u] += m.b1[u];
        }
        return z;
    }
    std::vector<double> z(m.t * h);
    std::vector<double> hprev(h, 0.0);
    for (std::size_t step = 0; step < m.t; ++step) {
        double* zt = z.data() + step * h;
        kernels::matvec(m.w1.data(), h, m.f, x + step * m.f, zt);
        for (std::size_t u = 0; u < h; ++u) {
            zt[u] += m.b1[u] + kernels::dot({m.wh.data() + u * h, h}, {hprev.data(), h});
        }
        for (std::size_t u = 0; u < h; ++u) {
            hprev[u] = std::tanh(zt[u]);
        }
    }
    return z;
}

double secant(double fz, double fz_ref, double z, double z_ref, double deriv_at_z) {
    const double dz = z - z_ref;
    if (std::fabs(dz) <= kSecantEps) {
        return deriv_at_z;
    }
    return (fz - fz_ref) / dz;
}

}  // namespace

BaselineSpec BaselineSpec::zeros() { return {}; }

BaselineSpec BaselineSpec::uniform_random() {
    BaselineSpec s;
    s.mode = Mode::uniform_random;
    return s;
}

BaselineSpec BaselineSpec::fixed_vector(std::vector<double> v) {
    BaselineSpec s;
    s.mode = Mode::fixed_vector;
    s.fixed = std::move(v);
    return s;
}

BaselineSpec BaselineSpec::distribution(std::size_t count) {
    BaselineSpec s;
    s.mode = Mode::distribution_sample;
    s.count = count;
    return s;
}

BaselineSpec BaselineSpec::parse(const std::string& text) {
    if (text == "zeros") {
        return zeros();
    }
    if (text == "uniform_random") {
        return uniform_random();
    }
    if (text.rfind("fixed:", 0) == 0) {
        std::vector<double> v;
        for (const std::string& part : io::split(text.substr(6), ',')) {
            v.push_back(io::parse_double(io::trim(part), "baseline value"));
        }
        if (v.empty()) {
            throw ConfigError("fixed baseline needs at least one value");
        }
        return fixed_vector(std::move(v));
    }
    if (text.rfind("distribution:", 0) == 0) {
        const long long n = io::parse_int(io::trim(text.substr(13)), "baseline sample count");
        if (n < 1) {
            throw ConfigError("baseline sample count must be positive");
        }
        return distribution(static_cast<std::size_t>(n));
    }
    throw ConfigError("unknown baseline '" + text +
                      "' (expected zeros, uniform_random, fixed:v1,v2,..., distribution:N)");
}

std::vector<std::vector<double>> BaselineSpec::materialize(std::size_t d,
                                                           std::uint64_t seed) const {
    switch (mode) {
        case Mode::zeros:
            return {std::vector<double>(d, 0.0)};
        case Mode::uniform_random: {
            SeededRng rng(seed);
            std::vector<double> v(d);
            for (double& x : v) {
                x = rng.uniform();
            }
            return {std::move(v)};
        }
        case Mode::fixed_vector:
            if (fixed.size() != d) {
                throw ConfigError("fixed baseline has " + std::to_string(fixed.size()) +
                                  " values, input has " + std::to_string(d));
            }
            return {fixed};
        case Mode::distribution_sample: {
            SeededRng rng(seed);
            std::vector<std::vector<double>> out(count, std::vector<double>(d));
            for (auto& v : out) {
                for (double& x : v) {
                    x = rng.uniform();
                }
            }
            return out;
        }
    }
    throw ConfigError("invalid baseline mode");
}

std::string BaselineSpec::describe() const {
    switch (mode) {
        case Mode::zeros:
            return "zeros";
        case Mode::uniform_random:
            return "uniform_random";
        case Mode::fixed_vector:
            return "fixed_vector(" + std::to_string(fixed.size()) + ")";
        case Mode::distribution_sample:
            return "distribution_sample(" + std::to_string(count) + ")";
    }
    return "invalid";
}

std::vector<double> saliency(const models::PredictiveModel& m, const double* x) {
    require_gradients(m, "saliency");
    return m.input_gradient(x);
}

std::vector<double> integrated_gradients(const models::PredictiveModel& m,
                                         const double* x, const double* baseline,
                                         std::size_t steps,
                                         double* completeness_residual) {
    require_gradients(m, "integrated_gradients");
    if (steps < 2) {
        throw ConfigError("integrated_gradients needs steps >= 2");
    }
    const std::size_t d = m.flat();
    std::vector<double> grad_sum(d, 0.0);
    std::vector<double> point(d);
    for (std::size_t s = 0; s < steps; ++s) {
        const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
        for (std::size_t i = 0; i < d; ++i) {
            point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
        }
        const std::vector<double> g = m.input_gradient(point.data());
        kernels::axpy(1.0, {g.data(), d}, {grad_sum.data(), d});
    }
    std::vector<double> signed_scores(d);
    for (std::size_t i = 0; i < d; ++i) {
        signed_scores[i] = (x[i] - baseline[i]) * grad_sum[i] / static_cast<double>(steps);
    }
    if (completeness_residual != nullptr) {
        const double total = kernels::sum({signed_scores.data(), d});
        *completeness_residual = std::fabs(total - (m.logit(x) - m.logit(baseline)));
    }
    return signed_scores;
}

std::vector<double> deeplift(const models::PredictiveModel& m, const double* x,
                             const double* baseline) {
    const std::size_t d = m.flat();
    std::vector<double> signed_scores(d, 0.0);
    switch (m.kind) {
        case models::ModelKind::linear: {
            for (std::size_t i = 0; i < d; ++i) {
                signed_scores[i] = m.w1[i] * (x[i] - baseline[i]);
            }
            return signed_scores;
        }
        case models::ModelKind::feedforward: {
            const std::size_t h = m.hidden;
            const std::vector<double> z = hidden_preacts(m, x);
            const std::vector<double> z_ref = hidden_preacts(m, baseline);
            std::vector<double> back(h);
            for (std::size_t u = 0; u < h; ++u) {
                const double relu_z = z[u] > 0.0 ? z[u] : 0.0;
                const double relu_ref = z_ref[u] > 0.0 ? z_ref[u] : 0.0;
                const double deriv = z[u] > 0.0 ? 1.0 : 0.0;
                back[u] = m.w2[u] * secant(relu_z, relu_ref, z[u], z_ref[u], deriv);
            }
            std::vector<double> mult(d, 0.0);
            kernels::matvec_transpose_accum(m.w1.data(), h, d, back.data(), mult.data());
            for (std::size_t i = 0; i < d; ++i) {
                signed_scores[i] = mult[i] * (x[i] - baseline[i]);
            }
            return signed_scores;
        }
        case models::ModelKind::recurrent: {
            const std::size_t h = m.hidden;
            const std::vector<double> z = hidden_preacts(m, x);
            const std::vector<double> z_ref = hidden_preacts(m, baseline);
            const double inv_t = 1.0 / static_cast<double>(m.t);
            std::vector<double> delta_next(h, 0.0);
            std::vector<double> delta(h);
            for (std::size_t step = m.t; step-- > 0;) {
                std::vector<double> upstream(h);
                for (std::size_t u = 0; u < h; ++u) {
                    upstream[u] = m.w2[u] * inv_t;
                }
                kernels::matvec_transpose_accum(m.wh.data(), h, h, delta_next.data(),
                                                upstream.data());
                const double* zt = z.data() + step * h;
                const double* zt_ref = z_ref.data() + step * h;
                for (std::size_t u = 0; u < h; ++u) {
                    const double ht = std::tanh(zt[u]);
                    const double ht_ref = std::tanh(zt_ref[u]);
                    const double deriv = 1.0 - ht * ht;
                    delta[u] = upstream[u] * secant(ht, ht_ref, zt[u], zt_ref[u], deriv);
                }
                double* row = signed_scores.data() + step * m.f;
                kernels::matvec_transpose_accum(m.w1.data(), h, m.f, delta.data(), row);
                for (std::size_t i = 0; i < m.f; ++i) {
                    row[i] *= x[step * m.f + i] - baseline[step * m.f + i];
                }
                delta_next = delta;
            }
            return signed_scores;
        }
    }
    throw CapabilityError("deeplift supports only the built-in architectures");
}

std::vector<double> gradient_shap(const models::PredictiveModel& m, const double* x,
                                  const std::vector<std::vector<double>>& baselines,
                                  std::size_t n_samples, double noise_sd,
                                  std::uint64_t seed) {
    require_gradients(m, "gradient_shap");
    if (baselines.empty() || n_samples == 0) {
        throw ConfigError("gradient_shap needs baselines and n_samples >= 1");
    }
    const std::size_t d = m.flat();
    SeededRng rng(seed);
    std::vector<double> acc(d, 0.0);
    std::vector<double> point(d);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::vector<double>& b = baselines[rng.uniform_index(baselines.size())];
        const double alpha = rng.uniform();
        for (std::size_t i = 0; i < d; ++i) {
            const double noisy = x[i] + noise_sd * rng.normal();
            point[i] = b[i] + alpha * (noisy - b[i]);
        }
        const std::vector<double> g = m.input_gradient(point.data());
        for (std::size_t i = 0; i < d; ++i) {
            acc[i] += g[i] * (x[i] - b[i]);
        }
    }
    kernels::scale({acc.data(), d}, 1.0 / static_cast<double>(n_samples));
    return acc;
}

std::vector<double> deeplift_shap(const models::PredictiveModel& m, const double* x,
                                  const std::vector<std::vector<double>>& baselines,
                                  std::size_t n_samples, std::uint64_t seed) {
    if (baselines.empty() || n_samples == 0) {
        throw ConfigError("deeplift_shap needs baselines and n_samples >= 1");
    }
    const std::size_t d = m.flat();
    SeededRng rng(seed);
    std::vector<double> acc(d, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::vector<double>& b = baselines[rng.uniform_index(baselines.size())];
        const std::vector<double> one = deeplift(m, x, b.data());
        kernels::axpy(1.0, {one.data(), d}, {acc.data(), d});
    }
    kernels::scale({acc.data(), d}, 1.0 / static_cast<double>(n_samples));
    return acc;
}

SmoothgradScores smoothgrad_saliency(const models::PredictiveModel& m, const double* x,
                                     double noise_sd, std::size_t n_samples,
                                     std::uint64_t seed) {
    require_gradients(m, "smoothgrad_saliency");
    if (n_samples == 0) {
        throw ConfigError("smoothgrad_saliency needs n_samples >= 1");
    }
    if (noise_sd < 0.0) {
        throw ConfigError("noise_sd must be nonnegative");
    }
    const std::size_t d = m.flat();
    SeededRng rng(seed);
    SmoothgradScores out;
    out.signed_mean.assign(d, 0.0);
    out.abs_mean.assign(d, 0.0);
    std::vector<double> point(d);
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t i = 0; i < d; ++i) {
            point[i] = x[i] + noise_sd * rng.normal();
        }
        const std::vector<double> g = m.input_gradient(point.data());
        for (std::size_t i = 0; i < d; ++i) {
            out.signed_mean[i] += g[i];
            out.abs_mean[i] += std::fabs(g[i]);
        }
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    kernels::scale({out.signed_mean.data(), d}, inv);
    kernels::scale({out.abs_mean.data(), d}, inv);
    return out;
}

namespace {

// Marginal logit deltas along one flip order, accumulated per feature.
void shapley_walk(const models::PredictiveModel& m, const double* x,
                  const double* baseline, const std::vector<std::size_t>& order,
                  double base_logit, std::vector<double>& scratch,
                  std::vector<double>& marginals) {
    const std::size_t d = m.flat();
    std::copy(baseline, baseline + d, scratch.begin());
    double prev = base_logit;
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t i = order[k];
        scratch[i] = x[i];
        const double cur = m.logit(scratch.data());
        marginals[i] = cur - prev;
        prev = cur;
    }
}

}  // namespace

std::vector<double> shapley_sampling(const models::PredictiveModel& m, const double* x,
                                     const double* baseline, std::size_t n_permutations,
                                     std::uint64_t seed,
                                     std::vector<double>* stderr_out) {
    if (n_permutations == 0) {
        throw ConfigError("shapley_sampling needs n_permutations >= 1");
    }
    const std::size_t d = m.flat();
    const double base_logit = m.logit(baseline);
    SeededRng rng(seed);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> scratch(d);
    std::vector<double> marginals(d);
    std::vector<double> sum(d, 0.0);
    std::vector<double> sumsq(d, 0.0);
    for (std::size_t p = 0; p < n_permutations; ++p) {
        rng.shuffle(std::span<std::size_t>(order));
        shapley_walk(m, x, baseline, order, base_logit, scratch, marginals);
        for (std::size_t i = 0; i < d; ++i) {
            sum[i] += marginals[i];
            sumsq[i] += marginals[i] * marginals[i];
        }
    }
    const double n = static_cast<double>(n_permutations);
    std::vector<double> signed_scores(d);
    for (std::size_t i = 0; i < d; ++i) {
        signed_scores[i] = sum[i] / n;
    }
    if (stderr_out != nullptr) {
        stderr_out->assign(d, 0.0);
        if (n_permutations > 1) {
            for (std::size_t i = 0; i < d; ++i) {
                const double var =
                    std::max(0.0, (sumsq[i] - n * signed_scores[i] * signed_scores[i]) /
                                      (n - 1.0));
                (*stderr_out)[i] = std::sqrt(var / n);
            }
        }
    }
    return signed_scores;
}

std::vector<double> shapley_exact(const models::PredictiveModel& m, const double* x,
                                  const double* baseline) {
    const std::size_t d = m.flat();
    if (d > 10) {
        throw ConfigError("exhaustive shapley is limited to 10 features, got " +
                          std::to_string(d));
    }
    const double base_logit = m.logit(baseline);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> scratch(d);
    std::vector<double> marginals(d);
    std::vector<double> sum(d, 0.0);
    std::size_t count = 0;
    do {
        shapley_walk(m, x, baseline, order, base_logit, scratch, marginals);
        for (std::size_t i = 0; i < d; ++i) {
            sum[i] += marginals[i];
        }
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    for (std::size_t i = 0; i < d; ++i) {
        sum[i] /= static_cast<double>(count);
    }
    return sum;
}

std::vector<std::vector<double>> feature_permutation(const models::PredictiveModel& m,
                                                     const double* xs, std::size_t n,
                                                     std::uint64_t seed) {
    if (n < 2) {
        throw ConfigError("feature_permutation needs a batch of at least 2 samples");
    }
    const std::size_t d = m.flat();
    const std::vector<double> orig = m.logits(xs, n);
    SeededRng rng(seed);
    std::vector<std::vector<double>> deltas(n, std::vector<double>(d, 0.0));
    std::vector<std::size_t> donor(n);
    std::vector<double> mod(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::iota(donor.begin(), donor.end(), std::size_t{0});
        rng.cycle_shuffle(std::span<std::size_t>(donor));
        for (std::size_t i = 0; i < n; ++i) {
            const double swapped = xs[donor[i] * d + j];
            if (swapped == xs[i * d + j]) {
                continue;  // unchanged cell, delta is exactly zero
            }
            std::copy(xs + i * d, xs + (i + 1) * d, mod.begin());
            mod[j] = swapped;
            deltas[i][j] = orig[i] - m.logit(mod.data());
        }
    }
    return deltas;
}

std::vector<double> feature_ablation(const models::PredictiveModel& m, const double* x,
                                     const double* baseline) {
    const std::size_t d = m.flat();
    const double orig = m.logit(x);
    std::vector<double> signed_scores(d);
    std::vector<double> mod(x, x + d);
    for (std::size_t i = 0; i < d; ++i) {
        const double keep = mod[i];
        mod[i] = baseline[i];
        signed_scores[i] = orig - m.logit(mod.data());
        mod[i] = keep;
    }
    return signed_scores;
}

OcclusionScores occlusion(const models::PredictiveModel& m, const double* x,
                          std::size_t window_t, std::size_t window_f,
                          const double* baseline) {
    const std::size_t rows = m.sequential ? m.t : 1;
    const std::size_t cols = m.sequential ? m.f : m.flat();
    if (window_t < 1 || window_t > rows || window_f < 1 || window_f > cols) {
        throw ConfigError("occlusion window " + std::to_string(window_t) + "x" +
                          std::to_string(window_f) + " does not fit input " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
    const std::size_t d = m.flat();
    const double orig = m.logit(x);
    OcclusionScores out;
    out.signed_mean.assign(d, 0.0);
    out.abs_mean.assign(d, 0.0);
    std::vector<std::size_t> cover(d, 0);
    std::vector<double> mod(d);
    for (std::size_t t0 = 0; t0 + window_t <= rows; ++t0) {
        for (std::size_t f0 = 0; f0 + window_f <= cols; ++f0) {
            std::copy(x, x + d, mod.begin());
            for (std::size_t dt = 0; dt < window_t; ++dt) {
                for (std::size_t df = 0; df < window_f; ++df) {
                    const std::size_t cell = (t0 + dt) * cols + (f0 + df);
                    mod[cell] = baseline[cell];
                }
            }
            const double delta = orig - m.logit(mod.data());
            for (std::size_t dt = 0; dt < window_t; ++dt) {
                for (std::size_t df = 0; df < window_f; ++df) {
                    const std::size_t cell = (t0 + dt) * cols + (f0 + df);
                    out.signed_mean[cell] += delta;
                    out.abs_mean[cell] += std::fabs(delta);
                    ++cover[cell];
                }
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        out.signed_mean[i] /= static_cast<double>(cover[i]);
        out.abs_mean[i] /= static_cast<double>(cover[i]);
    }
    return out;
}

std::vector<double> arch_detect(const models::PredictiveModel& m, const double* x) {
    const std::size_t d = m.flat();
    std::vector<double> zero(d, 0.0);
    const double m0 = m.logit(zero.data());
    std::vector<double> grad0;
    std::vector<double> scores(d, 0.0);
    std::vector<double> probe(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (x[i] != 0.0) {
            probe[i] = x[i];
            const double q = (m.logit(probe.data()) - m0) / x[i];
            probe[i] = 0.0;
            scores[i] = q * q;
        } else if (m.gradient_capable) {
            if (grad0.empty()) {
                grad0 = m.input_gradient(zero.data());
            }
            scores[i] = grad0[i] * grad0[i];
        }
    }
    return scores;
}

std::vector<double> random_attribution(std::size_t d, std::uint64_t seed) {
    std::vector<double> scores(d);
    std::iota(scores.begin(), scores.end(), 1.0);
    SeededRng rng(seed);
    rng.shuffle(std::span<double>(scores));
    return scores;
}

void MethodConfig::validate() const {
    if (!is_known_method(method)) {
        throw ConfigError("unknown attribution method '" + method + "'");
    }
    if (ig_steps < 2) {
        throw ConfigError("ig_steps must be at least 2");
    }
    if (n_samples == 0 || n_permutations == 0) {
        throw ConfigError("n_samples and n_permutations must be positive");
    }
    if (noise_sd < 0.0) {
        throw ConfigError("noise_sd must be nonnegative");
    }
    if (window_t == 0 || window_f == 0) {
        throw ConfigError("occlusion window sides must be positive");
    }
}

MethodConfig MethodConfig::from_config(const io::Config& cfg, const std::string& method) {
    MethodConfig mc;
    mc.method = method;
    const std::string section = "attribution";
    if (cfg.has(section, "baseline")) {
        mc.baseline = BaselineSpec::parse(cfg.get(section, "baseline"));
    }
    mc.ig_steps = static_cast<std::size_t>(cfg.get_int_or(section, "ig_steps", 64));
    mc.n_samples = static_cast<std::size_t>(cfg.get_int_or(section, "n_samples", 16));
    mc.n_permutations =
        static_cast<std::size_t>(cfg.get_int_or(section, "n_permutations", 32));
    mc.shapley_exhaustive = cfg.get_bool_or(section, "shapley_exhaustive", false);
    mc.noise_sd = cfg.get_double_or(section, "noise_sd", 0.1);
    mc.window_t = static_cast<std::size_t>(cfg.get_int_or(section, "window_t", 1));
    mc.window_f = static_cast<std::size_t>(cfg.get_int_or(section, "window_f", 1));
    mc.validate();
    return mc;
}

const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {
        "saliency",         "integrated_gradients", "deeplift",
        "gradient_shap",    "deeplift_shap",        "smoothgrad_saliency",
        "shapley_sampling", "feature_permutation",  "feature_ablation",
        "occlusion",        "arch_detect",          "random",
        "glassbox",
    };
    return names;
}

bool is_known_method(const std::string& name) {
    const auto& names = method_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

const std::vector<double>& single_baseline(
    const std::vector<std::vector<double>>& baselines, const std::string& method) {
    if (baselines.size() != 1) {
        throw ConfigError(method + " needs a single baseline, got " +
                          std::to_string(baselines.size()));
    }
    return baselines.front();
}

AttributionResult make_result(const models::PredictiveModel& m, const MethodConfig& cfg,
                              const std::string& sample_id, std::uint64_t seed,
                              std::string baseline_echo, std::vector<double> signed_scores,
                              std::vector<double> abs_scores) {
    AttributionResult r;
    r.method = cfg.method;
    r.sample_id = sample_id;
    r.baseline_echo = std::move(baseline_echo);
    r.seed = seed;
    r.t = m.sequential ? m.t : 1;
    r.f = m.sequential ? m.f : m.flat();
    r.signed_scores = std::move(signed_scores);
    r.abs_scores = std::move(abs_scores);
    for (double v : r.abs_scores) {
        if (!std::isfinite(v) || v < 0.0) {
            throw MetricError(r.method + " produced a non-finite or negative score for " +
                              sample_id);
        }
    }
    return r;
}

AttributionResult attribute_one(const models::PredictiveModel& m, const double* x,
                                const std::string& sample_id, const MethodConfig& cfg,
                                std::uint64_t run_seed) {
    const std::size_t d = m.flat();
    const std::uint64_t sample_seed = derive_seed(run_seed, sample_id);
    const std::uint64_t baseline_seed = derive_seed(sample_seed, "baseline");
    const std::uint64_t draw_seed = derive_seed(sample_seed, "draws");
    const std::string& method = cfg.method;

    if (method == "saliency") {
        std::vector<double> s = saliency(m, x);
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, "none", std::move(s), std::move(a));
    }
    if (method == "integrated_gradients") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        const auto& b = single_baseline(baselines, method);
        double residual = 0.0;
        std::vector<double> s = integrated_gradients(m, x, b.data(), cfg.ig_steps, &residual);
        std::vector<double> a = abs_of(s);
        AttributionResult r = make_result(m, cfg, sample_id, run_seed,
                                          cfg.baseline.describe(), std::move(s), std::move(a));
        r.completeness_residual = residual;
        return r;
    }
    if (method == "deeplift") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        const auto& b = single_baseline(baselines, method);
        std::vector<double> s = deeplift(m, x, b.data());
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(s), std::move(a));
    }
    if (method == "gradient_shap") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        std::vector<double> s =
            gradient_shap(m, x, baselines, cfg.n_samples, cfg.noise_sd, draw_seed);
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(s), std::move(a));
    }
    if (method == "deeplift_shap") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        std::vector<double> s = deeplift_shap(m, x, baselines, cfg.n_samples, draw_seed);
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(s), std::move(a));
    }
    if (method == "smoothgrad_saliency") {
        SmoothgradScores sg = smoothgrad_saliency(m, x, cfg.noise_sd, cfg.n_samples, draw_seed);
        return make_result(m, cfg, sample_id, run_seed, "none",
                           std::move(sg.signed_mean), std::move(sg.abs_mean));
    }
    if (method == "shapley_sampling") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        const auto& b = single_baseline(baselines, method);
        std::vector<double> s =
            cfg.shapley_exhaustive
                ? shapley_exact(m, x, b.data())
                : shapley_sampling(m, x, b.data(), cfg.n_permutations, draw_seed);
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(s), std::move(a));
    }
    if (method == "feature_ablation") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        const auto& b = single_baseline(baselines, method);
        std::vector<double> s = feature_ablation(m, x, b.data());
        std::vector<double> a = abs_of(s);
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(s), std::move(a));
    }
    if (method == "occlusion") {
        const auto baselines = cfg.baseline.materialize(d, baseline_seed);
        const auto& b = single_baseline(baselines, method);
        OcclusionScores oc = occlusion(m, x, cfg.window_t, cfg.window_f, b.data());
        return make_result(m, cfg, sample_id, run_seed, cfg.baseline.describe(),
                           std::move(oc.signed_mean), std::move(oc.abs_mean));
    }
    if (method == "arch_detect") {
        std::vector<double> s = arch_detect(m, x);
        std::vector<double> a = s;
        return make_result(m, cfg, sample_id, run_seed, "zeros (fixed)", std::move(s),
                           std::move(a));
    }
    if (method == "random") {
        std::vector<double> s = random_attribution(d, draw_seed);
        std::vector<double> a = s;
        return make_result(m, cfg, sample_id, run_seed, "none", std::move(s), std::move(a));
    }
    if (method == "glassbox") {
        std::vector<double> a = m.glassbox_importance(x);
        std::vector<double> s(d);
        for (std::size_t i = 0; i < d; ++i) {
            s[i] = m.w1[i] * (x[i] - m.train_mean[i]);
        }
        return make_result(m, cfg, sample_id, run_seed, "train_mean", std::move(s),
                           std::move(a));
    }
    throw ConfigError("unknown attribution method '" + method + "'");
}

}  // namespace

std::vector<AttributionResult> attribute_batch(const models::PredictiveModel& m,
                                               const double* xs, std::size_t n,
                                               const std::vector<std::string>& sample_ids,
                                               const MethodConfig& cfg,
                                               std::uint64_t seed) {
    cfg.validate();
    if (sample_ids.size() != n) {
        throw ConfigError("sample id count does not match batch size");
    }
    const std::size_t d = m.flat();
    std::vector<AttributionResult> out;
    out.reserve(n);
    if (cfg.method == "feature_permutation") {
        const std::uint64_t batch_seed = derive_seed(seed, "feature_permutation");
        std::vector<std::vector<double>> deltas = feature_permutation(m, xs, n, batch_seed);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> a = abs_of(deltas[i]);
            out.push_back(make_result(m, cfg, sample_ids[i], seed, "batch_shuffle",
                                      std::move(deltas[i]), std::move(a)));
        }
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(attribute_one(m, xs + i * d, sample_ids[i], cfg, seed));
    }
    return out;
}

void write_attribution_csv(const std::string& path,
                           const std::vector<AttributionResult>& results,
                           const std::vector<std::string>& feature_names) {
    io::CsvWriter w({"sample_id", "timestep", "feature", "signed_score", "abs_score",
                     "method", "seed"});
    for (const AttributionResult& r : results) {
        if (feature_names.size() != r.f) {
            throw ConfigError("feature name count does not match attribution width");
        }
        for (std::size_t t = 0; t < r.t; ++t) {
            for (std::size_t j = 0; j < r.f; ++j) {
                const std::size_t cell = t * r.f + j;
                w.add_row({r.sample_id, io::format_int(static_cast<long long>(t)),
                           feature_names[j], io::format_double(r.signed_scores[cell]),
                           io::format_double(r.abs_scores[cell]), r.method,
                           std::to_string(r.seed)});
            }
        }
    }
    io::write_file_atomic(path, w.str());
}

}  // namespace attribaudit::attribution
