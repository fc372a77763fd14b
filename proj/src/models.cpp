#include "attribaudit/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "attribaudit/errors.hpp"
#include "attribaudit/kernels.hpp"
#include "attribaudit/mathx.hpp"
#include "attribaudit/rng.hpp"

namespace attribaudit::models {

using nlohmann::json;
namespace k = attribaudit::kernels;

ModelKind parse_model_kind(const std::string& name) {
    if (name == "linear") return ModelKind::linear;
    if (name == "feedforward") return ModelKind::feedforward;
    if (name == "recurrent") return ModelKind::recurrent;
    throw ConfigError("unknown model kind '" + name + "'");
}

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::linear: return "linear";
        case ModelKind::feedforward: return "feedforward";
        case ModelKind::recurrent: return "recurrent";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (hidden < 1) throw ConfigError("train: hidden must be positive");
    if (l2 < 0.0) throw ConfigError("train: l2 must be nonnegative");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("train: momentum must lie in [0, 1)");
    }
}

TrainConfig TrainConfig::from_config(const io::Config& cfg, const std::string& section) {
    TrainConfig c;
    c.learning_rate = cfg.get_double_or(section, "learning_rate", c.learning_rate);
    c.epochs = static_cast<std::size_t>(cfg.get_int_or(section, "epochs", long(c.epochs)));
    c.batch_size =
        static_cast<std::size_t>(cfg.get_int_or(section, "batch_size", long(c.batch_size)));
    c.hidden = static_cast<std::size_t>(cfg.get_int_or(section, "hidden", long(c.hidden)));
    c.l2 = cfg.get_double_or(section, "l2", c.l2);
    c.momentum = cfg.get_double_or(section, "momentum", c.momentum);
    if (cfg.has(section, "seed")) {
        c.seed = static_cast<std::uint64_t>(cfg.get_int(section, "seed"));
    }
    c.validate();
    return c;
}

namespace {

// logit forward passes; scratch buffers supplied by the caller so batch loops
// stay allocation-free.

double forward_feedforward(const PredictiveModel& m, const double* x,
                           std::vector<double>& z1, std::vector<double>& h) {
    const std::size_t d = m.flat();
    z1.resize(m.hidden);
    h.resize(m.hidden);
    k::matvec(m.w1.data(), m.hidden, d, x, z1.data());
    for (std::size_t u = 0; u < m.hidden; ++u) {
        z1[u] += m.b1[u];
        h[u] = z1[u] > 0.0 ? z1[u] : 0.0;
    }
    return k::dot(std::span(m.w2), std::span<const double>(h)) + m.b2;
}

// hs holds h_t for every step (t x hidden); pooled is their mean.
double forward_recurrent(const PredictiveModel& m, const double* x,
                         std::vector<double>& hs, std::vector<double>& pooled) {
    const std::size_t H = m.hidden;
    hs.assign(m.t * H, 0.0);
    pooled.assign(H, 0.0);
    std::vector<double> z(H);
    for (std::size_t ti = 0; ti < m.t; ++ti) {
        const double* xt = x + ti * m.f;
        const double* hprev = ti > 0 ? &hs[(ti - 1) * H] : nullptr;
        k::matvec(m.w1.data(), H, m.f, xt, z.data());
        for (std::size_t u = 0; u < H; ++u) {
            double v = z[u] + m.b1[u];
            if (hprev != nullptr) {
                v += k::active().dot(&m.wh[u * H], hprev, H);
            }
            hs[ti * H + u] = std::tanh(v);
        }
    }
    for (std::size_t ti = 0; ti < m.t; ++ti) {
        k::axpy(1.0 / double(m.t), std::span<const double>(&hs[ti * H], H),
                std::span<double>(pooled));
    }
    return k::dot(std::span(m.w2), std::span<const double>(pooled)) + m.b2;
}

}  // namespace

double PredictiveModel::logit(const double* x) const {
    switch (kind) {
        case ModelKind::linear:
            return k::active().dot(w1.data(), x, flat()) + b2;
        case ModelKind::feedforward: {
            std::vector<double> z1, h;
            return forward_feedforward(*this, x, z1, h);
        }
        case ModelKind::recurrent: {
            std::vector<double> hs, pooled;
            return forward_recurrent(*this, x, hs, pooled);
        }
    }
    throw Error("unreachable model kind");
}

std::vector<double> PredictiveModel::logits(const double* xs, std::size_t n) const {
    std::vector<double> out(n);
    const std::size_t d = flat();
    for (std::size_t i = 0; i < n; ++i) out[i] = logit(xs + i * d);
    return out;
}

std::vector<double> PredictiveModel::predict_proba(const double* xs, std::size_t n) const {
    std::vector<double> out = logits(xs, n);
    for (double& v : out) v = stable_sigmoid(v);
    return out;
}

std::vector<double> PredictiveModel::input_gradient(const double* x) const {
    if (!gradient_capable) {
        throw CapabilityError(std::string(model_kind_name(kind)) +
                              " model is not gradient capable");
    }
    const std::size_t d = flat();
    std::vector<double> g(d, 0.0);
    switch (kind) {
        case ModelKind::linear:
            std::copy(w1.begin(), w1.end(), g.begin());
            return g;
        case ModelKind::feedforward: {
            std::vector<double> z1, h;
            forward_feedforward(*this, x, z1, h);
            std::vector<double> dz(hidden);
            for (std::size_t u = 0; u < hidden; ++u) {
                dz[u] = z1[u] > 0.0 ? w2[u] : 0.0;
            }
            k::matvec_transpose_accum(w1.data(), hidden, d, dz.data(), g.data());
            return g;
        }
        case ModelKind::recurrent: {
            const std::size_t H = hidden;
            std::vector<double> hs, pooled;
            forward_recurrent(*this, x, hs, pooled);
            std::vector<double> delta_next(H, 0.0), gh(H), delta(H);
            for (std::size_t step = t; step-- > 0;) {
                for (std::size_t u = 0; u < H; ++u) gh[u] = w2[u] / double(t);
                k::matvec_transpose_accum(wh.data(), H, H, delta_next.data(), gh.data());
                for (std::size_t u = 0; u < H; ++u) {
                    const double hv = hs[step * H + u];
                    delta[u] = gh[u] * (1.0 - hv * hv);
                }
                k::matvec_transpose_accum(w1.data(), H, f, delta.data(), g.data() + step * f);
                std::swap(delta, delta_next);
            }
            return g;
        }
    }
    throw Error("unreachable model kind");
}

std::vector<double> PredictiveModel::glassbox_importance(const double* x) const {
    if (!glassbox) {
        throw CapabilityError(std::string(model_kind_name(kind)) +
                              " model has no glassbox importance");
    }
    const std::size_t d = flat();
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = std::abs(w1[i] * (x[i] - train_mean[i]));
    }
    return out;
}

namespace {

struct Gradients {
    std::vector<double> w1, wh, b1, w2;
    double b2 = 0.0;

    void match(const PredictiveModel& m) {
        w1.assign(m.w1.size(), 0.0);
        wh.assign(m.wh.size(), 0.0);
        b1.assign(m.b1.size(), 0.0);
        w2.assign(m.w2.size(), 0.0);
        b2 = 0.0;
    }
};

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

// Accumulates d(loss)/d(params) for one sample; returns its logistic loss.
double backward_sample(const PredictiveModel& m, const double* x, int y, Gradients& g,
                       std::vector<double>& scratch_a, std::vector<double>& scratch_b) {
    const std::size_t d = m.flat();
    double z = 0.0;
    switch (m.kind) {
        case ModelKind::linear: {
            z = k::active().dot(m.w1.data(), x, d) + m.b2;
            const double dz = stable_sigmoid(z) - double(y);
            k::active().axpy(dz, x, g.w1.data(), d);
            g.b2 += dz;
            break;
        }
        case ModelKind::feedforward: {
            z = forward_feedforward(m, x, scratch_a, scratch_b);
            const double dz = stable_sigmoid(z) - double(y);
            const std::vector<double>& z1 = scratch_a;
            const std::vector<double>& h = scratch_b;
            for (std::size_t u = 0; u < m.hidden; ++u) {
                g.w2[u] += dz * h[u];
                const double du = z1[u] > 0.0 ? dz * m.w2[u] : 0.0;
                if (du != 0.0) {
                    k::active().axpy(du, x, &g.w1[u * d], d);
                    g.b1[u] += du;
                }
            }
            g.b2 += dz;
            break;
        }
        case ModelKind::recurrent: {
            const std::size_t H = m.hidden;
            std::vector<double>& hs = scratch_a;
            std::vector<double>& pooled = scratch_b;
            z = forward_recurrent(m, x, hs, pooled);
            const double dz = stable_sigmoid(z) - double(y);
            for (std::size_t u = 0; u < H; ++u) g.w2[u] += dz * pooled[u];
            g.b2 += dz;
            std::vector<double> delta_next(H, 0.0), gh(H), delta(H);
            for (std::size_t step = m.t; step-- > 0;) {
                for (std::size_t u = 0; u < H; ++u) gh[u] = dz * m.w2[u] / double(m.t);
                k::matvec_transpose_accum(m.wh.data(), H, H, delta_next.data(), gh.data());
                for (std::size_t u = 0; u < H; ++u) {
                    const double hv = hs[step * H + u];
                    delta[u] = gh[u] * (1.0 - hv * hv);
                }
                const double* xt = x + step * m.f;
                const double* hprev = step > 0 ? &hs[(step - 1) * H] : nullptr;
                for (std::size_t u = 0; u < H; ++u) {
                    if (delta[u] == 0.0) continue;
                    k::active().axpy(delta[u], xt, &g.w1[u * m.f], m.f);
                    if (hprev != nullptr) {
                        k::active().axpy(delta[u], hprev, &g.wh[u * H], H);
                    }
                    g.b1[u] += delta[u];
                }
                std::swap(delta, delta_next);
            }
            break;
        }
    }
    return softplus(z) - double(y) * z;
}

void init_uniform(SeededRng& rng, std::vector<double>& w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (double& v : w) v = rng.uniform(-bound, bound);
}

struct Velocity {
    std::vector<double> w1, wh, b1, w2;
    double b2 = 0.0;
};

void apply_update(std::vector<double>& p, std::vector<double>& v,
                  const std::vector<double>& g, double lr, double momentum) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

}  // namespace

PredictiveModel train(ModelKind kind, bool sequential, std::size_t t, std::size_t f,
                      std::span<const double> x_train, std::span<const int> y_train,
                      std::span<const double> x_val, std::span<const int> y_val,
                      const TrainConfig& cfg) {
    cfg.validate();
    if (kind == ModelKind::recurrent && !sequential) {
        throw ConfigError("recurrent models need sequential input");
    }
    if (kind != ModelKind::recurrent && sequential) {
        throw ConfigError(std::string(model_kind_name(kind)) + " models take flat input");
    }
    const std::size_t d = t * f;
    if (d == 0 || y_train.empty() || x_train.size() != y_train.size() * d) {
        throw ConfigError("train: input shape mismatch");
    }
    if (x_val.size() != y_val.size() * d) {
        throw ConfigError("train: validation shape mismatch");
    }
    for (int y : y_train) {
        if (y != 0 && y != 1) throw ConfigError("train: labels must be 0 or 1");
    }
    const std::size_t n = y_train.size();

    PredictiveModel m;
    m.kind = kind;
    m.sequential = sequential;
    m.t = sequential ? t : 1;
    m.f = sequential ? f : d;
    m.hidden = kind == ModelKind::linear ? 0 : cfg.hidden;
    m.gradient_capable = true;
    m.glassbox = kind == ModelKind::linear;
    m.config = cfg;

    SeededRng rng(cfg.seed);
    switch (kind) {
        case ModelKind::linear:
            m.w1.assign(d, 0.0);
            init_uniform(rng, m.w1, d);
            break;
        case ModelKind::feedforward:
            m.w1.assign(m.hidden * d, 0.0);
            m.b1.assign(m.hidden, 0.0);
            m.w2.assign(m.hidden, 0.0);
            init_uniform(rng, m.w1, d);
            init_uniform(rng, m.w2, m.hidden);
            break;
        case ModelKind::recurrent:
            m.w1.assign(m.hidden * m.f, 0.0);
            m.wh.assign(m.hidden * m.hidden, 0.0);
            m.b1.assign(m.hidden, 0.0);
            m.w2.assign(m.hidden, 0.0);
            init_uniform(rng, m.w1, m.f);
            init_uniform(rng, m.wh, m.hidden);
            init_uniform(rng, m.w2, m.hidden);
            break;
    }

    m.train_mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        k::axpy(1.0 / double(n), std::span(x_train.data() + i * d, d),
                std::span(m.train_mean));
    }

    const bool val_usable = [&] {
        if (y_val.empty()) return false;
        bool pos = false, neg = false;
        for (int y : y_val) (y == 1 ? pos : neg) = true;
        return pos && neg;
    }();

    Gradients grad;
    Velocity vel;
    vel.w1.assign(m.w1.size(), 0.0);
    vel.wh.assign(m.wh.size(), 0.0);
    vel.b1.assign(m.b1.size(), 0.0);
    vel.w2.assign(m.w2.size(), 0.0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> scratch_a, scratch_b;

    PredictiveModel best = m;
    double best_val = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            grad.match(m);
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t i = order[bi];
                batch_loss +=
                    backward_sample(m, x_train.data() + i * d, y_train[i], grad,
                                    scratch_a, scratch_b);
            }
            const double inv = 1.0 / double(stop - start);
            k::scale(std::span(grad.w1), inv);
            k::scale(std::span(grad.wh), inv);
            k::scale(std::span(grad.b1), inv);
            k::scale(std::span(grad.w2), inv);
            grad.b2 *= inv;
            if (cfg.l2 > 0.0) {
                k::axpy(cfg.l2, std::span(m.w1), std::span(grad.w1));
                k::axpy(cfg.l2, std::span(m.wh), std::span(grad.wh));
                k::axpy(cfg.l2, std::span(m.w2), std::span(grad.w2));
            }
            apply_update(m.w1, vel.w1, grad.w1, cfg.learning_rate, cfg.momentum);
            apply_update(m.wh, vel.wh, grad.wh, cfg.learning_rate, cfg.momentum);
            apply_update(m.b1, vel.b1, grad.b1, cfg.learning_rate, cfg.momentum);
            apply_update(m.w2, vel.w2, grad.w2, cfg.learning_rate, cfg.momentum);
            vel.b2 = cfg.momentum * vel.b2 - cfg.learning_rate * grad.b2;
            m.b2 += vel.b2;
            epoch_loss += batch_loss;
        }
        epoch_loss /= double(n);
        if (!std::isfinite(epoch_loss)) {
            throw TrainingError("training loss went non-finite at epoch " +
                                std::to_string(epoch) +
                                "; the learning rate is likely too high");
        }
        m.train_loss_log.push_back(epoch_loss);
        if (val_usable) {
            const auto val_scores = m.logits(x_val.data(), y_val.size());
            const double v = auroc(val_scores, y_val);
            if (v > best_val) {
                best_val = v;
                best = m;
                best.train_loss_log.clear();
            }
        }
    }
    if (val_usable) {
        best.train_loss_log = m.train_loss_log;
        return best;
    }
    return m;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw MetricError("auroc: scores and labels must align");
    }
    std::size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw MetricError("auroc: labels must be 0 or 1");
        n_pos += std::size_t(y);
    }
    const std::size_t n = scores.size();
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw MetricError("auroc is undefined with a single class");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw MetricError("auroc: non-finite score");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Average ranks across tied blocks give the 1/2 credit for tied pairs.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j);  // 1-based mean of [i+1, j]
        for (std::size_t q = i; q < j; ++q) {
            if (labels[idx[q]] == 1) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw MetricError("auprc: scores and labels must align");
    }
    std::size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw MetricError("auprc: labels must be 0 or 1");
        n_pos += std::size_t(y);
    }
    if (n_pos == 0) throw MetricError("auprc is undefined without positives");
    for (double s : scores) {
        if (!std::isfinite(s)) throw MetricError("auprc: non-finite score");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t block_tp = 0;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            block_tp += std::size_t(labels[idx[j]] == 1);
            ++j;
        }
        tp += block_tp;
        seen = j;
        if (block_tp > 0) {
            const double precision = double(tp) / double(seen);
            ap += precision * double(block_tp) / double(n_pos);
        }
        i = j;
    }
    return ap;
}

EvalMetrics evaluate(std::span<const double> scores, std::span<const int> labels) {
    return {auroc(scores, labels), auprc(scores, labels)};
}

void save_model(const PredictiveModel& m, const std::string& path) {
    json j;
    j["version"] = 1;
    j["kind"] = model_kind_name(m.kind);
    j["sequential"] = m.sequential;
    j["t"] = m.t;
    j["f"] = m.f;
    j["hidden"] = m.hidden;
    j["capabilities"] = {{"gradient_capable", m.gradient_capable},
                         {"glassbox", m.glassbox}};
    j["params"] = {{"w1", m.w1}, {"wh", m.wh}, {"b1", m.b1}, {"w2", m.w2}, {"b2", m.b2}};
    j["train_mean"] = m.train_mean;
    j["config"] = {{"learning_rate", m.config.learning_rate},
                   {"epochs", m.config.epochs},
                   {"batch_size", m.config.batch_size},
                   {"hidden", m.config.hidden},
                   {"l2", m.config.l2},
                   {"momentum", m.config.momentum},
                   {"seed", m.config.seed}};
    io::write_file_atomic(path, j.dump(2) + "\n");
}

PredictiveModel load_model(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse model checkpoint '" + path + "': " + e.what());
    }
    try {
        if (j.at("version").get<int>() != 1) {
            throw ConfigError("unsupported checkpoint version in '" + path + "'");
        }
        PredictiveModel m;
        m.kind = parse_model_kind(j.at("kind").get<std::string>());
        m.sequential = j.at("sequential").get<bool>();
        m.t = j.at("t").get<std::size_t>();
        m.f = j.at("f").get<std::size_t>();
        m.hidden = j.at("hidden").get<std::size_t>();
        m.gradient_capable = j.at("capabilities").at("gradient_capable").get<bool>();
        m.glassbox = j.at("capabilities").at("glassbox").get<bool>();
        const auto& p = j.at("params");
        m.w1 = p.at("w1").get<std::vector<double>>();
        m.wh = p.at("wh").get<std::vector<double>>();
        m.b1 = p.at("b1").get<std::vector<double>>();
        m.w2 = p.at("w2").get<std::vector<double>>();
        m.b2 = p.at("b2").get<double>();
        m.train_mean = j.at("train_mean").get<std::vector<double>>();
        const auto& c = j.at("config");
        m.config.learning_rate = c.at("learning_rate").get<double>();
        m.config.epochs = c.at("epochs").get<std::size_t>();
        m.config.batch_size = c.at("batch_size").get<std::size_t>();
        m.config.hidden = c.at("hidden").get<std::size_t>();
        m.config.l2 = c.at("l2").get<double>();
        m.config.momentum = c.at("momentum").get<double>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        for (double v : m.w1) {
            if (!std::isfinite(v)) throw ConfigError("non-finite parameter in '" + path + "'");
        }
        return m;
    } catch (const json::exception& e) {
        throw ConfigError("malformed model checkpoint '" + path + "': " + e.what());
    }
}

}  // namespace attribaudit::models
