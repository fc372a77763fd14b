#include "attribaudit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "attribaudit/attribution.hpp"
#include "attribaudit/data.hpp"
#include "attribaudit/errors.hpp"
#include "attribaudit/fairness.hpp"
#include "attribaudit/interaction.hpp"
#include "attribaudit/io.hpp"
#include "attribaudit/models.hpp"
#include "attribaudit/rng.hpp"
#include "attribaudit/roar.hpp"

namespace attribaudit::pipeline {

namespace {

constexpr const char* kUsage =
    R"(usage: attribaudit <subcommand> [--flag value ...]

subcommands:
  generate-data       --config FILE --seed N --out DIR
  preprocess          --events FILE --statics FILE [--timesteps N] --out DIR
  train               --config FILE --cohort FILE --seed N --out DIR
  attribute           --model FILE --cohort FILE --method NAME | --methods A,B
                      [--config FILE] --seed N --out DIR
  roar                --config FILE --cohort FILE --methods A,B [--model FILE]
                      --seed N --out DIR
  fairness-audit      --model FILE --cohort FILE --attributes A,B --seed N --out DIR
  interaction-report  --model FILE --cohort FILE --methods A,B --attributes A,B,C
                      [--top-k K] [--config FILE] --seed N --out DIR
  run                 --config FILE [--seed N] [--out DIR]

The seed resolves from --seed, then ATTRIB_AUDIT_SEED, then [run] seed.
)";

const std::map<std::string, std::set<std::string>>& allowed_flags() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"generate-data", {"config", "seed", "out"}},
        {"preprocess", {"events", "statics", "timesteps", "seed", "out"}},
        {"train", {"config", "cohort", "seed", "out"}},
        {"attribute", {"model", "cohort", "method", "methods", "config", "seed", "out"}},
        {"roar", {"model", "cohort", "methods", "config", "seed", "out"}},
        {"fairness-audit", {"model", "cohort", "attributes", "seed", "out"}},
        {"interaction-report",
         {"model", "cohort", "methods", "attributes", "top-k", "config", "seed", "out"}},
        {"run", {"config", "seed", "out"}},
    };
    return table;
}

// Section -> keys the pipeline reads; anything else is a loud error so typos
// cannot silently fall back to defaults.
const std::map<std::string, std::set<std::string>>& allowed_config_keys() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"run", {"seed", "out"}},
        {"generator",
         {"samples", "timesteps", "features", "informative", "missingness", "label_noise",
          "base_logit", "informative_coeff", "treatment_rate", "balanced_groups",
          "group_bias", "group_feature_effects", "treatment_bias"}},
        {"ingest", {"events", "statics", "timesteps"}},
        {"model",
         {"kind", "learning_rate", "epochs", "batch_size", "hidden", "l2", "momentum"}},
        {"attribution",
         {"methods", "baseline", "ig_steps", "n_samples", "n_permutations",
          "shapley_exhaustive", "noise_sd", "window_t", "window_f"}},
        {"roar", {"methods"}},
        {"fairness", {"attributes"}},
        {"interaction", {"methods", "attributes", "top_k"}},
    };
    return table;
}

struct Args {
    std::string subcommand;
    std::map<std::string, std::string> flags;

    bool has(const std::string& flag) const { return flags.count(flag) != 0; }
    const std::string& get(const std::string& flag) const {
        const auto it = flags.find(flag);
        if (it == flags.end()) {
            throw ConfigError(subcommand + ": flag '--" + flag + "' is required");
        }
        return it->second;
    }
    std::string get_or(const std::string& flag, const std::string& fallback) const {
        const auto it = flags.find(flag);
        return it == flags.end() ? fallback : it->second;
    }
};

Args parse_args(int argc, const char* const* argv) {
    Args args;
    args.subcommand = argv[1];
    const auto table = allowed_flags().find(args.subcommand);
    if (table == allowed_flags().end()) {
        throw ConfigError("unknown subcommand '" + args.subcommand + "'");
    }
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        if (flag.rfind("--", 0) != 0) {
            throw ConfigError(args.subcommand + ": expected a --flag, got '" + flag + "'");
        }
        flag = flag.substr(2);
        if (table->second.count(flag) == 0) {
            throw ConfigError(args.subcommand + ": unknown flag '--" + flag + "'");
        }
        if (i + 1 >= argc) {
            throw ConfigError(args.subcommand + ": flag '--" + flag + "' needs a value");
        }
        if (!args.flags.emplace(flag, argv[++i]).second) {
            throw ConfigError(args.subcommand + ": duplicate flag '--" + flag + "'");
        }
    }
    return args;
}

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
    const long long v = io::parse_int(text, what);
    if (v < 0) throw ConfigError(what + ": seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

// Precedence: --seed flag, then ATTRIB_AUDIT_SEED, then [run] seed.
std::optional<std::uint64_t> seed_override(const Args& args) {
    if (args.has("seed")) return parse_seed(args.get("seed"), "--seed");
    if (const char* env = std::getenv("ATTRIB_AUDIT_SEED")) {
        return parse_seed(env, "ATTRIB_AUDIT_SEED");
    }
    return std::nullopt;
}

std::uint64_t resolve_seed(const Args& args, const io::Config* cfg) {
    if (const auto s = seed_override(args)) return *s;
    if (cfg != nullptr && cfg->has("run", "seed")) {
        return parse_seed(cfg->get("run", "seed"), "[run] seed");
    }
    throw ConfigError("no seed given: use --seed, ATTRIB_AUDIT_SEED, or [run] seed");
}

std::string resolve_out(const Args& args, const io::Config* cfg) {
    if (args.has("out")) return args.get("out");
    if (cfg != nullptr && cfg->has("run", "out")) return cfg->get("run", "out");
    throw ConfigError("no output directory given: use --out or [run] out");
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string hex_hash(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> gather_rows(const std::vector<double>& xs, std::size_t d,
                                const std::vector<std::size_t>& indices) {
    std::vector<double> out;
    out.reserve(indices.size() * d);
    for (std::size_t i : indices) {
        out.insert(out.end(), xs.begin() + long(i * d), xs.begin() + long((i + 1) * d));
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& y,
                               const std::vector<std::size_t>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(y[i]);
    return out;
}

std::vector<std::string> gather_ids(const std::vector<data::StaticRecord>& statics,
                                    const std::vector<std::size_t>& indices) {
    std::vector<std::string> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(statics[i].stay_id);
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
}

// Representation follows the model kind: recurrent consumes the t x f grid,
// linear and feedforward consume the min/max/mean tabular summary.
struct ModelInputs {
    bool sequential = true;
    std::size_t t = 1, f = 0;
    const std::vector<double>* cohort_x = nullptr;
    data::TabularSummary tab;
    std::vector<std::string> names;  // feature-axis labels, length f

    const std::vector<double>& rows() const { return sequential ? *cohort_x : tab.xs; }
    std::size_t dim() const { return t * f; }
};

ModelInputs inputs_for_kind(const data::Cohort& cohort, models::ModelKind kind) {
    ModelInputs in;
    if (kind == models::ModelKind::recurrent) {
        in.sequential = true;
        in.t = cohort.t;
        in.f = cohort.f;
        in.cohort_x = &cohort.x;
        in.names = cohort.feature_names;
    } else {
        in.tab = data::summarize_tabular(cohort);
        in.sequential = false;
        in.t = 1;
        in.f = in.tab.f;
        in.names = in.tab.column_names;
    }
    return in;
}

ModelInputs inputs_for_model(const data::Cohort& cohort, const models::PredictiveModel& m) {
    ModelInputs in = inputs_for_kind(cohort, m.kind);
    if (in.t != m.t || in.f != m.f) {
        throw ConfigError("model input shape " + io::format_int(long(m.t)) + "x" +
                          io::format_int(long(m.f)) + " does not match the cohort's " +
                          io::format_int(long(in.t)) + "x" + io::format_int(long(in.f)));
    }
    return in;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& part : io::split(text, ',')) {
        std::string item(io::trim(part));
        if (!item.empty()) out.push_back(std::move(item));
    }
    return out;
}

std::vector<std::string> method_list(const Args& args) {
    std::vector<std::string> out;
    if (args.has("method")) out.push_back(args.get("method"));
    if (args.has("methods")) {
        for (auto& m : split_list(args.get("methods"))) {
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(std::move(m));
        }
    }
    if (out.empty()) {
        throw ConfigError(args.subcommand + ": give --method or --methods");
    }
    return out;
}

void check_methods(const std::vector<std::string>& methods, const std::string& context,
                   bool allow_oracle) {
    if (methods.empty()) throw ConfigError(context + ": at least one method is required");
    for (const auto& m : methods) {
        if (allow_oracle && m == "oracle") continue;
        if (!attribution::is_known_method(m)) {
            throw ConfigError(context + ": unknown method '" + m + "'");
        }
    }
}

void check_attributes(const std::vector<std::string>& attrs, const std::string& context) {
    if (attrs.empty()) throw ConfigError(context + ": at least one attribute is required");
    const auto& known = data::attribute_names();
    for (const auto& a : attrs) {
        if (std::find(known.begin(), known.end(), a) == known.end()) {
            throw ConfigError(context + ": unknown attribute '" + a + "'");
        }
    }
}

// ---- stage bodies -----------------------------------------------------------

data::Cohort make_cohort(const io::Config& cfg, std::uint64_t seed) {
    if (cfg.has_section("generator")) {
        return data::generate_synthetic_cohort(data::GeneratorSpec::from_config(cfg), seed);
    }
    const std::string events = cfg.get("ingest", "events");
    const std::string statics = cfg.get("ingest", "statics");
    const long long t = cfg.get_int_or("ingest", "timesteps", 24);
    if (t <= 0) throw ConfigError("[ingest] timesteps: must be positive");
    return data::load_cohort(events, statics, static_cast<std::size_t>(t));
}

models::PredictiveModel train_model(const io::Config& cfg, const data::Cohort& cohort,
                                    const ModelInputs& in, const data::SplitIndices& sp,
                                    std::uint64_t seed) {
    const auto kind = models::parse_model_kind(cfg.get("model", "kind"));
    models::TrainConfig tc = models::TrainConfig::from_config(cfg, "model");
    tc.seed = seed;
    const auto x_train = gather_rows(in.rows(), in.dim(), sp.train);
    const auto y_train = gather_labels(cohort.y, sp.train);
    const auto x_val = gather_rows(in.rows(), in.dim(), sp.val);
    const auto y_val = gather_labels(cohort.y, sp.val);
    return models::train(kind, in.sequential, in.t, in.f, x_train, y_train, x_val, y_val,
                         tc);
}

void write_metrics_csv(const std::string& path, const models::PredictiveModel& m,
                       const ModelInputs& in, const data::Cohort& cohort,
                       const data::SplitIndices& sp) {
    io::CsvWriter w({"split", "auroc", "auprc"});
    const std::vector<std::pair<std::string, const std::vector<std::size_t>*>> parts = {
        {"train", &sp.train}, {"val", &sp.val}, {"test", &sp.test}};
    for (const auto& [name, indices] : parts) {
        if (indices->empty()) continue;
        const auto x = gather_rows(in.rows(), in.dim(), *indices);
        const auto y = gather_labels(cohort.y, *indices);
        const auto scores = m.logits(x.data(), indices->size());
        const auto metrics = models::evaluate(scores, y);
        w.add_row({name, io::format_double(metrics.auroc), io::format_double(metrics.auprc)});
    }
    w.write(path);
}

std::vector<std::string> run_attribute(const io::Config& cfg,
                                       const models::PredictiveModel& model,
                                       const ModelInputs& in, const data::Cohort& cohort,
                                       const data::SplitIndices& sp,
                                       const std::vector<std::string>& methods,
                                       std::uint64_t seed, const std::string& out_dir) {
    const auto x_test = gather_rows(in.rows(), in.dim(), sp.test);
    const auto ids = gather_ids(cohort.statics, sp.test);
    std::vector<std::string> files;
    for (const auto& method : methods) {
        const auto mc = attribution::MethodConfig::from_config(cfg, method);
        const auto results = attribution::attribute_batch(
            model, x_test.data(), sp.test.size(), ids, mc, derive_seed(seed, method));
        const std::string name = "attributions_" + method + ".csv";
        attribution::write_attribution_csv(join(out_dir, name), results, in.names);
        files.push_back(name);
    }
    return files;
}

std::vector<std::string> run_roar(const io::Config& cfg,
                                  const models::PredictiveModel* model,
                                  const ModelInputs& in, const data::Cohort& cohort,
                                  const data::SplitIndices& sp,
                                  const std::vector<std::string>& methods,
                                  std::uint64_t seed, const std::string& out_dir) {
    const auto kind = models::parse_model_kind(cfg.get("model", "kind"));
    models::TrainConfig tc = models::TrainConfig::from_config(cfg, "model");
    roar::RoarInput base;
    base.kind = kind;
    base.sequential = in.sequential;
    base.t = in.t;
    base.f = in.f;
    base.xs = &in.rows();
    base.y = &cohort.y;
    base.splits = sp;
    base.replacement = in.sequential ? roar::sequential_replacement(cohort, sp.train)
                                     : roar::tabular_replacement(in.tab, sp.train);
    const auto all_ids = gather_ids(cohort.statics, all_indices(cohort.n));
    std::vector<roar::DegradationCurve> curves;
    std::vector<std::string> files;
    for (const auto& method : methods) {
        const std::uint64_t method_seed = derive_seed(seed, method);
        roar::RoarInput input = base;
        input.method = method;
        if (method == "oracle") {
            const auto cells = in.sequential ? roar::oracle_cells_sequential(cohort)
                                             : roar::oracle_cells_tabular(cohort, in.tab);
            input.rankings.assign(cohort.n, cells);
        } else {
            if (model == nullptr) {
                throw ConfigError("method '" + method + "' needs a trained model");
            }
            const auto mc = attribution::MethodConfig::from_config(cfg, method);
            const auto results =
                attribution::attribute_batch(*model, in.rows().data(), cohort.n, all_ids,
                                             mc, derive_seed(method_seed, "rankings"));
            input.rankings.reserve(cohort.n);
            for (const auto& r : results) input.rankings.push_back(roar::rank_cells(r));
        }
        curves.push_back(roar::roar_curve(input, tc, method_seed));
        const std::string name = "roar_" + method + ".csv";
        roar::write_curve_csv(join(out_dir, name), curves.back());
        files.push_back(name);
    }
    roar::write_summary_csv(join(out_dir, "roar_summary.csv"), curves);
    files.push_back("roar_summary.csv");
    return files;
}

struct AuditOutputs {
    std::vector<fairness::FairnessReport> reports;
    std::vector<fairness::TreatmentCell> cells;
};

AuditOutputs compute_audit(const data::Cohort& cohort, const models::PredictiveModel& m,
                           const ModelInputs& in, const data::SplitIndices& sp,
                           const std::vector<std::string>& attributes) {
    const auto x_test = gather_rows(in.rows(), in.dim(), sp.test);
    const auto scores = m.logits(x_test.data(), sp.test.size());
    const auto y_test = gather_labels(cohort.y, sp.test);
    AuditOutputs out;
    for (const auto& attr : attributes) {
        const auto grouping = fairness::stratify(cohort.statics, attr);
        std::vector<std::string> test_labels;
        test_labels.reserve(sp.test.size());
        for (std::size_t i : sp.test) test_labels.push_back(grouping.labels[i]);
        std::map<std::string, std::size_t> train_counts;
        for (std::size_t i : sp.train) train_counts[grouping.labels[i]] += 1;
        out.reports.push_back(
            fairness::group_auc_report(scores, y_test, test_labels, train_counts, attr));
        const auto cells = fairness::treatment_disparity(cohort.statics, grouping);
        out.cells.insert(out.cells.end(), cells.begin(), cells.end());
    }
    return out;
}

std::optional<fairness::Correlation> group_correlation(
    const std::vector<fairness::FairnessReport>& reports) {
    std::vector<double> mortality, aucs;
    for (const auto& rep : reports) {
        for (const auto& g : rep.groups) {
            if (g.degenerate) continue;
            mortality.push_back(g.mortality_rate);
            aucs.push_back(g.auroc);
        }
    }
    if (mortality.size() < 3) return std::nullopt;
    try {
        return fairness::mortality_auc_correlation(mortality, aucs);
    } catch (const MetricError&) {
        return std::nullopt;  // zero variance leaves the correlation undefined
    }
}

std::vector<std::string> write_fairness_files(const AuditOutputs& audit, bool pooled,
                                              const std::string& out_dir) {
    std::vector<std::string> files;
    for (const auto& rep : audit.reports) {
        const auto corr = group_correlation({rep});
        const std::string name = "fairness_" + rep.attribute + ".json";
        fairness::write_fairness_json(join(out_dir, name), {rep},
                                      corr ? &*corr : nullptr);
        files.push_back(name);
    }
    if (pooled) {
        const auto corr = group_correlation(audit.reports);
        fairness::write_fairness_json(join(out_dir, "fairness.json"), audit.reports,
                                      corr ? &*corr : nullptr);
        files.push_back("fairness.json");
    }
    fairness::write_treatment_csv(join(out_dir, "treatment.csv"), audit.cells);
    files.push_back("treatment.csv");
    return files;
}

std::vector<std::string> run_interaction(
    const io::Config& cfg, const models::PredictiveModel& model, const ModelInputs& in,
    const data::Cohort& cohort, const data::SplitIndices& sp,
    const std::vector<std::string>& methods, const std::vector<std::string>& attributes,
    std::size_t top_k, std::uint64_t seed, const std::string& out_dir) {
    if (top_k == 0 || top_k > in.f) {
        throw ConfigError("[interaction] top_k: must be in 1.." + io::format_int(long(in.f)));
    }
    const auto x_test = gather_rows(in.rows(), in.dim(), sp.test);
    const auto ids = gather_ids(cohort.statics, sp.test);
    std::vector<std::string> files;
    std::vector<std::vector<std::size_t>> orders;
    std::vector<attribution::AttributionResult> primary;
    for (const auto& method : methods) {
        const auto mc = attribution::MethodConfig::from_config(cfg, method);
        auto results = attribution::attribute_batch(model, x_test.data(), sp.test.size(),
                                                    ids, mc, derive_seed(seed, method));
        const auto ranking = interaction::global_rank_aggregate(results);
        const std::string name = "global_ranking_" + method + ".csv";
        interaction::write_global_ranking_csv(join(out_dir, name), ranking, in.names);
        files.push_back(name);
        orders.push_back(ranking.order);
        if (method == methods.front()) primary = std::move(results);
    }
    if (methods.size() >= 2) {
        interaction::write_jaccard_matrix_csv(join(out_dir, "jaccard_topk.csv"), methods,
                                              orders, top_k);
        files.push_back("jaccard_topk.csv");
    }

    // Group statistics use the first configured method.
    std::vector<interaction::GroupImportanceRow> group_rows;
    for (const auto& attr : attributes) {
        const auto grouping = fairness::stratify(cohort.statics, attr);
        fairness::ProtectedGrouping test_grouping;
        test_grouping.attribute = attr;
        test_grouping.labels.reserve(sp.test.size());
        for (std::size_t i : sp.test) test_grouping.labels.push_back(grouping.labels[i]);
        const auto rows = interaction::group_feature_importance(primary, test_grouping);
        group_rows.insert(group_rows.end(), rows.begin(), rows.end());
    }
    interaction::write_group_importance_csv(join(out_dir, "group_importance.csv"),
                                            group_rows, in.names);
    files.push_back("group_importance.csv");

    if (attributes.size() >= 3) {
        const auto audit = compute_audit(cohort, model, in, sp, attributes);
        std::vector<interaction::ImportanceFairnessRow> rows;
        for (std::size_t a = 0; a < attributes.size(); ++a) {
            const auto it = std::find(in.names.begin(), in.names.end(), attributes[a]);
            if (it == in.names.end()) {
                throw ConfigError("[interaction] attributes: no feature encodes '" +
                                  attributes[a] + "'");
            }
            const std::size_t idx = static_cast<std::size_t>(it - in.names.begin());
            double total = 0.0;
            for (const auto& r : primary) total += interaction::timestep_mean_abs(r)[idx];
            rows.push_back({attributes[a], total / double(primary.size()),
                            audit.reports[a].auc_min});
        }
        try {
            const auto table = interaction::importance_vs_fairness(rows);
            interaction::write_importance_fairness_csv(
                join(out_dir, "importance_fairness.csv"), table);
            files.push_back("importance_fairness.csv");
        } catch (const MetricError& e) {
            std::cerr << "warning: skipping importance_fairness.csv: " << e.what() << "\n";
        }
    }
    return files;
}

// ---- full pipeline ----------------------------------------------------------

void check_config_keys(const io::Config& cfg) {
    for (const auto& [section, keys] : cfg.sections()) {
        const auto it = allowed_config_keys().find(section);
        if (it == allowed_config_keys().end()) {
            throw ConfigError(cfg.origin() + ": unknown section [" + section + "]");
        }
        for (const auto& kv : keys) {
            if (it->second.count(kv.first) == 0) {
                throw ConfigError(cfg.origin() + ": unknown key '" + kv.first +
                                  "' in section [" + section + "]");
            }
        }
    }
}

void check_config(const io::Config& cfg, bool have_seed, bool have_out) {
    check_config_keys(cfg);
    if (!have_seed && !cfg.has("run", "seed")) {
        throw ConfigError("[run] seed: required (or pass --seed / ATTRIB_AUDIT_SEED)");
    }
    if (!have_out && !cfg.has("run", "out")) {
        throw ConfigError("[run] out: required (or pass --out)");
    }
    const bool generator = cfg.has_section("generator");
    const bool ingest = cfg.has_section("ingest");
    if (generator == ingest) {
        throw ConfigError("config needs exactly one of [generator] or [ingest]");
    }
    if (generator) data::GeneratorSpec::from_config(cfg);

    const bool has_model = cfg.has_section("model");
    models::ModelKind kind = models::ModelKind::linear;
    if (has_model) {
        kind = models::parse_model_kind(cfg.get("model", "kind"));
        models::TrainConfig::from_config(cfg, "model");
    }
    auto needs_model = [&](const std::string& section) {
        if (!has_model) {
            throw ConfigError("[" + section + "] needs a [model] section");
        }
    };
    auto check_glassbox = [&](const std::vector<std::string>& methods,
                              const std::string& context) {
        if (kind != models::ModelKind::linear &&
            std::find(methods.begin(), methods.end(), "glassbox") != methods.end()) {
            throw ConfigError(context + ": glassbox needs a linear model");
        }
    };
    if (cfg.has("attribution", "methods")) {
        needs_model("attribution");
        const auto methods = cfg.get_list("attribution", "methods");
        check_methods(methods, "[attribution] methods", false);
        check_glassbox(methods, "[attribution] methods");
    }
    if (cfg.has_section("roar")) {
        needs_model("roar");
        const auto methods = cfg.get_list("roar", "methods");
        check_methods(methods, "[roar] methods", true);
        check_glassbox(methods, "[roar] methods");
    }
    if (cfg.has_section("fairness")) {
        needs_model("fairness");
        check_attributes(cfg.get_list("fairness", "attributes"), "[fairness] attributes");
    }
    if (cfg.has_section("interaction")) {
        needs_model("interaction");
        if (!cfg.has("interaction", "methods") && !cfg.has("attribution", "methods")) {
            throw ConfigError(
                "[interaction] methods: required when [attribution] methods is absent");
        }
        const auto methods = cfg.has("interaction", "methods")
                                 ? cfg.get_list("interaction", "methods")
                                 : cfg.get_list("attribution", "methods");
        check_methods(methods, "[interaction] methods", false);
        check_glassbox(methods, "[interaction] methods");
        if (cfg.has("interaction", "attributes")) {
            check_attributes(cfg.get_list("interaction", "attributes"),
                             "[interaction] attributes");
        }
        if (cfg.has("interaction", "top_k") && cfg.get_int("interaction", "top_k") < 1) {
            throw ConfigError("[interaction] top_k: must be at least 1");
        }
    }
}

}  // namespace

RunManifest run_pipeline(const std::string& config_path, const std::string& out_override,
                         std::optional<std::uint64_t> seed_override) {
    const io::Config cfg = io::Config::parse_file(config_path);
    check_config(cfg, seed_override.has_value(), !out_override.empty());

    RunManifest manifest;
    manifest.config_hash = hex_hash(cfg.hash());
    manifest.global_seed = seed_override
                               ? *seed_override
                               : parse_seed(cfg.get("run", "seed"), "[run] seed");
    manifest.split_seed = derive_seed(manifest.global_seed, "split");
    manifest.out_dir =
        out_override.empty() ? cfg.get("run", "out") : out_override;
    ensure_dir(manifest.out_dir);
    const std::string& out = manifest.out_dir;

    auto stage = [&](const std::string& name, std::uint64_t seed, auto&& body) {
        const auto start = std::chrono::steady_clock::now();
        StageRecord rec;
        rec.name = name;
        rec.seed = seed;
        try {
            rec.outputs = body();
        } catch (const ConfigError& e) {
            throw ConfigError("stage " + name + ": " + e.what());
        } catch (const Error& e) {
            throw Error("stage " + name + ": " + e.what());
        }
        rec.wall_seconds = seconds_since(start);
        std::cout << "stage " << name << ": " << rec.outputs.size() << " file(s), "
                  << io::format_double(rec.wall_seconds) << "s\n";
        manifest.stages.push_back(std::move(rec));
    };

    const std::string data_stage = cfg.has_section("generator") ? "generate" : "ingest";
    const std::uint64_t data_seed = derive_seed(manifest.global_seed, data_stage);
    data::Cohort cohort;
    stage(data_stage, data_seed, [&] {
        cohort = make_cohort(cfg, data_seed);
        data::save_cohort(cohort, join(out, "cohort.bin"));
        return std::vector<std::string>{"cohort.bin"};
    });
    const data::SplitIndices sp = data::split(cohort.n, manifest.split_seed);

    models::PredictiveModel model;
    ModelInputs in;
    if (cfg.has_section("model")) {
        const std::uint64_t train_seed = derive_seed(manifest.global_seed, "train");
        stage("train", train_seed, [&] {
            in = inputs_for_kind(cohort,
                                 models::parse_model_kind(cfg.get("model", "kind")));
            model = train_model(cfg, cohort, in, sp, train_seed);
            models::save_model(model, join(out, "model.json"));
            return std::vector<std::string>{"model.json"};
        });
        stage("evaluate", derive_seed(manifest.global_seed, "evaluate"), [&] {
            write_metrics_csv(join(out, "metrics.csv"), model, in, cohort, sp);
            return std::vector<std::string>{"metrics.csv"};
        });
    }
    if (cfg.has("attribution", "methods")) {
        const std::uint64_t seed = derive_seed(manifest.global_seed, "attribute");
        stage("attribute", seed, [&] {
            return run_attribute(cfg, model, in, cohort, sp,
                                 cfg.get_list("attribution", "methods"), seed, out);
        });
    }
    if (cfg.has_section("roar")) {
        const std::uint64_t seed = derive_seed(manifest.global_seed, "roar");
        stage("roar", seed, [&] {
            return run_roar(cfg, &model, in, cohort, sp, cfg.get_list("roar", "methods"),
                            seed, out);
        });
    }
    AuditOutputs audit;
    if (cfg.has_section("fairness")) {
        const std::uint64_t seed = derive_seed(manifest.global_seed, "fairness");
        stage("fairness", seed, [&] {
            audit = compute_audit(cohort, model, in, sp,
                                  cfg.get_list("fairness", "attributes"));
            return write_fairness_files(audit, true, out);
        });
    }
    if (cfg.has_section("interaction")) {
        const std::uint64_t seed = derive_seed(manifest.global_seed, "interaction");
        stage("interaction", seed, [&] {
            const auto methods = cfg.has("interaction", "methods")
                                     ? cfg.get_list("interaction", "methods")
                                     : cfg.get_list("attribution", "methods");
            std::vector<std::string> attributes;
            if (cfg.has("interaction", "attributes")) {
                attributes = cfg.get_list("interaction", "attributes");
            } else if (cfg.has("fairness", "attributes")) {
                attributes = cfg.get_list("fairness", "attributes");
            } else {
                attributes = data::attribute_names();
            }
            const long long k =
                cfg.get_int_or("interaction", "top_k", long(std::min<std::size_t>(10, in.f)));
            return run_interaction(cfg, model, in, cohort, sp, methods, attributes,
                                   static_cast<std::size_t>(k), seed, out);
        });
    }

    write_manifest_json(join(out, "manifest.json"), manifest);
    std::cout << "wrote " << join(out, "manifest.json") << "\n";
    return manifest;
}

void write_manifest_json(const std::string& path, const RunManifest& manifest) {
    nlohmann::json j;
    j["manifest_version"] = 1;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = manifest.config_hash;
    j["global_seed"] = manifest.global_seed;
    j["split_seed"] = manifest.split_seed;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : manifest.stages) {
        j["stages"].push_back({{"name", s.name},
                               {"seed", s.seed},
                               {"wall_seconds", s.wall_seconds},
                               {"outputs", s.outputs}});
    }
    io::write_file_atomic(path, j.dump(2) + "\n");
}

namespace {

int dispatch(int argc, const char* const* argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 1;
    }
    const std::string first = argv[1];
    if (first == "--help" || first == "-h" || first == "help") {
        std::cout << kUsage;
        return 0;
    }
    const Args args = parse_args(argc, argv);
    std::vector<std::string> files;
    std::string out;

    if (args.subcommand == "run") {
        run_pipeline(args.get("config"), args.get_or("out", ""), seed_override(args));
        return 0;
    }
    if (args.subcommand == "generate-data") {
        const io::Config cfg = io::Config::parse_file(args.get("config"));
        check_config_keys(cfg);
        if (!cfg.has_section("generator")) {
            throw ConfigError("generate-data: config has no [generator] section");
        }
        const auto spec = data::GeneratorSpec::from_config(cfg);
        const std::uint64_t seed = resolve_seed(args, &cfg);
        out = resolve_out(args, &cfg);
        ensure_dir(out);
        const auto cohort =
            data::generate_synthetic_cohort(spec, derive_seed(seed, "generate"));
        data::save_cohort(cohort, join(out, "cohort.bin"));
        data::export_cohort_csv(cohort, join(out, "events.csv"), join(out, "static.csv"));
        files = {"cohort.bin", "events.csv", "static.csv"};
    } else if (args.subcommand == "preprocess") {
        const long long t =
            args.has("timesteps") ? io::parse_int(args.get("timesteps"), "--timesteps") : 24;
        if (t <= 0) throw ConfigError("--timesteps: must be positive");
        const auto cohort = data::load_cohort(args.get("events"), args.get("statics"),
                                              static_cast<std::size_t>(t));
        std::cout << "kept " << cohort.n << " stays after inclusion filtering ("
                  << cohort.temporal_features << " temporal features, " << cohort.t
                  << " timesteps)\n";
        out = resolve_out(args, nullptr);
        ensure_dir(out);
        data::save_cohort(cohort, join(out, "cohort.bin"));
        files = {"cohort.bin"};
    } else if (args.subcommand == "train") {
        const io::Config cfg = io::Config::parse_file(args.get("config"));
        check_config_keys(cfg);
        const auto cohort = data::load_cohort_binary(args.get("cohort"));
        const std::uint64_t seed = resolve_seed(args, &cfg);
        out = resolve_out(args, &cfg);
        ensure_dir(out);
        const auto sp = data::split(cohort.n, derive_seed(seed, "split"));
        const auto in =
            inputs_for_kind(cohort, models::parse_model_kind(cfg.get("model", "kind")));
        const auto model = train_model(cfg, cohort, in, sp, derive_seed(seed, "train"));
        models::save_model(model, join(out, "model.json"));
        write_metrics_csv(join(out, "metrics.csv"), model, in, cohort, sp);
        files = {"model.json", "metrics.csv"};
    } else if (args.subcommand == "attribute") {
        const auto model = models::load_model(args.get("model"));
        const auto cohort = data::load_cohort_binary(args.get("cohort"));
        const io::Config cfg = args.has("config")
                                   ? io::Config::parse_file(args.get("config"))
                                   : io::Config::parse_string("", "defaults");
        if (args.has("config")) check_config_keys(cfg);
        const auto methods = method_list(args);
        check_methods(methods, "--methods", false);
        const std::uint64_t seed = resolve_seed(args, args.has("config") ? &cfg : nullptr);
        out = resolve_out(args, args.has("config") ? &cfg : nullptr);
        ensure_dir(out);
        const auto sp = data::split(cohort.n, derive_seed(seed, "split"));
        const auto in = inputs_for_model(cohort, model);
        files = run_attribute(cfg, model, in, cohort, sp, methods,
                              derive_seed(seed, "attribute"), out);
    } else if (args.subcommand == "roar") {
        const io::Config cfg = io::Config::parse_file(args.get("config"));
        check_config_keys(cfg);
        const auto cohort = data::load_cohort_binary(args.get("cohort"));
        const auto methods = split_list(args.get("methods"));
        check_methods(methods, "--methods", true);
        models::PredictiveModel model;
        const bool has_model = args.has("model");
        if (has_model) model = models::load_model(args.get("model"));
        const std::uint64_t seed = resolve_seed(args, &cfg);
        out = resolve_out(args, &cfg);
        ensure_dir(out);
        const auto sp = data::split(cohort.n, derive_seed(seed, "split"));
        const auto in =
            inputs_for_kind(cohort, models::parse_model_kind(cfg.get("model", "kind")));
        if (has_model && (model.t != in.t || model.f != in.f)) {
            throw ConfigError("--model: input shape does not match the cohort");
        }
        files = run_roar(cfg, has_model ? &model : nullptr, in, cohort, sp, methods,
                         derive_seed(seed, "roar"), out);
    } else if (args.subcommand == "fairness-audit") {
        const auto model = models::load_model(args.get("model"));
        const auto cohort = data::load_cohort_binary(args.get("cohort"));
        const auto attributes = split_list(args.get("attributes"));
        check_attributes(attributes, "--attributes");
        const std::uint64_t seed = resolve_seed(args, nullptr);
        out = resolve_out(args, nullptr);
        ensure_dir(out);
        const auto sp = data::split(cohort.n, derive_seed(seed, "split"));
        const auto in = inputs_for_model(cohort, model);
        const auto audit = compute_audit(cohort, model, in, sp, attributes);
        files = write_fairness_files(audit, false, out);
    } else if (args.subcommand == "interaction-report") {
        const auto model = models::load_model(args.get("model"));
        const auto cohort = data::load_cohort_binary(args.get("cohort"));
        const io::Config cfg = args.has("config")
                                   ? io::Config::parse_file(args.get("config"))
                                   : io::Config::parse_string("", "defaults");
        if (args.has("config")) check_config_keys(cfg);
        const auto methods = split_list(args.get("methods"));
        check_methods(methods, "--methods", false);
        const auto attributes = split_list(args.get("attributes"));
        check_attributes(attributes, "--attributes");
        const std::uint64_t seed = resolve_seed(args, args.has("config") ? &cfg : nullptr);
        out = resolve_out(args, args.has("config") ? &cfg : nullptr);
        ensure_dir(out);
        const auto sp = data::split(cohort.n, derive_seed(seed, "split"));
        const auto in = inputs_for_model(cohort, model);
        const long long k = args.has("top-k")
                                ? io::parse_int(args.get("top-k"), "--top-k")
                                : long(std::min<std::size_t>(10, in.f));
        if (k < 1) throw ConfigError("--top-k: must be at least 1");
        files = run_interaction(cfg, model, in, cohort, sp, methods, attributes,
                                static_cast<std::size_t>(k),
                                derive_seed(seed, "interaction"), out);
    } else {
        throw ConfigError("unknown subcommand '" + args.subcommand + "'");
    }

    for (const auto& f : files) std::cout << "wrote " << join(out, f) << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace attribaudit::pipeline
