#include "patchproto/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "patchproto/classifier.hpp"
#include "patchproto/embedding_store.hpp"
#include "patchproto/errors.hpp"
#include "patchproto/evaluation.hpp"
#include "patchproto/memory_bank.hpp"
#include "patchproto/parallel.hpp"
#include "patchproto/scoring.hpp"
#include "patchproto/selection.hpp"

namespace patchproto {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Raised for semantically invalid flag combinations found after parsing.
struct UsageError : Error {
    using Error::Error;
};

struct Options {
    std::string manifest;
    std::string bank;
    std::string out;
    std::string dump;
    double gamma = 0.9;
    std::size_t m_max = 32;
    std::size_t knn_k = 1;
    double coreset_fraction = 0.1;
    double temperature = 1.0;
    std::size_t shots = 1;
    std::size_t episodes = 100;
    std::size_t queries_per_class = 0;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    bool renorm_weights = false;
    bool baseline = false;
    std::vector<double> gammas;
    std::vector<std::string> support;
    std::vector<std::string> query;
    std::string sample;
};

PipelineConfig pipeline_from(const Options& o) {
    PipelineConfig p;
    p.selection = {o.gamma, o.m_max};
    p.knn_k = o.knn_k;
    p.temperature = o.temperature;
    p.renormalize_weights = o.renorm_weights;
    p.baseline = o.baseline;
    return p;
}

unsigned workers_from(const Options& o) {
    return o.workers > 0 ? o.workers : default_workers();
}

// Result documents are written whole through a temporary file, so a failing
// command never leaves partial output behind.
void emit(const std::string& document, const Options& o, std::ostream& out) {
    if (o.out.empty()) {
        out << document << '\n';
        return;
    }
    const fs::path target(o.out);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::trunc);
        if (!file) throw IoError("cannot open '" + tmp.string() + "' for writing");
        file << document << '\n';
        if (!file) throw IoError("write failed for '" + target.string() + "'");
    }
    fs::rename(tmp, target);
}

void check_bank_matches(const MemoryBank& bank, const DatasetManifest& manifest) {
    const GridShape shape = audit_dimensions(manifest);
    if (shape.channels != bank.channels()) {
        throw ValidationError("bank has " + std::to_string(bank.channels()) +
                              " channels, manifest grids have " + std::to_string(shape.channels));
    }
}

int cmd_build_bank(const Options& o, std::ostream& out, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(o.manifest);
    BankBuilder builder;
    const auto normals = manifest.normals();
    for (const SampleRecord* s : normals) {
        builder.add(read_embedding_file(manifest.resolve(*s)));
    }
    MemoryBank bank = std::move(builder).finish();
    err << "ingested " << bank.size() << " normal patches from " << normals.size() << " samples\n";
    if (o.coreset_fraction < 1.0) {
        bank = coreset_subsample(bank, o.coreset_fraction, o.seed, workers_from(o));
        err << "coreset kept " << bank.size() << " vectors (fraction " << o.coreset_fraction << ")\n";
    }
    save_bank(bank, o.out);

    ordered_json j;
    j["bank"] = o.out;
    j["size"] = bank.size();
    j["channels"] = bank.channels();
    j["source_count"] = bank.source_count();
    j["coreset_fraction"] = bank.coreset_fraction();
    out << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(o.manifest);
    const MemoryBank bank = load_bank(o.bank);
    check_bank_matches(bank, manifest);
    const EmbeddingGrid grid = ManifestFeatureProvider(manifest).load(o.sample);
    const ScoreMap map = softmax_normalize(score_grid(grid, bank, o.knn_k), o.temperature);
    if (!o.dump.empty()) {
        write_score_map(map, o.dump);
        err << "score map written to " << o.dump << '\n';
    }
    const auto top = rank_patches(map, 1).front();

    ordered_json j;
    j["sample_id"] = o.sample;
    j["height"] = map.height;
    j["width"] = map.width;
    j["knn_k"] = o.knn_k;
    j["temperature"] = o.temperature;
    j["top_patch"] = {{"row", top / map.width}, {"col", top % map.width}, {"raw", map.raw[top]},
                      {"normalized", map.normalized[top]}};
    j["raw"] = map.raw;
    j["normalized"] = map.normalized;
    emit(j.dump(2), o, out);
    return kExitOk;
}

int cmd_classify(const Options& o, std::ostream& out, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(o.manifest);
    const MemoryBank bank = load_bank(o.bank);
    check_bank_matches(bank, manifest);
    const ManifestFeatureProvider provider(manifest);
    const PipelineConfig config = pipeline_from(o);

    auto class_of = [&](const std::string& id) -> std::optional<int> {
        const SampleRecord* s = manifest.find(id);
        if (!s) throw UsageError("unknown sample_id '" + id + "'");
        return s->class_id;
    };

    auto select = [&](const EmbeddingGrid& grid) {
        const ScoreMap map = softmax_normalize(score_grid(grid, bank, o.knn_k), o.temperature);
        return select_anomaly_embeddings(grid, map, config.selection);
    };

    std::vector<LabeledSelection> support;
    std::vector<LabeledVector> pooled;
    for (const auto& id : o.support) {
        const auto cls = class_of(id);
        if (!cls) throw UsageError("support sample '" + id + "' has no class_id");
        const EmbeddingGrid grid = provider.load(id);
        if (config.baseline) {
            pooled.push_back({mean_pool(grid), *cls});
        } else {
            support.push_back({select(grid), *cls});
        }
    }
    const auto protos = build_prototypes(support);

    ordered_json predictions = ordered_json::array();
    for (const auto& id : o.query) {
        const auto truth = class_of(id);
        const EmbeddingGrid grid = provider.load(id);
        ClassificationResult r;
        std::size_t selected = 0;
        if (config.baseline) {
            r = baseline_classify_pooled(pooled, mean_pool(grid));
        } else {
            const auto query = select(grid);
            selected = query.size();
            r = classify(query, protos, {config.renormalize_weights});
        }
        ordered_json p;
        p["sample_id"] = id;
        p["true_class"] = truth ? ordered_json(*truth) : ordered_json(nullptr);
        p["predicted_class"] = r.predicted_class;
        if (!config.baseline) p["selected_patches"] = selected;
        ordered_json distances = ordered_json::array();
        for (const auto& [cls, d] : r.distances) distances.push_back({{"class_id", cls}, {"distance", d}});
        p["distances"] = std::move(distances);
        predictions.push_back(std::move(p));
        err << id << " -> class " << r.predicted_class << '\n';
    }
    ordered_json j;
    j["method"] = config.baseline ? "prototype_baseline" : "patchproto";
    j["predictions"] = std::move(predictions);
    emit(j.dump(2), o, out);
    return kExitOk;
}

EvalConfig eval_config_from(const Options& o) {
    EvalConfig c;
    c.pipeline = pipeline_from(o);
    c.shots = o.shots;
    c.episodes = o.episodes;
    c.seed = o.seed;
    c.queries_per_class = o.queries_per_class;
    c.workers = workers_from(o);
    return c;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(o.manifest);
    const MemoryBank bank = load_bank(o.bank);
    check_bank_matches(bank, manifest);
    const ManifestFeatureProvider provider(manifest);
    const EvalReport report = evaluate(manifest, bank, provider, eval_config_from(o));
    err << manifest.dataset_name << ": " << (o.baseline ? "baseline" : "patchproto") << ' '
        << o.shots << "-shot mean accuracy " << report.mean_accuracy << " over " << o.episodes
        << " episodes\n";
    emit(report_to_json(report), o, out);
    return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
    const DatasetManifest manifest = load_manifest(o.manifest);
    const MemoryBank bank = load_bank(o.bank);
    check_bank_matches(bank, manifest);
    const ManifestFeatureProvider provider(manifest);
    const SweepTable table = gamma_sweep(manifest, bank, provider, eval_config_from(o), o.gammas);
    for (const auto& row : table.rows) {
        err << "gamma " << row.gamma << ": " << row.mean_accuracy << '\n';
    }
    emit(sweep_to_json(table), o, out);
    return kExitOk;
}

void add_pipeline_flags(CLI::App& cmd, Options& o) {
    cmd.add_option("--gamma", o.gamma, "cumulative score-mass threshold")
        ->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd.add_option("--m-max", o.m_max, "upper bound on selected patches per image")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_flag("--renorm-weights", o.renorm_weights, "renormalize query weights over the selection");
    cmd.add_flag("--baseline", o.baseline, "mean-pooled prototype-network baseline");
}

void add_scoring_flags(CLI::App& cmd, Options& o) {
    cmd.add_option("--knn-k", o.knn_k, "neighbors averaged into a patch score")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--temperature", o.temperature, "softmax temperature")
        ->check(CLI::PositiveNumber)->capture_default_str();
}

void add_episode_flags(CLI::App& cmd, Options& o) {
    cmd.add_option("--shots", o.shots, "support samples per class")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--episodes", o.episodes, "episodes to sample")
        ->check(CLI::PositiveNumber)->capture_default_str();
    cmd.add_option("--seed", o.seed, "episode sampling seed")->capture_default_str();
    cmd.add_option("--queries-per-class", o.queries_per_class,
                   "fixed query count per class (0 = all remaining)")->capture_default_str();
    cmd.add_option("--workers", o.workers, "worker threads (default: PATCHPROTO_WORKERS or all cores)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"PatchProto few-shot anomaly classification"};
    app.name("patchproto");
    app.require_subcommand(1);
    Options o;

    auto* build = app.add_subcommand("build-bank", "build a normal-patch memory bank");
    build->add_option("--manifest", o.manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
    build->add_option("--out", o.out, "bank file to write")->required();
    build->add_option("--coreset-fraction", o.coreset_fraction, "fraction kept by greedy coreset")
        ->check(CLI::Range(0.0, 1.0))->capture_default_str();
    build->add_option("--seed", o.seed, "reserved; must be 0")->capture_default_str();
    build->add_option("--workers", o.workers, "worker threads");

    auto* score = app.add_subcommand("score", "patch anomaly scores of one sample");
    score->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    score->add_option("--bank", o.bank)->required()->check(CLI::ExistingFile);
    score->add_option("--sample", o.sample, "sample_id to score")->required();
    score->add_option("--dump", o.dump, "also write a PPSM score-map file");
    score->add_option("--out", o.out, "JSON output file (default: stdout)");
    add_scoring_flags(*score, o);

    auto* cls = app.add_subcommand("classify", "classify query samples against given support samples");
    cls->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    cls->add_option("--bank", o.bank)->required()->check(CLI::ExistingFile);
    cls->add_option("--support", o.support, "support sample_id (repeatable)")->required();
    cls->add_option("--query", o.query, "query sample_id (repeatable)")->required();
    cls->add_option("--out", o.out, "JSON output file (default: stdout)");
    add_pipeline_flags(*cls, o);
    add_scoring_flags(*cls, o);

    auto* eval = app.add_subcommand("evaluate", "episodic N-way K-shot evaluation");
    eval->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    eval->add_option("--bank", o.bank)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", o.out, "JSON report file (default: stdout)");
    add_pipeline_flags(*eval, o);
    add_scoring_flags(*eval, o);
    add_episode_flags(*eval, o);

    auto* sweep = app.add_subcommand("sweep", "mean accuracy across gamma values");
    sweep->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
    sweep->add_option("--bank", o.bank)->required()->check(CLI::ExistingFile);
    sweep->add_option("--gammas", o.gammas, "gamma values, comma separated")
        ->required()->delimiter(',')->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--m-max", o.m_max, "upper bound on selected patches per image")
        ->check(CLI::PositiveNumber)->capture_default_str();
    sweep->add_flag("--renorm-weights", o.renorm_weights, "renormalize query weights over the selection");
    sweep->add_option("--out", o.out, "JSON table file (default: stdout)");
    add_scoring_flags(*sweep, o);
    add_episode_flags(*sweep, o);

    std::vector<const char*> argv;
    argv.push_back("patchproto");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (build->parsed() && o.coreset_fraction <= 0.0) {
            throw UsageError("--coreset-fraction must be in (0, 1]");
        }
        if (build->parsed() && o.seed != 0) {
            throw UsageError("--seed is reserved for a randomized coreset start and must be 0");
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (build->parsed()) return cmd_build_bank(o, out, err);
        if (score->parsed()) return cmd_score(o, out, err);
        if (cls->parsed()) return cmd_classify(o, out, err);
        if (eval->parsed()) return cmd_evaluate(o, out, err);
        if (sweep->parsed()) return cmd_sweep(o, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace patchproto
