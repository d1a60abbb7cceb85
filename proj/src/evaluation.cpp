#include "patchproto/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "patchproto/errors.hpp"
#include "patchproto/parallel.hpp"
#include "patchproto/scoring.hpp"

namespace patchproto {
namespace {

using nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform draw in [0, bound) by rejection; std::uniform_int_distribution is
// implementation-defined and would make episodes vary across standard
// libraries.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

// Everything the classifier needs from one sample, independent of episode.
struct SampleFeatures {
    ScoredSelection ranked;       // top m_max candidates, no stopping rule applied
    std::vector<double> pooled;   // baseline only
};

using FeatureCache = std::unordered_map<std::string, SampleFeatures>;

SampleFeatures extract_features(const EmbeddingGrid& grid, const MemoryBank& bank,
                                const PipelineConfig& config) {
    SampleFeatures f;
    if (config.baseline) {
        f.pooled = mean_pool(grid);
    } else {
        ScoreMap map = softmax_normalize(score_grid(grid, bank, config.knn_k), config.temperature);
        f.ranked = rank_candidates(grid, map, config.selection.m_max);
    }
    return f;
}

FeatureCache build_cache(const std::vector<std::string>& ids, const MemoryBank& bank,
                         const FeatureProvider& provider, const PipelineConfig& config,
                         unsigned workers) {
    std::vector<SampleFeatures> slots(ids.size());
    parallel_for(ids.size(), workers, [&](std::size_t i) {
        const EmbeddingGrid grid = provider.load(ids[i]);
        if (!config.baseline && grid.channels() != bank.channels()) {
            throw ValidationError("sample '" + ids[i] + "' has " + std::to_string(grid.channels()) +
                                  " channels, bank has " + std::to_string(bank.channels()));
        }
        slots[i] = extract_features(grid, bank, config);
    });
    FeatureCache cache;
    for (std::size_t i = 0; i < ids.size(); ++i) cache.emplace(ids[i], std::move(slots[i]));
    return cache;
}

std::vector<std::string> episode_sample_ids(std::span<const Episode> episodes) {
    std::vector<std::string> ids;
    for (const auto& e : episodes) {
        for (const auto& s : e.support) ids.push_back(s.sample_id);
        for (const auto& s : e.query) ids.push_back(s.sample_id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

EpisodeResult classify_episode(const Episode& episode, const FeatureCache& cache,
                               const PipelineConfig& config) {
    EpisodeResult result;
    if (config.baseline) {
        std::vector<LabeledVector> support;
        for (const auto& s : episode.support) support.push_back({cache.at(s.sample_id).pooled, s.class_id});
        for (const auto& q : episode.query) {
            const int predicted = baseline_classify_pooled(support, cache.at(q.sample_id).pooled).predicted_class;
            result.outcomes.emplace_back(q.class_id, predicted);
        }
    } else {
        const auto& sel = config.selection;
        std::vector<LabeledSelection> support;
        for (const auto& s : episode.support) {
            support.push_back({apply_stopping_rule(cache.at(s.sample_id).ranked, sel.gamma, sel.m_max), s.class_id});
        }
        const auto protos = build_prototypes(support);
        const DistanceOptions options{config.renormalize_weights};
        for (const auto& q : episode.query) {
            const auto query = apply_stopping_rule(cache.at(q.sample_id).ranked, sel.gamma, sel.m_max);
            result.outcomes.emplace_back(q.class_id, classify(query, protos, options).predicted_class);
        }
    }
    result.total = result.outcomes.size();
    for (const auto& [truth, predicted] : result.outcomes) {
        if (truth == predicted) ++result.correct;
    }
    result.accuracy = result.total ? static_cast<double>(result.correct) / static_cast<double>(result.total) : 0.0;
    return result;
}

std::vector<EpisodeResult> run_all(std::span<const Episode> episodes, const FeatureCache& cache,
                                   const PipelineConfig& config, unsigned workers) {
    std::vector<EpisodeResult> results(episodes.size());
    parallel_for(episodes.size(), workers,
                 [&](std::size_t i) { results[i] = classify_episode(episodes[i], cache, config); });
    return results;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

ordered_json config_json(const EvalConfig& config, double coreset_fraction) {
    const auto& p = config.pipeline;
    ordered_json j;
    j["method"] = p.baseline ? "prototype_baseline" : "patchproto";
    j["gamma"] = p.selection.gamma;
    j["m_max"] = p.selection.m_max;
    j["knn_k"] = p.knn_k;
    j["coreset_fraction"] = coreset_fraction;
    j["temperature"] = p.temperature;
    j["renormalize_weights"] = p.renormalize_weights;
    j["shots"] = config.shots;
    j["episodes"] = config.episodes;
    j["queries_per_class"] = config.queries_per_class;
    j["seed"] = config.seed;
    return j;
}

}  // namespace

std::vector<Episode> sample_episodes(const DatasetManifest& manifest, std::size_t shots,
                                     std::size_t episodes, std::uint64_t seed,
                                     std::size_t queries_per_class) {
    if (shots < 1) throw ParameterError("shots must be >= 1");

    std::map<int, std::vector<std::string>> by_class;
    for (const auto& s : manifest.samples) {
        if (s.role == SampleRole::anomaly) by_class[*s.class_id].push_back(s.sample_id);
    }
    if (by_class.empty()) throw ValidationError("manifest has no anomaly samples");

    const std::size_t needed = shots + std::max<std::size_t>(queries_per_class, 1);
    for (const auto& [id, members] : by_class) {
        if (members.size() < needed) {
            const ClassInfo* info = manifest.find_class(id);
            throw ParameterError("class " + std::to_string(id) + " ('" +
                                 (info ? info->class_name : std::string("?")) + "') has " +
                                 std::to_string(members.size()) + " anomaly samples; " +
                                 std::to_string(shots) + "-shot episodes need at least " +
                                 std::to_string(needed));
        }
    }

    std::vector<Episode> out;
    out.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        Episode episode;
        episode.index = e;
        episode.seed = splitmix64(seed ^ splitmix64(e));
        std::mt19937_64 rng(episode.seed);
        for (const auto& [id, members] : by_class) {
            std::vector<std::size_t> order(members.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                std::swap(order[i], order[i + draw_below(rng, order.size() - i)]);
            }
            for (std::size_t i = 0; i < shots; ++i) {
                episode.support.push_back({members[order[i]], id});
            }
            std::size_t query_end = order.size();
            if (queries_per_class > 0) query_end = shots + queries_per_class;
            std::vector<std::size_t> query(order.begin() + static_cast<std::ptrdiff_t>(shots),
                                           order.begin() + static_cast<std::ptrdiff_t>(query_end));
            std::sort(query.begin(), query.end());
            for (std::size_t i : query) episode.query.push_back({members[i], id});
        }
        out.push_back(std::move(episode));
    }
    return out;
}

void check_pipeline_config(const PipelineConfig& config) {
    check_selection_params(config.selection.gamma, config.selection.m_max);
    if (config.knn_k < 1) throw ParameterError("knn_k must be >= 1");
    if (!(config.temperature > 0.0)) throw ParameterError("temperature must be > 0");
}

EpisodeResult run_episode(const Episode& episode, const MemoryBank& bank,
                          const FeatureProvider& provider, const PipelineConfig& config) {
    check_pipeline_config(config);
    const Episode* one = &episode;
    const auto cache = build_cache(episode_sample_ids({one, 1}), bank, provider, config, 1);
    return classify_episode(episode, cache, config);
}

EvalReport evaluate(const DatasetManifest& manifest, const MemoryBank& bank,
                    const FeatureProvider& provider, const EvalConfig& config) {
    check_pipeline_config(config.pipeline);
    const auto episodes =
        sample_episodes(manifest, config.shots, config.episodes, config.seed, config.queries_per_class);
    const auto cache =
        build_cache(episode_sample_ids(episodes), bank, provider, config.pipeline, config.workers);
    const auto results = run_all(episodes, cache, config.pipeline, config.workers);

    EvalReport report;
    report.config = config;
    report.coreset_fraction = bank.coreset_fraction();
    report.class_ids = manifest.anomaly_class_ids();
    std::map<int, std::size_t> slot;
    for (std::size_t i = 0; i < report.class_ids.size(); ++i) {
        slot[report.class_ids[i]] = i;
        const ClassInfo* info = manifest.find_class(report.class_ids[i]);
        report.class_names.push_back(info ? info->class_name : std::string());
    }
    report.confusion.assign(report.class_ids.size(),
                            std::vector<std::size_t>(report.class_ids.size(), 0));
    for (const auto& r : results) {
        report.per_episode.push_back(r.accuracy);
        for (const auto& [truth, predicted] : r.outcomes) {
            ++report.confusion[slot.at(truth)][slot.at(predicted)];
        }
    }
    report.mean_accuracy = mean_of(report.per_episode);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    ordered_json j;
    j["config"] = config_json(report.config, report.coreset_fraction);
    j["classes"] = ordered_json::array();
    for (std::size_t i = 0; i < report.class_ids.size(); ++i) {
        j["classes"].push_back({{"class_id", report.class_ids[i]}, {"class_name", report.class_names[i]}});
    }
    j["per_episode"] = report.per_episode;
    j["mean_accuracy"] = report.mean_accuracy;
    j["confusion"] = report.confusion;
    return j.dump(2);
}

SweepTable gamma_sweep(const DatasetManifest& manifest, const MemoryBank& bank,
                       const FeatureProvider& provider, const EvalConfig& config,
                       std::span<const double> gammas) {
    if (config.pipeline.baseline) {
        throw ParameterError("gamma sweep applies to PatchProto selection, not the baseline");
    }
    if (gammas.empty()) throw ParameterError("gamma sweep needs at least one gamma value");
    for (double g : gammas) check_selection_params(g, config.pipeline.selection.m_max);
    check_pipeline_config(config.pipeline);

    const auto episodes =
        sample_episodes(manifest, config.shots, config.episodes, config.seed, config.queries_per_class);
    // Ranked candidates depend on m_max but not on gamma, so one cache serves
    // every row.
    const auto cache =
        build_cache(episode_sample_ids(episodes), bank, provider, config.pipeline, config.workers);

    SweepTable table;
    table.config = config;
    table.coreset_fraction = bank.coreset_fraction();
    for (double g : gammas) {
        PipelineConfig pipeline = config.pipeline;
        pipeline.selection.gamma = g;
        SweepRow row;
        row.gamma = g;
        for (const auto& r : run_all(episodes, cache, pipeline, config.workers)) {
            row.per_episode.push_back(r.accuracy);
        }
        row.mean_accuracy = mean_of(row.per_episode);
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string sweep_to_json(const SweepTable& table) {
    ordered_json j;
    ordered_json config = config_json(table.config, table.coreset_fraction);
    config.erase("gamma");
    config.erase("method");
    j["config"] = std::move(config);
    j["rows"] = ordered_json::array();
    for (const auto& row : table.rows) {
        j["rows"].push_back({{"gamma", row.gamma}, {"mean_accuracy", row.mean_accuracy}});
    }
    return j.dump(2);
}

}  // namespace patchproto
