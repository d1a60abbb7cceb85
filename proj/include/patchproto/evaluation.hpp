#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "patchproto/classifier.hpp"
#include "patchproto/embedding_store.hpp"
#include "patchproto/memory_bank.hpp"
#include "patchproto/selection.hpp"

namespace patchproto {

struct EpisodeSample {
    std::string sample_id;
    int class_id = 0;
    friend bool operator==(const EpisodeSample&, const EpisodeSample&) = default;
};

// One N-way K-shot trial.
struct Episode {
    std::vector<EpisodeSample> support;  // K per class, grouped by ascending class id
    std::vector<EpisodeSample> query;
    std::uint64_t seed = 0;
    std::size_t index = 0;
    friend bool operator==(const Episode&, const Episode&) = default;
};

// Draws `episodes` episodes over every class that has anomaly samples.
// Support is sampled uniformly without replacement per class; queries are the
// remaining anomaly samples of each class, or the next `queries_per_class`
// of them when non-zero. Deterministic in (manifest, shots, seed) and
// independent of platform: the generator is mt19937_64 with rejection-sampled
// bounded draws.
std::vector<Episode> sample_episodes(const DatasetManifest& manifest, std::size_t shots,
                                     std::size_t episodes, std::uint64_t seed,
                                     std::size_t queries_per_class = 0);

struct PipelineConfig {
    SelectionParams selection;
    std::size_t knn_k = 1;
    double temperature = 1.0;
    bool renormalize_weights = false;
    // Use the mean-pooled prototype-network baseline instead.
    bool baseline = false;
};

void check_pipeline_config(const PipelineConfig& config);

struct EpisodeResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0.0;
    // (true class, predicted class) for each query, in query order.
    std::vector<std::pair<int, int>> outcomes;
};

EpisodeResult run_episode(const Episode& episode, const MemoryBank& bank,
                          const FeatureProvider& provider, const PipelineConfig& config);

struct EvalConfig {
    PipelineConfig pipeline;
    std::size_t shots = 1;
    std::size_t episodes = 100;
    std::uint64_t seed = 0;
    std::size_t queries_per_class = 0;
    unsigned workers = 1;
};

struct EvalReport {
    EvalConfig config;
    double coreset_fraction = 1.0;
    std::vector<int> class_ids;
    std::vector<std::string> class_names;
    std::vector<double> per_episode;
    double mean_accuracy = 0.0;
    // confusion[true][predicted], indices follow class_ids.
    std::vector<std::vector<std::size_t>> confusion;
};

EvalReport evaluate(const DatasetManifest& manifest, const MemoryBank& bank,
                    const FeatureProvider& provider, const EvalConfig& config);

// Serialized without the worker count, so serial and parallel runs of the
// same configuration produce identical bytes.
std::string report_to_json(const EvalReport& report);

struct SweepRow {
    double gamma = 0.0;
    double mean_accuracy = 0.0;
    std::vector<double> per_episode;
};

struct SweepTable {
    EvalConfig config;
    double coreset_fraction = 1.0;
    std::vector<SweepRow> rows;
};

// Mean accuracy per gamma on one shared set of episodes; every other setting
// is held fixed, including m_max.
SweepTable gamma_sweep(const DatasetManifest& manifest, const MemoryBank& bank,
                       const FeatureProvider& provider, const EvalConfig& config,
                       std::span<const double> gammas);

std::string sweep_to_json(const SweepTable& table);

}  // namespace patchproto
