#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "patchproto/embedding_store.hpp"
#include "patchproto/selection.hpp"

namespace patchproto {

// All selected anomaly embeddings of one class, one set per support sample.
// The sets are kept apart: support images contribute different numbers of
// patches, so there is no meaningful mean.
struct ClassPrototype {
    int class_id = 0;
    std::vector<ScoredSelection> support_sets;
};

struct LabeledSelection {
    ScoredSelection selection;
    int class_id = 0;
};

// One prototype per class, ascending class id; support sets keep input order.
std::vector<ClassPrototype> build_prototypes(std::span<const LabeledSelection> support);

// As above, and every id in `declared_classes` must receive at least one
// support selection.
std::vector<ClassPrototype> build_prototypes(std::span<const LabeledSelection> support,
                                             std::span<const int> declared_classes);

struct DistanceOptions {
    // Rescale query weights to sum to 1 over the selection.
    bool renormalize_weights = false;
};

// For each query entry i and support set n: index of the support embedding
// that attains min(1 - cos).
using NearestProvenance = std::vector<std::vector<std::size_t>>;

// d = (1/N) * sum_n sum_i w_i * min_{p in set n} (1 - cos(q_i, p))
// with N the number of support sets of the prototype.
double class_distance(const ScoredSelection& query, const ClassPrototype& proto,
                      const DistanceOptions& options = {}, NearestProvenance* provenance = nullptr);

struct ClassificationResult {
    int predicted_class = 0;
    std::map<int, double> distances;
    // class id -> provenance of that class's distance. Empty for the baseline.
    std::map<int, NearestProvenance> provenance;
};

// argmin over class distances, lowest class id on ties.
ClassificationResult classify(const ScoredSelection& query, std::span<const ClassPrototype> protos,
                              const DistanceOptions& options = {});

// Global mean over all patches of a grid.
std::vector<double> mean_pool(const EmbeddingGrid& grid);

struct LabeledGrid {
    const EmbeddingGrid* grid = nullptr;
    int class_id = 0;
};

struct LabeledVector {
    std::vector<double> vector;
    int class_id = 0;
};

// Prototype-network baseline on pooled vectors: class prototype is the mean
// of its support vectors, prediction is the nearest prototype (Euclidean).
ClassificationResult baseline_classify_pooled(std::span<const LabeledVector> support,
                                              std::span<const double> query);

ClassificationResult baseline_proto_classify(std::span<const LabeledGrid> support,
                                             const EmbeddingGrid& query);

}  // namespace patchproto
