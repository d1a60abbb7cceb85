#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "patchproto/embedding_store.hpp"
#include "patchproto/scoring.hpp"

namespace patchproto {

struct PatchIndex {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    friend bool operator==(const PatchIndex&, const PatchIndex&) = default;
};

struct SelectionEntry {
    PatchIndex patch;
    std::vector<float> embedding;
    // Softmax mass of this patch over the full image.
    double weight = 0.0;
};

// Anomaly embeddings chosen from one image, heaviest first.
struct ScoredSelection {
    std::vector<SelectionEntry> entries;
    GridShape source_dims;

    std::size_t size() const { return entries.size(); }
    double total_weight() const;
};

struct SelectionParams {
    double gamma = 0.9;
    std::size_t m_max = 32;
};

void check_selection_params(double gamma, std::size_t m_max);

// Row-major patch indices ordered by normalized score descending, ties by
// index ascending, truncated to the first `limit`.
std::vector<std::size_t> rank_patches(const ScoreMap& map, std::size_t limit);

// The `limit` top-ranked patches with their embeddings and weights, without
// applying any stopping rule.
ScoredSelection rank_candidates(const EmbeddingGrid& grid, const ScoreMap& map, std::size_t limit);

// Admits candidates in order while the accumulated mass is below gamma and
// fewer than m_max are taken, always admitting the first. `ranked` must be a
// ranking as produced by rank_candidates; the result is a prefix of it.
ScoredSelection apply_stopping_rule(const ScoredSelection& ranked, double gamma, std::size_t m_max);

ScoredSelection select_anomaly_embeddings(const EmbeddingGrid& grid, const ScoreMap& map,
                                          double gamma, std::size_t m_max);

inline ScoredSelection select_anomaly_embeddings(const EmbeddingGrid& grid, const ScoreMap& map,
                                                 const SelectionParams& params) {
    return select_anomaly_embeddings(grid, map, params.gamma, params.m_max);
}

}  // namespace patchproto
