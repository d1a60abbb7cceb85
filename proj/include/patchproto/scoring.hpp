#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "patchproto/embedding_store.hpp"
#include "patchproto/memory_bank.hpp"

namespace patchproto {

// Per-patch anomaly scores for one grid, row-major. `raw` holds distances to
// the normal memory bank; `normalized` is empty until softmax_normalize fills
// it with a distribution over patches.
struct ScoreMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> raw;
    std::vector<double> normalized;

    std::size_t size() const { return height * width; }
    bool has_normalized() const { return normalized.size() == size() && size() > 0; }
};

ScoreMap score_grid(const EmbeddingGrid& grid, const MemoryBank& bank, std::size_t k = 1);

// normalized = softmax(raw / temperature), stabilized by subtracting max(raw).
//
// The temperature matters more than it looks: with ~800 patches and raw
// distances spanning only a few units, temperature 1 yields a nearly flat
// distribution, so a cumulative-mass threshold admits many patches.
ScoreMap softmax_normalize(ScoreMap map, double temperature = 1.0);

// PPSM container, channels = 2 (raw, normalized) as f32.
void write_score_map(const ScoreMap& map, const std::filesystem::path& path);
ScoreMap read_score_map(const std::filesystem::path& path);

}  // namespace patchproto
