#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchproto/embedding_store.hpp"

namespace patchproto {

// Flat collection of normal patch embeddings. Immutable once built; all
// queries are const and safe to issue from many threads.
class MemoryBank {
public:
    MemoryBank(std::size_t channels, std::vector<float> data, std::size_t source_count,
               double coreset_fraction);

    std::size_t size() const { return data_.size() / channels_; }
    std::size_t channels() const { return channels_; }
    std::size_t source_count() const { return source_count_; }
    double coreset_fraction() const { return coreset_fraction_; }

    std::span<const float> vector(std::size_t i) const {
        return {data_.data() + i * channels_, channels_};
    }
    std::span<const float> data() const { return data_; }

    friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

private:
    std::size_t channels_;
    std::vector<float> data_;
    std::size_t source_count_;
    double coreset_fraction_;
};

// Streams grids into a bank without holding them all in memory.
class BankBuilder {
public:
    void add(const EmbeddingGrid& grid);
    std::size_t patch_count() const { return channels_ ? data_.size() / channels_ : 0; }
    MemoryBank finish() &&;

private:
    std::size_t channels_ = 0;
    std::vector<float> data_;
};

MemoryBank build_bank(std::span<const EmbeddingGrid> normals);

// ceil(fraction * n), clamped to [1, n]. A relative tolerance of 1e-9 absorbs
// binary rounding in the product (0.07 * 100 is 7, not 8).
std::size_t coreset_size(std::size_t n, double fraction);

// Index of the vector with the largest L2 norm, lowest index on ties.
std::size_t greedy_start_index(const MemoryBank& bank);

// Greedy farthest-point (k-center) selection of `target` indices, in
// selection order. Each step takes the unselected vector whose distance to
// the selected set is largest, lowest index on ties.
std::vector<std::size_t> greedy_coreset_indices(const MemoryBank& bank, std::size_t target,
                                                unsigned workers = 1);

// Keeps ceil(fraction * n) vectors chosen by greedy_coreset_indices, stored in
// ascending ingestion order. fraction = 1 returns the bank unchanged.
// `seed` is reserved for a randomized start and must be 0.
MemoryBank coreset_subsample(const MemoryBank& bank, double fraction, std::uint64_t seed = 0,
                             unsigned workers = 1);

// Mean of the k smallest Euclidean distances from query to the bank. Exact:
// every bank vector is compared. The k distances are summed in ascending
// order.
double nn_distance(const MemoryBank& bank, std::span<const float> query, std::size_t k = 1);

void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);

}  // namespace patchproto
