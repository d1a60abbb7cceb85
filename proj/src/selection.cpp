#include "patchproto/selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "patchproto/errors.hpp"

namespace patchproto {

double ScoredSelection::total_weight() const {
    double total = 0.0;
    for (const auto& e : entries) total += e.weight;
    return total;
}

void check_selection_params(double gamma, std::size_t m_max) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw ParameterError("gamma must be in [0, 1], got " + std::to_string(gamma));
    }
    if (m_max < 1) {
        throw ParameterError("m_max must be >= 1");
    }
}

std::vector<std::size_t> rank_patches(const ScoreMap& map, std::size_t limit) {
    if (!map.has_normalized()) {
        throw ValidationError("score map must be normalized before selection");
    }
    std::vector<std::size_t> order(map.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = std::min(limit, order.size());
    const auto& w = map.normalized;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (w[a] != w[b]) return w[a] > w[b];
                          return a < b;
                      });
    order.resize(keep);
    return order;
}

ScoredSelection rank_candidates(const EmbeddingGrid& grid, const ScoreMap& map, std::size_t limit) {
    if (map.height != grid.height() || map.width != grid.width()) {
        throw ValidationError("score map dims do not match the embedding grid");
    }
    ScoredSelection out;
    out.source_dims = grid.shape();
    for (std::size_t p : rank_patches(map, limit)) {
        const auto v = grid.patch(p);
        out.entries.push_back({{static_cast<std::uint32_t>(p / grid.width()),
                                static_cast<std::uint32_t>(p % grid.width())},
                               {v.begin(), v.end()},
                               map.normalized[p]});
    }
    return out;
}

ScoredSelection apply_stopping_rule(const ScoredSelection& ranked, double gamma, std::size_t m_max) {
    check_selection_params(gamma, m_max);
    if (ranked.entries.empty()) {
        throw ValidationError("cannot select from an empty candidate list");
    }
    ScoredSelection out;
    out.source_dims = ranked.source_dims;
    const std::size_t cap = std::min(m_max, ranked.entries.size());
    double mass = 0.0;
    // The first admission is unconditional so gamma = 0 yields the single
    // top patch; afterwards the loop test runs before every admission.
    do {
        const auto& next = ranked.entries[out.entries.size()];
        out.entries.push_back(next);
        mass += next.weight;
    } while (mass < gamma && out.entries.size() < cap);
    return out;
}

ScoredSelection select_anomaly_embeddings(const EmbeddingGrid& grid, const ScoreMap& map,
                                          double gamma, std::size_t m_max) {
    check_selection_params(gamma, m_max);
    return apply_stopping_rule(rank_candidates(grid, map, m_max), gamma, m_max);
}

}  // namespace patchproto
