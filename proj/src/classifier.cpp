#include "patchproto/classifier.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "patchproto/distance.hpp"
#include "patchproto/errors.hpp"

namespace patchproto {
namespace {

ClassificationResult argmin(std::map<int, double> distances) {
    ClassificationResult result;
    double best = std::numeric_limits<double>::infinity();
    bool first = true;
    for (const auto& [id, d] : distances) {
        // std::map iterates ascending, so strict < keeps the lowest id on ties.
        if (first || d < best) {
            best = d;
            result.predicted_class = id;
            first = false;
        }
    }
    result.distances = std::move(distances);
    return result;
}

}  // namespace

std::vector<ClassPrototype> build_prototypes(std::span<const LabeledSelection> support) {
    std::map<int, ClassPrototype> by_class;
    for (const auto& s : support) {
        if (s.selection.entries.empty()) {
            throw ValidationError("support selection for class " + std::to_string(s.class_id) +
                                  " is empty");
        }
        auto& proto = by_class[s.class_id];
        proto.class_id = s.class_id;
        proto.support_sets.push_back(s.selection);
    }
    std::vector<ClassPrototype> out;
    out.reserve(by_class.size());
    for (auto& [id, proto] : by_class) out.push_back(std::move(proto));
    return out;
}

std::vector<ClassPrototype> build_prototypes(std::span<const LabeledSelection> support,
                                             std::span<const int> declared_classes) {
    auto protos = build_prototypes(support);
    std::set<int> present;
    for (const auto& p : protos) present.insert(p.class_id);
    std::string missing;
    for (int id : declared_classes) {
        if (!present.contains(id)) {
            missing += (missing.empty() ? "" : ", ") + std::to_string(id);
        }
    }
    if (!missing.empty()) {
        throw ValidationError("no support samples for declared class(es): " + missing);
    }
    return protos;
}

double class_distance(const ScoredSelection& query, const ClassPrototype& proto,
                      const DistanceOptions& options, NearestProvenance* provenance) {
    if (proto.support_sets.empty()) {
        throw ValidationError("prototype for class " + std::to_string(proto.class_id) +
                              " has no support sets");
    }
    if (query.entries.empty()) {
        throw ValidationError("query selection is empty");
    }
    const std::size_t dim = query.entries.front().embedding.size();
    for (const auto& q : query.entries) {
        if (q.embedding.size() != dim) throw ValidationError("query embeddings differ in dimension");
    }
    for (const auto& set : proto.support_sets) {
        for (const auto& p : set.entries) {
            if (p.embedding.size() != dim) {
                throw ValidationError("support embedding dimension " +
                                      std::to_string(p.embedding.size()) +
                                      " does not match query dimension " + std::to_string(dim));
            }
        }
    }

    double weight_scale = 1.0;
    if (options.renormalize_weights) {
        const double total = query.total_weight();
        if (total > 0.0) weight_scale = 1.0 / total;
    }

    if (provenance) {
        provenance->assign(query.entries.size(), std::vector<std::size_t>(proto.support_sets.size(), 0));
    }

    std::vector<double> query_norms;
    query_norms.reserve(query.entries.size());
    for (const auto& q : query.entries) query_norms.push_back(l2_norm(q.embedding));

    double sum = 0.0;
    std::vector<double> support_norms;
    for (std::size_t n = 0; n < proto.support_sets.size(); ++n) {
        const auto& set = proto.support_sets[n];
        if (set.entries.empty()) {
            throw ValidationError("empty support set in class " + std::to_string(proto.class_id));
        }
        support_norms.clear();
        for (const auto& p : set.entries) support_norms.push_back(l2_norm(p.embedding));

        double set_sum = 0.0;
        for (std::size_t i = 0; i < query.entries.size(); ++i) {
            const auto& q = query.entries[i];
            double nearest = std::numeric_limits<double>::infinity();
            std::size_t nearest_index = 0;
            for (std::size_t j = 0; j < set.entries.size(); ++j) {
                const double denom = query_norms[i] * support_norms[j];
                // cos is 0 against a zero vector.
                const double cos =
                    denom == 0.0 ? 0.0 : dot(q.embedding, set.entries[j].embedding) / denom;
                const double d = 1.0 - cos;
                if (d < nearest) {
                    nearest = d;
                    nearest_index = j;
                }
            }
            set_sum += q.weight * weight_scale * nearest;
            if (provenance) (*provenance)[i][n] = nearest_index;
        }
        sum += set_sum;
    }
    return sum / static_cast<double>(proto.support_sets.size());
}

ClassificationResult classify(const ScoredSelection& query, std::span<const ClassPrototype> protos,
                              const DistanceOptions& options) {
    if (protos.empty()) throw ValidationError("classify needs at least one prototype");
    std::map<int, double> distances;
    std::map<int, NearestProvenance> provenance;
    for (const auto& proto : protos) {
        NearestProvenance prov;
        distances[proto.class_id] = class_distance(query, proto, options, &prov);
        provenance[proto.class_id] = std::move(prov);
    }
    ClassificationResult result = argmin(std::move(distances));
    result.provenance = std::move(provenance);
    return result;
}

std::vector<double> mean_pool(const EmbeddingGrid& grid) {
    std::vector<double> pooled(grid.channels(), 0.0);
    for (std::size_t p = 0; p < grid.patch_count(); ++p) {
        const auto v = grid.patch(p);
        for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += v[c];
    }
    for (double& x : pooled) x /= static_cast<double>(grid.patch_count());
    return pooled;
}

ClassificationResult baseline_classify_pooled(std::span<const LabeledVector> support,
                                              std::span<const double> query) {
    if (support.empty()) throw ValidationError("baseline needs at least one support vector");
    std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
    for (const auto& s : support) {
        if (s.vector.size() != query.size()) {
            throw ValidationError("baseline support vector dimension does not match query");
        }
        auto& [sum, count] = sums[s.class_id];
        if (sum.empty()) sum.assign(query.size(), 0.0);
        for (std::size_t c = 0; c < query.size(); ++c) sum[c] += s.vector[c];
        ++count;
    }
    std::map<int, double> distances;
    for (const auto& [id, acc] : sums) {
        const auto& [sum, count] = acc;
        double d2 = 0.0;
        for (std::size_t c = 0; c < query.size(); ++c) {
            const double diff = query[c] - sum[c] / static_cast<double>(count);
            d2 += diff * diff;
        }
        distances[id] = std::sqrt(d2);
    }
    return argmin(std::move(distances));
}

ClassificationResult baseline_proto_classify(std::span<const LabeledGrid> support,
                                             const EmbeddingGrid& query) {
    std::vector<LabeledVector> pooled;
    pooled.reserve(support.size());
    for (const auto& s : support) {
        if (s.grid->shape() != query.shape()) {
            throw ValidationError("baseline grids must share dims: " + to_string(s.grid->shape()) +
                                  " vs " + to_string(query.shape()));
        }
        pooled.push_back({mean_pool(*s.grid), s.class_id});
    }
    const auto q = mean_pool(query);
    return baseline_classify_pooled(pooled, q);
}

}  // namespace patchproto
