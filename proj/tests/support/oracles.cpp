#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "patchproto/distance.hpp"

namespace oracle {

double seq_squared_distance(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return s;
}

double linear_scan_nn(const patchproto::MemoryBank& bank, std::span<const float> query, std::size_t k) {
    std::vector<double> all;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        all.push_back(std::sqrt(patchproto::squared_l2(query, bank.vector(i))));
    }
    std::sort(all.begin(), all.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += all[i];
    return sum / double(k);
}

std::size_t largest_norm_index(const Points& points) {
    const std::vector<float> zero(points.front().size(), 0.0f);
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (seq_squared_distance(points[i], zero) > seq_squared_distance(points[best], zero)) best = i;
    }
    return best;
}

std::vector<std::size_t> greedy_farthest_point(const Points& points, std::size_t start,
                                               std::size_t target) {
    std::vector<std::size_t> selected{start};
    while (selected.size() < target) {
        std::size_t best = points.size();
        double best_dist = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (std::find(selected.begin(), selected.end(), i) != selected.end()) continue;
            double nearest = std::numeric_limits<double>::infinity();
            for (std::size_t s : selected) nearest = std::min(nearest, seq_squared_distance(points[i], points[s]));
            if (nearest > best_dist) {
                best_dist = nearest;
                best = i;
            }
        }
        selected.push_back(best);
    }
    return selected;
}

double covering_radius(const Points& points, const std::vector<std::size_t>& selected) {
    double radius = 0.0;
    for (const auto& p : points) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t s : selected) nearest = std::min(nearest, seq_squared_distance(p, points[s]));
        radius = std::max(radius, nearest);
    }
    return std::sqrt(radius);
}

std::vector<std::size_t> accumulate_until(const std::vector<double>& weights, double gamma,
                                          std::size_t m_max) {
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    std::vector<std::size_t> chosen;
    double c = 0.0;
    std::size_t i = 0;
    while (c < gamma && chosen.size() < m_max && i < order.size()) {
        chosen.push_back(order[i]);
        c += weights[order[i]];
        ++i;
    }
    if (chosen.empty()) chosen.push_back(order[0]);
    return chosen;
}

namespace {

long double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    long double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += (long double)a[i] * b[i];
        aa += (long double)a[i] * a[i];
        bb += (long double)b[i] * b[i];
    }
    if (aa == 0 || bb == 0) return 0;
    return ab / std::sqrt(aa * bb);
}

}  // namespace

double class_distance_oracle(const WeightedSet& query, const std::vector<std::vector<std::vector<double>>>& sets) {
    long double total = 0;
    for (const auto& set : sets) {
        for (std::size_t i = 0; i < query.vectors.size(); ++i) {
            long double best = std::numeric_limits<long double>::infinity();
            for (const auto& p : set) best = std::min(best, 1 - cosine(query.vectors[i], p));
            total += query.weights[i] * best;
        }
    }
    return double(total / sets.size());
}

std::vector<double> softmax(const std::vector<double>& raw, double temperature) {
    std::vector<long double> e;
    long double z = 0;
    for (double r : raw) {
        e.push_back(std::exp((long double)r / temperature));
        z += e.back();
    }
    std::vector<double> out;
    for (auto v : e) out.push_back(double(v / z));
    return out;
}

int baseline_predict(const std::vector<std::pair<std::vector<std::vector<double>>, int>>& support,
                     const std::vector<std::vector<double>>& query_patches) {
    auto pool = [](const std::vector<std::vector<double>>& patches) {
        std::vector<double> m(patches.front().size(), 0.0);
        for (const auto& p : patches)
            for (std::size_t c = 0; c < m.size(); ++c) m[c] += p[c] / double(patches.size());
        return m;
    };
    std::map<int, std::vector<std::vector<double>>> pooled;
    for (const auto& [patches, cls] : support) pooled[cls].push_back(pool(patches));
    const auto q = pool(query_patches);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [cls, vs] : pooled) {
        std::vector<double> proto(q.size(), 0.0);
        for (const auto& v : vs)
            for (std::size_t c = 0; c < q.size(); ++c) proto[c] += v[c] / double(vs.size());
        double d = 0;
        for (std::size_t c = 0; c < q.size(); ++c) d += (q[c] - proto[c]) * (q[c] - proto[c]);
        if (d < best_d) {
            best_d = d;
            best = cls;
        }
    }
    return best;
}

}  // namespace oracle
