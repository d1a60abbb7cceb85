#include "patchproto/distance.hpp"

#include <array>
#include <cmath>

namespace patchproto {
namespace {

constexpr std::size_t kLanes = 8;

double reduce(const std::array<double, kLanes>& acc) {
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

double squared_l2(std::span<const float> a, std::span<const float> b) {
    std::array<double, kLanes> acc{};
    const std::size_t n = a.size();
    const std::size_t blocked = n - n % kLanes;
    std::size_t i = 0;
    for (; i < blocked; i += kLanes) {
        for (std::size_t j = 0; j < kLanes; ++j) {
            const double d = static_cast<double>(a[i + j]) - static_cast<double>(b[i + j]);
            acc[j] += d * d;
        }
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc[j] += d * d;
    }
    return reduce(acc);
}

double dot(std::span<const float> a, std::span<const float> b) {
    std::array<double, kLanes> acc{};
    const std::size_t n = a.size();
    const std::size_t blocked = n - n % kLanes;
    std::size_t i = 0;
    for (; i < blocked; i += kLanes) {
        for (std::size_t j = 0; j < kLanes; ++j) {
            acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
        }
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        acc[j] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return reduce(acc);
}

double l2_norm(std::span<const float> a) {
    return std::sqrt(dot(a, a));
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace patchproto
