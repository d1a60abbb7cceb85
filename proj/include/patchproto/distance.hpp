#pragma once

#include <cstddef>
#include <span>

namespace patchproto {

// Squared Euclidean distance accumulated in double precision over eight
// interleaved lanes (lane j sums elements i with i % 8 == j), then reduced
// pairwise. The summation order is fixed, so results are reproducible
// bit-for-bit for a given pair of vectors regardless of caller.
double squared_l2(std::span<const float> a, std::span<const float> b);

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);

// cos(a, b); defined as 0 when either vector has zero norm.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace patchproto
