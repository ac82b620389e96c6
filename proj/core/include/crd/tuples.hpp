#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace crd {

/// Index tuples i < j (< k) stored flat, in canonical lexicographic order.
struct TupleSet {
    std::size_t arity = 2;
    std::vector<std::size_t> flat;

    std::size_t size() const { return flat.size() / arity; }
    std::size_t operator()(std::size_t tuple, std::size_t slot) const { return flat[tuple * arity + slot]; }
};

/// Number of strictly increasing index tuples, C(count, arity).
std::uint64_t tuple_count(std::size_t count, std::size_t arity);

/// Canonical tuples over `count` items. A budget of 0, or one at least the
/// number of tuples, enumerates all of them; otherwise `budget` distinct
/// tuples are drawn uniformly without replacement, reproducibly from `seed`,
/// and returned in canonical order.
TupleSet sample_tuples(std::size_t count, std::size_t arity, std::size_t budget, std::uint64_t seed);

}  // namespace crd
