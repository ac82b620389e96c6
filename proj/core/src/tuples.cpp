#include "crd/tuples.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace crd {

std::uint64_t tuple_count(std::size_t count, std::size_t arity) {
    if (arity > count) return 0;
    std::uint64_t r = 1;
    for (std::size_t i = 1; i <= arity; ++i) r = r * (count - arity + i) / i;
    return r;
}

namespace {

void append_unranked(std::size_t count, std::size_t arity, std::uint64_t rank, std::vector<std::size_t>& out) {
    std::size_t next = 0;
    for (std::size_t slot = 0; slot < arity; ++slot) {
        const std::size_t remaining = arity - slot - 1;
        for (std::size_t v = next;; ++v) {
            const std::uint64_t block = tuple_count(count - v - 1, remaining);
            if (rank < block) {
                out.push_back(v);
                next = v + 1;
                break;
            }
            rank -= block;
        }
    }
}

void append_all(std::size_t count, std::size_t arity, std::vector<std::size_t>& out) {
    std::vector<std::size_t> idx(arity);
    for (std::size_t i = 0; i < arity; ++i) idx[i] = i;
    while (true) {
        out.insert(out.end(), idx.begin(), idx.end());
        std::size_t slot = arity;
        while (slot > 0 && idx[slot - 1] == count - arity + slot - 1) --slot;
        if (slot == 0) return;
        ++idx[slot - 1];
        for (std::size_t s = slot; s < arity; ++s) idx[s] = idx[s - 1] + 1;
    }
}

}  // namespace

TupleSet sample_tuples(std::size_t count, std::size_t arity, std::size_t budget, std::uint64_t seed) {
    if (arity != 2 && arity != 3) throw std::invalid_argument("sample_tuples: arity must be 2 or 3");
    if (count < arity) {
        throw std::invalid_argument("sample_tuples: " + std::to_string(count) + " items cannot form tuples of arity " +
                                    std::to_string(arity));
    }
    TupleSet set;
    set.arity = arity;
    const std::uint64_t total = tuple_count(count, arity);
    if (budget == 0 || budget >= total) {
        set.flat.reserve(static_cast<std::size_t>(total) * arity);
        append_all(count, arity, set.flat);
        return set;
    }

    // Floyd's algorithm: `budget` distinct ranks from [0, total).
    std::mt19937_64 rng(seed);
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(budget * 2);
    for (std::uint64_t j = total - budget; j < total; ++j) {
        std::uniform_int_distribution<std::uint64_t> pick(0, j);
        const std::uint64_t r = pick(rng);
        if (!chosen.insert(r).second) chosen.insert(j);
    }
    std::vector<std::uint64_t> ranks(chosen.begin(), chosen.end());
    std::sort(ranks.begin(), ranks.end());
    set.flat.reserve(budget * arity);
    for (auto r : ranks) append_unranked(count, arity, r, set.flat);
    return set;
}

}  // namespace crd
