#include "crd/relation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "crd/ops.hpp"

namespace crd {

void RelationConfig::validate() const {
    if (!(lambda_a >= 0.0)) throw std::invalid_argument("lambda_a must be non-negative");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

std::vector<Granularity> RelationConfig::enabled() const {
    std::vector<Granularity> out;
    if (use_columns) out.push_back(Granularity::column);
    if (use_rows) out.push_back(Granularity::row);
    if (use_patches) out.push_back(Granularity::patch);
    return out;
}

double huber(double a, double b) {
    const double d = std::fabs(a - b);
    return d <= 1.0 ? 0.5 * d * d : d - 0.5;
}

DistanceStructure pairwise_distances(const Tensor& items) {
    if (items.rank() != 2) throw std::invalid_argument("pairwise_distances: expected [count,length], got " + shape_str(items.shape()));
    const std::size_t n = items.dim(0);
    if (n < 2) throw std::invalid_argument("pairwise_distances: need at least 2 items, got " + std::to_string(n));
    const TupleSet pairs = sample_tuples(n, 2, 0, 0);
    std::vector<std::size_t> first(pairs.size()), second(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        first[p] = pairs(p, 0);
        second[p] = pairs(p, 1);
    }
    DistanceStructure s;
    s.count = n;
    s.pair_distances = row_norms(row_differences(items, first, second));
    s.mean_distance = mean(s.pair_distances);
    s.mu = s.mean_distance.item();
    s.matrix.assign(n * n, 0.0);
    auto d = s.pair_distances.data();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        s.matrix[first[p] * n + second[p]] = d[p];
        s.matrix[second[p] * n + first[p]] = d[p];
    }
    return s;
}

DistanceStructure pairwise_distances(const ContentSet& set) { return pairwise_distances(set.items); }

double phi_d(const DistanceStructure& s, std::size_t i, std::size_t j, double epsilon) {
    if (i == j) throw std::invalid_argument("phi_d: pair needs distinct indices");
    if (i >= s.count || j >= s.count) throw std::out_of_range("phi_d: index out of range");
    return s.at(i, j) / std::max(s.mu, epsilon);
}

double phi_a(std::span<const double> vi, std::span<const double> vj, std::span<const double> vk, double epsilon) {
    if (vi.size() != vj.size() || vj.size() != vk.size()) throw std::invalid_argument("phi_a: vectors differ in length");
    double nij = 0.0, njk = 0.0, dot = 0.0;
    for (std::size_t c = 0; c < vi.size(); ++c) {
        const double a = vi[c] - vj[c];
        const double b = vj[c] - vk[c];
        nij += a * a;
        njk += b * b;
        dot += a * b;
    }
    return dot / (std::max(std::sqrt(nij), epsilon) * std::max(std::sqrt(njk), epsilon));
}

namespace {

void check_pairing(const Tensor& t, const Tensor& s, std::size_t min_items, const char* op) {
    if (t.rank() != 2 || s.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected item matrices, got " + shape_str(t.shape()) + " and " +
                                    shape_str(s.shape()));
    }
    if (t.dim(0) != s.dim(0)) {
        throw std::invalid_argument(std::string(op) + ": teacher has " + std::to_string(t.dim(0)) + " items, student " +
                                    std::to_string(s.dim(0)));
    }
    if (t.dim(0) < min_items) {
        throw std::invalid_argument(std::string(op) + ": need at least " + std::to_string(min_items) + " items");
    }
}

// Pair distances divided by their own mean, guarded by epsilon.
Tensor normalized_pair_distances(const Tensor& items, const std::vector<std::size_t>& first,
                                 const std::vector<std::size_t>& second, double epsilon) {
    Tensor d = row_norms(row_differences(items, first, second), epsilon);
    Tensor mu = clamp_min(mean(d), epsilon);
    return d / mu;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Tensor rkd_distance_loss(const Tensor& teacher_items, const Tensor& student_items, const TupleSet& pairs, double epsilon) {
    check_pairing(teacher_items, student_items, 2, "rkd_distance_loss");
    if (pairs.arity != 2) throw std::invalid_argument("rkd_distance_loss: expected pairs");
    const std::size_t n = teacher_items.dim(0);
    // mu always spans every pair of the set, even when only some pairs are penalized.
    const TupleSet all = sample_tuples(n, 2, 0, 0);
    std::vector<std::size_t> first(all.size()), second(all.size());
    for (std::size_t p = 0; p < all.size(); ++p) {
        first[p] = all(p, 0);
        second[p] = all(p, 1);
    }
    Tensor phi_t = normalized_pair_distances(teacher_items, first, second, epsilon);
    Tensor phi_s = normalized_pair_distances(student_items, first, second, epsilon);
    if (pairs.size() == all.size()) return sum(huber(phi_t, phi_s));

    std::vector<std::size_t> selected(pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const std::size_t i = pairs(p, 0), j = pairs(p, 1);
        // Canonical rank of (i, j) among all pairs.
        selected[p] = i * n - i * (i + 1) / 2 + (j - i - 1);
    }
    const Shape shape{pairs.size()};
    return sum(huber(gather(phi_t, selected, shape), gather(phi_s, selected, shape)));
}

Tensor rkd_angle_loss(const Tensor& teacher_items, const Tensor& student_items, const TupleSet& triples, double epsilon) {
    check_pairing(teacher_items, student_items, 3, "rkd_angle_loss");
    if (triples.arity != 3) throw std::invalid_argument("rkd_angle_loss: expected triples");
    const std::size_t n = teacher_items.dim(0);
    // Residue rows needed by the selected triples: (i,j) and (j,k).
    std::unordered_map<std::size_t, std::size_t> row_of;
    std::vector<std::size_t> first, second;
    auto residue_row = [&](std::size_t a, std::size_t b) {
        auto [it, inserted] = row_of.try_emplace(a * n + b, first.size());
        if (inserted) {
            first.push_back(a);
            second.push_back(b);
        }
        return it->second;
    };
    std::vector<std::size_t> left(triples.size()), right(triples.size());
    for (std::size_t t = 0; t < triples.size(); ++t) {
        left[t] = residue_row(triples(t, 0), triples(t, 1));
        right[t] = residue_row(triples(t, 1), triples(t, 2));
    }
    auto angles = [&](const Tensor& items) {
        Tensor unit = normalize_rows(row_differences(items, first, second), epsilon);
        return row_dots(unit, left, right);
    };
    return sum(huber(angles(teacher_items), angles(student_items)));
}

Tensor rkd_distance_loss(const Tensor& teacher_items, const Tensor& student_items, const RelationConfig& cfg) {
    cfg.validate();
    check_pairing(teacher_items, student_items, 2, "rkd_distance_loss");
    return rkd_distance_loss(teacher_items, student_items, sample_tuples(teacher_items.dim(0), 2, cfg.pair_budget, cfg.seed),
                             cfg.epsilon);
}

Tensor rkd_angle_loss(const Tensor& teacher_items, const Tensor& student_items, const RelationConfig& cfg) {
    cfg.validate();
    check_pairing(teacher_items, student_items, 3, "rkd_angle_loss");
    return rkd_angle_loss(teacher_items, student_items,
                          sample_tuples(teacher_items.dim(0), 3, cfg.triplet_budget, cfg.seed), cfg.epsilon);
}

namespace {

struct TermRequest {
    bool distance = true;
    bool angle = true;
};

CrdTerms compute_terms(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg,
                       TermRequest want) {
    cfg.validate();
    if (teacher_img.shape() != student_img.shape()) {
        throw std::invalid_argument("crd loss: teacher shape " + shape_str(teacher_img.shape()) + " vs student shape " +
                                    shape_str(student_img.shape()));
    }
    if (teacher_img.rank() != 3 && teacher_img.rank() != 4) {
        throw std::invalid_argument("crd loss: expected [c,h,w] or [B,c,h,w], got " + shape_str(teacher_img.shape()));
    }
    const auto enabled = cfg.enabled();
    if (enabled.empty()) throw std::invalid_argument("crd loss: every content granularity is disabled, no relations");
    std::vector<Granularity> angle_set = enabled;
    if (cfg.angle_patches_only) {
        if (!cfg.use_patches) throw std::invalid_argument("crd loss: angle_patches_only requires use_patches");
        angle_set = {Granularity::patch};
    }

    const bool batched = teacher_img.rank() == 4;
    const std::size_t batch = batched ? teacher_img.dim(0) : 1;
    CrdTerms terms;
    Tensor dist_total, angle_total;
    auto accumulate = [](Tensor& acc, const Tensor& v) { acc = acc.defined() ? acc + v : v; };

    for (std::size_t b = 0; b < batch; ++b) {
        const Tensor t_img = batched ? select(teacher_img, b) : teacher_img;
        const Tensor s_img = batched ? select(student_img, b) : student_img;
        for (std::size_t g = 0; g < 3; ++g) {
            const auto gran = static_cast<Granularity>(g);
            const bool do_dist = want.distance && std::find(enabled.begin(), enabled.end(), gran) != enabled.end();
            const bool do_angle = want.angle && std::find(angle_set.begin(), angle_set.end(), gran) != angle_set.end();
            if (!do_dist && !do_angle) continue;
            const ContentSet t_set = split(t_img, gran, patch);
            const ContentSet s_set = split(s_img, gran, patch);
            const std::uint64_t seed = mix_seed(cfg.seed, g, b);
            if (do_dist) {
                const TupleSet pairs = sample_tuples(t_set.count(), 2, cfg.pair_budget, seed);
                terms.pairs_evaluated += pairs.size();
                accumulate(dist_total, rkd_distance_loss(t_set.items, s_set.items, pairs, cfg.epsilon));
            }
            if (do_angle) {
                if (t_set.count() < 3) {
                    throw std::invalid_argument("crd loss: " + std::string(to_string(gran)) + " set has fewer than 3 items");
                }
                const TupleSet triples = sample_tuples(t_set.count(), 3, cfg.triplet_budget, seed ^ 0xA5A5A5A5ULL);
                terms.triples_evaluated += triples.size();
                accumulate(angle_total, rkd_angle_loss(t_set.items, s_set.items, triples, cfg.epsilon));
            }
        }
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    terms.distance = dist_total.defined() ? dist_total * inv_batch : Tensor::scalar(0.0);
    terms.angle = angle_total.defined() ? angle_total * inv_batch : Tensor::scalar(0.0);
    terms.total = terms.distance + terms.angle * cfg.lambda_a;
    return terms;
}

}  // namespace

CrdTerms crd_terms(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg) {
    return compute_terms(teacher_img, student_img, patch, cfg, {true, true});
}

Tensor crd_distance_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg) {
    return compute_terms(teacher_img, student_img, patch, cfg, {true, false}).distance;
}

Tensor crd_angle_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg) {
    return compute_terms(teacher_img, student_img, patch, cfg, {false, true}).angle;
}

Tensor crd_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg) {
    return crd_terms(teacher_img, student_img, patch, cfg).total;
}

}  // namespace crd
