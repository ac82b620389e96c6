#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crd/content.hpp"
#include "crd/tensor.hpp"
#include "crd/tuples.hpp"

namespace crd {

struct RelationConfig {
    double lambda_a = 2.0;
    std::size_t pair_budget = 0;        // 0: every pair
    std::size_t triplet_budget = 4096;  // per granularity; 0: every triple
    double epsilon = 1e-12;
    bool use_columns = true;
    bool use_rows = true;
    bool use_patches = true;
    // Angle term over patch triples only (literal reading of the content angle loss).
    bool angle_patches_only = false;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<Granularity> enabled() const;
};

/// Huber penalty on a - b: 0.5 d^2 inside |d| <= 1, |d| - 0.5 outside.
double huber(double a, double b);

/// Euclidean distances between all item pairs plus their mean.
struct DistanceStructure {
    std::size_t count = 0;
    std::vector<double> matrix;  // count x count, zero diagonal
    double mu = 0.0;             // mean over unordered pairs
    Tensor pair_distances;       // differentiable, canonical pair order
    Tensor mean_distance;        // differentiable mu

    double at(std::size_t i, std::size_t j) const { return matrix[i * count + j]; }
};

DistanceStructure pairwise_distances(const Tensor& items);
DistanceStructure pairwise_distances(const ContentSet& set);

/// Distance of pair (i, j) normalized by max(mu, epsilon).
double phi_d(const DistanceStructure& s, std::size_t i, std::size_t j, double epsilon = 1e-12);

/// Cosine of the angle at vj between residues vi - vj and vj - vk, each
/// normalized by max(norm, epsilon).
double phi_a(std::span<const double> vi, std::span<const double> vj, std::span<const double> vk,
             double epsilon = 1e-12);

/// Instance-level distance loss over item rows of [count, length] matrices.
/// Each side is normalized by its own mean pairwise distance.
Tensor rkd_distance_loss(const Tensor& teacher_items, const Tensor& student_items, const RelationConfig& cfg);
/// Instance-level angle loss over canonical triples i < j < k with vertex j.
Tensor rkd_angle_loss(const Tensor& teacher_items, const Tensor& student_items, const RelationConfig& cfg);

/// Same as the above with an explicit tuple selection.
Tensor rkd_distance_loss(const Tensor& teacher_items, const Tensor& student_items, const TupleSet& pairs, double epsilon);
Tensor rkd_angle_loss(const Tensor& teacher_items, const Tensor& student_items, const TupleSet& triples, double epsilon);

struct CrdTerms {
    Tensor distance;
    Tensor angle;
    Tensor total;  // distance + lambda_a * angle
    std::size_t pairs_evaluated = 0;
    std::size_t triples_evaluated = 0;
};

/// Content relationship losses between a teacher and student image, either
/// [c,h,w] or [B,c,h,w]. Relations stay within one granularity of one image;
/// batched inputs are averaged over the batch.
CrdTerms crd_terms(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg);

Tensor crd_distance_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg);
Tensor crd_angle_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg);
Tensor crd_loss(const Tensor& teacher_img, const Tensor& student_img, PatchDims patch, const RelationConfig& cfg);

}  // namespace crd
