#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

class FeatureExtractor;

/// Sample mean and unbiased covariance of a feature distribution.
struct GaussianStats {
    std::size_t dim = 0;
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major
    std::size_t count = 0;

    double cov_at(std::size_t i, std::size_t j) const { return cov[i * dim + j]; }
};

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

/// Principal square root of a symmetric positive semidefinite matrix via
/// eigendecomposition; negative eigenvalues are clamped to zero.
std::vector<double> sqrtm_psd(std::span<const double> m, std::size_t dim);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), with
/// 1e-8 I added to both covariances. Never negative.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

enum class PixelNorm { l1, l2 };

/// Mean absolute (L1) or squared (L2) per-element difference.
double pixel_error(const Tensor& a, const Tensor& b, PixelNorm norm);

/// Global-average-pooled final-tap features, one vector per image of [B,c,h,w].
std::vector<std::vector<double>> pooled_features(const FeatureExtractor& extractor, const Tensor& images);

}  // namespace crd
