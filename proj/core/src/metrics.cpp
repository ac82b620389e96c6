#include "crd/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crd/ops.hpp"
#include "crd/perceptual.hpp"

namespace crd {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(std::span<const double> m, std::size_t dim) {
    if (m.size() != dim * dim) throw std::invalid_argument("matrix data does not match dimension " + std::to_string(dim));
    Matrix out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    std::copy(m.begin(), m.end(), out.data());
    return out;
}

Matrix sqrtm_sym(const Matrix& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) throw std::runtime_error("sqrtm: eigendecomposition failed");
    const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) throw std::invalid_argument("fit_gaussian: need at least 2 feature vectors");
    GaussianStats s;
    s.dim = features.front().size();
    s.count = features.size();
    for (const auto& f : features) {
        if (f.size() != s.dim) throw std::invalid_argument("fit_gaussian: feature vectors differ in length");
    }
    s.mean.assign(s.dim, 0.0);
    for (const auto& f : features) {
        for (std::size_t i = 0; i < s.dim; ++i) s.mean[i] += f[i];
    }
    for (auto& m : s.mean) m /= static_cast<double>(s.count);
    s.cov.assign(s.dim * s.dim, 0.0);
    for (const auto& f : features) {
        for (std::size_t i = 0; i < s.dim; ++i) {
            const double di = f[i] - s.mean[i];
            for (std::size_t j = i; j < s.dim; ++j) s.cov[i * s.dim + j] += di * (f[j] - s.mean[j]);
        }
    }
    const double denom = static_cast<double>(s.count - 1);
    for (std::size_t i = 0; i < s.dim; ++i) {
        for (std::size_t j = i; j < s.dim; ++j) {
            s.cov[i * s.dim + j] /= denom;
            s.cov[j * s.dim + i] = s.cov[i * s.dim + j];
        }
    }
    return s;
}

std::vector<double> sqrtm_psd(std::span<const double> m, std::size_t dim) {
    const Matrix root = sqrtm_sym(to_matrix(m, dim));
    return {root.data(), root.data() + root.size()};
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim) {
        throw std::invalid_argument("frechet_distance: dimension " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
    }
    const auto d = static_cast<Eigen::Index>(a.dim);
    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.dim; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    const Matrix reg = 1e-8 * Matrix::Identity(d, d);
    const Matrix sa = to_matrix(a.cov, a.dim) + reg;
    const Matrix sb = to_matrix(b.cov, b.dim) + reg;
    const Matrix ra = sqrtm_sym(sa);
    const Matrix cross = sqrtm_sym(ra * sb * ra);
    const double trace = sa.trace() + sb.trace() - 2.0 * cross.trace();
    return std::max(0.0, mean_term + trace);
}

double pixel_error(const Tensor& a, const Tensor& b, PixelNorm norm) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("pixel_error: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    if (a.numel() == 0) throw std::invalid_argument("pixel_error: empty tensors");
    auto da = a.data();
    auto db = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        s += norm == PixelNorm::l1 ? std::fabs(d) : d * d;
    }
    return s / static_cast<double>(da.size());
}

std::vector<std::vector<double>> pooled_features(const FeatureExtractor& extractor, const Tensor& images) {
    NoGradGuard guard;
    const Tensor pooled = global_avg_pool(extractor.extract(images).back());
    const std::size_t batch = pooled.dim(0), dim = pooled.dim(1);
    std::vector<std::vector<double>> out(batch);
    auto d = pooled.data();
    for (std::size_t b = 0; b < batch; ++b) out[b].assign(d.begin() + static_cast<std::ptrdiff_t>(b * dim),
                                                          d.begin() + static_cast<std::ptrdiff_t>((b + 1) * dim));
    return out;
}

}  // namespace crd
