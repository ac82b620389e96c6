#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

/// Fixed convolutional feature network used by the perceptual loss and the
/// desk Frechet metric. Parameters never require gradients.
class FeatureExtractor {
public:
    struct Layer {
        std::string name;
        Tensor weight;  // [out, in, k, k]
        std::optional<Tensor> bias;
        std::size_t stride = 2;
        std::size_t padding = 1;
    };

    /// Seeded random strided net: 3x3 stride-2 convolutions with LeakyReLU(0.2),
    /// He-normal weights. Every layer is a tap.
    static FeatureExtractor random(std::size_t in_channels, std::uint64_t seed,
                                   const std::vector<std::size_t>& widths = {16, 32, 64, 64}, bool with_bias = false);

    /// Loads layers listed in `<dir>/manifest.txt`, one per line:
    /// `name,weight_file,bias_file|-,stride,padding`.
    static FeatureExtractor load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    explicit FeatureExtractor(std::vector<Layer> layers);

    /// One activation per layer for x of shape [c,h,w] or [B,c,h,w]; the
    /// batch axis is preserved in the outputs.
    std::vector<Tensor> extract(const Tensor& x) const;

    /// Activation shapes (C_j, H_j, W_j) for a [c,h,w] input.
    std::vector<Shape> tap_shapes(std::size_t c, std::size_t h, std::size_t w) const;

    std::size_t in_channels() const;
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<Layer> layers_;
};

/// extract() free-function form.
std::vector<Tensor> extract(const Tensor& x, const FeatureExtractor& extractor);

/// Sum over taps of mean|phi_j(T) - phi_j(S)| + sum|G_j(T) - G_j(S)|, where
/// G_j is the normalized Gram matrix. The teacher path is detached. An empty
/// tap list uses every layer. Batched inputs are averaged per image.
Tensor perceptual_loss(const Tensor& teacher_out, const Tensor& student_out, const FeatureExtractor& extractor,
                       const std::vector<std::size_t>& taps = {});

}  // namespace crd
