#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

enum class GanMode { vanilla, least_squares };

std::string_view to_string(GanMode mode);
GanMode parse_gan_mode(std::string_view name);

/// How a forward pass uses the module's parameters. Frozen parameters enter
/// the graph detached: gradients still flow through the activations, but the
/// parameters themselves receive none.
enum class ParamUse { trainable, frozen };

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Ordered, named parameter tensors owned by one model.
class ParameterStore {
public:
    Tensor& add(std::string name, Tensor t);
    const Tensor& get(std::string_view name) const;
    Tensor use(std::string_view name, ParamUse mode) const;

    std::vector<NamedParameter>& entries() { return entries_; }
    const std::vector<NamedParameter>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t scalar_count() const;

    /// Copies values (not graph state) from a store with identical layout.
    void copy_values_from(const ParameterStore& other);
    ParameterStore deep_copy() const;
    void zero_grad();
    void clear_grad();

private:
    std::vector<NamedParameter> entries_;
};

struct GeneratorSpec {
    std::size_t base_width = 32;
    double width_factor = 1.0;
    std::size_t num_res_blocks = 3;
    std::size_t in_channels = 3;
    std::size_t out_channels = 3;

    /// Channel widths at full, half and quarter resolution.
    std::array<std::size_t, 3> widths() const;
};

/// ResNet-style image-to-image generator: 7x7 stem, two stride-2
/// downsamplings, residual blocks, two nearest-upsample + conv stages and a
/// 7x7 tanh head. Instance normalization and ReLU between convolutions.
class Generator {
public:
    Generator(const GeneratorSpec& spec, std::uint64_t seed);

    /// x is [c,h,w] or [B,c,h,w] with h and w divisible by 4; output has the same shape.
    Tensor forward(const Tensor& x, ParamUse use = ParamUse::trainable) const;
    Tensor operator()(const Tensor& x, ParamUse use = ParamUse::trainable) const { return forward(x, use); }

    Generator clone() const;
    const GeneratorSpec& spec() const { return spec_; }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.scalar_count(); }

private:
    Generator() = default;
    Tensor conv(const Tensor& x, const std::string& name, std::size_t stride, std::size_t padding, ParamUse use) const;

    GeneratorSpec spec_;
    ParameterStore params_;
};

/// Analytic trainable-parameter count of a generator built from spec.
std::size_t generator_parameter_count(const GeneratorSpec& spec);

struct DiscriminatorSpec {
    std::size_t num_layers = 3;
    std::size_t base_width = 32;
    std::size_t in_channels = 3;
};

/// Patch discriminator: 4x4 stride-2 convolutions with LeakyReLU(0.2); the
/// last layer emits one raw score per spatial cell (no sigmoid).
class Discriminator {
public:
    Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

    /// x is [c,h,w] or [B,c,h,w]; returns [1,h',w'] or [B,1,h',w'].
    Tensor forward(const Tensor& x, ParamUse use = ParamUse::trainable) const;
    Tensor operator()(const Tensor& x, ParamUse use = ParamUse::trainable) const { return forward(x, use); }

    Discriminator clone() const;
    const DiscriminatorSpec& spec() const { return spec_; }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.scalar_count(); }

private:
    Discriminator() = default;
    DiscriminatorSpec spec_;
    ParameterStore params_;
};

/// Loss the discriminator minimizes given raw scores on real and fake inputs.
///   vanilla:       mean softplus(-D(real)) + mean softplus(D(fake))
///   least_squares: mean (D(real) - 1)^2 + mean D(fake)^2
Tensor discriminator_loss(const Tensor& real_scores, const Tensor& fake_scores, GanMode mode);

/// Non-saturating generator loss: mean softplus(-D(fake)), or mean (D(fake) - 1)^2.
Tensor generator_loss(const Tensor& fake_scores, GanMode mode);

struct AdversarialLosses {
    Tensor d_loss;  // differentiable w.r.t. D only
    Tensor g_loss;  // differentiable w.r.t. G only
};

AdversarialLosses adversarial_losses(const Discriminator& d, const Generator& g, const Tensor& real, const Tensor& input,
                                     GanMode mode);

// Checkpoints: one CRDT file per parameter plus `manifest.csv` with lines
// `role,name,shape,file` (shape dims joined by 'x').

struct CheckpointEntry {
    std::string role;
    const ParameterStore* store;
};

void write_checkpoint(const std::filesystem::path& dir, const std::vector<CheckpointEntry>& entries);
/// Loads every parameter of `role` into store, checking names and shapes.
void read_checkpoint(const std::filesystem::path& dir, const std::string& role, ParameterStore& store);

}  // namespace crd
