#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "crd/tensor.hpp"

namespace crd {

enum class TaskKind {
    invert,      // paired: target = -input
    blur2sharp,  // paired: input = 3x3 box blur of target
    shapes,      // unpaired: circles domain -> squares domain
};

std::string_view to_string(TaskKind kind);
TaskKind parse_task(std::string_view name);

struct SyntheticTask {
    TaskKind kind = TaskKind::invert;
    std::size_t image_size = 32;
    std::size_t train_count = 100;
    std::size_t val_count = 8;
    std::uint64_t seed = 0;
};

/// Images are [3, s, s] with values in [-1, 1]. For paired tasks targets
/// align with inputs index by index; for unpaired tasks targets form an
/// independent pool from the output domain.
struct Dataset {
    bool paired = true;
    std::vector<Tensor> train_inputs;
    std::vector<Tensor> train_targets;
    std::vector<Tensor> val_inputs;
    std::vector<Tensor> val_targets;
};

/// Deterministic in task.seed; image i draws from its own counter-derived stream.
Dataset generate_dataset(const SyntheticTask& task);

/// Stacks [c,h,w] images into [B,c,h,w].
Tensor stack_images(const std::vector<Tensor>& images);
Tensor stack_images(const std::vector<Tensor>& images, const std::vector<std::size_t>& indices);

/// splitmix64 finalizer of seed combined with a stream counter.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace crd
