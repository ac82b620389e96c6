#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "crd/content.hpp"
#include "crd/dataset.hpp"
#include "crd/models.hpp"
#include "crd/relation.hpp"

namespace crd {

enum class DiscriminatorMode {
    online_updating_freezing,
    online_always_updating,
    online_no_discriminator,
    pretrained_frozen,
    pretrained_updating,
};

std::string_view to_string(DiscriminatorMode mode);
DiscriminatorMode parse_discriminator_mode(std::string_view name);

enum class LrSchedule {
    half_constant,  // lr0 for the first half, then linear to zero
    linear,         // linear to zero from the start
};

std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 100;
    double lr0 = 2e-4;
    LrSchedule lr_schedule = LrSchedule::half_constant;
    std::size_t batch_size = 1;
    double lambda_crd = 25.0;
    double lambda_per = 1.0;
    RelationConfig relation;
    PatchDims patch{8, 8};
    std::size_t teacher_eval_interval = 10;  // in steps
    GanMode gan_mode = GanMode::least_squares;
    std::uint64_t seed = 0;
    DiscriminatorMode discriminator_mode = DiscriminatorMode::online_updating_freezing;
    bool distill_from_live = false;
    double recon_weight = 10.0;  // teacher L1 reconstruction weight on paired tasks

    TaskKind task = TaskKind::invert;
    std::size_t image_size = 32;
    std::size_t train_count = 100;
    std::size_t val_count = 8;

    std::size_t teacher_base_width = 32;
    double student_width_factor = 0.25;
    std::size_t num_res_blocks = 3;
    std::size_t disc_layers = 3;
    std::size_t disc_base_width = 32;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    std::size_t sample_count = 4;

    /// Throws std::invalid_argument naming the first offending key.
    void validate() const;

    std::size_t steps_per_epoch() const;
    std::size_t total_steps() const { return epochs * steps_per_epoch(); }
    SyntheticTask synthetic_task() const;
    GeneratorSpec teacher_spec() const;
    GeneratorSpec student_spec() const;
    DiscriminatorSpec discriminator_spec() const;
};

/// Every recognized key, in file order.
const std::vector<std::string>& config_keys();

/// Parses flat UTF-8 `key = value` lines; '#' starts a comment. Keys not set
/// keep their defaults. Unknown keys and malformed values raise
/// std::invalid_argument with the line number.
TrainConfig parse_config_text(std::string_view text);
TrainConfig parse_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Writes every key so that parse_config_text(write) reproduces cfg.
void write_config(std::ostream& out, const TrainConfig& cfg);
std::string config_to_string(const TrainConfig& cfg);

}  // namespace crd
