#include "crd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace crd {

std::string_view to_string(DiscriminatorMode mode) {
    switch (mode) {
        case DiscriminatorMode::online_updating_freezing: return "online_updating_freezing";
        case DiscriminatorMode::online_always_updating: return "online_always_updating";
        case DiscriminatorMode::online_no_discriminator: return "online_no_discriminator";
        case DiscriminatorMode::pretrained_frozen: return "pretrained_frozen";
        case DiscriminatorMode::pretrained_updating: return "pretrained_updating";
    }
    return "?";
}

DiscriminatorMode parse_discriminator_mode(std::string_view name) {
    for (auto m : {DiscriminatorMode::online_updating_freezing, DiscriminatorMode::online_always_updating,
                   DiscriminatorMode::online_no_discriminator, DiscriminatorMode::pretrained_frozen,
                   DiscriminatorMode::pretrained_updating}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown discriminator mode '" + std::string(name) + "'");
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::half_constant ? "half_constant" : "linear"; }

LrSchedule parse_lr_schedule(std::string_view name) {
    if (name == "half_constant") return LrSchedule::half_constant;
    if (name == "linear") return LrSchedule::linear;
    throw std::invalid_argument("unknown lr schedule '" + std::string(name) + "'");
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("expected a real number, got '" + std::string(s) + "'");
    return v;
}

std::uint64_t parse_unsigned(std::string_view s) {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) {
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

struct Field {
    std::string key;
    std::function<void(TrainConfig&, std::string_view)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field size_field(std::string key, T TrainConfig::*member) {
    return {key, [member](TrainConfig& c, std::string_view v) { c.*member = static_cast<T>(parse_unsigned(v)); },
            [member](const TrainConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(std::string key, double TrainConfig::*member) {
    return {key, [member](TrainConfig& c, std::string_view v) { c.*member = parse_double(v); },
            [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field bool_field(std::string key, bool TrainConfig::*member) {
    return {key, [member](TrainConfig& c, std::string_view v) { c.*member = parse_bool(v); },
            [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(size_field("epochs", &TrainConfig::epochs));
        f.push_back(real_field("lr0", &TrainConfig::lr0));
        f.push_back({"lr_schedule", [](TrainConfig& c, std::string_view v) { c.lr_schedule = parse_lr_schedule(v); },
                     [](const TrainConfig& c) { return std::string(to_string(c.lr_schedule)); }});
        f.push_back(size_field("batch_size", &TrainConfig::batch_size));
        f.push_back(real_field("lambda_crd", &TrainConfig::lambda_crd));
        f.push_back(real_field("lambda_per", &TrainConfig::lambda_per));
        f.push_back({"lambda_a", [](TrainConfig& c, std::string_view v) { c.relation.lambda_a = parse_double(v); },
                     [](const TrainConfig& c) { return format_double(c.relation.lambda_a); }});
        f.push_back({"pair_budget", [](TrainConfig& c, std::string_view v) { c.relation.pair_budget = parse_unsigned(v); },
                     [](const TrainConfig& c) { return std::to_string(c.relation.pair_budget); }});
        f.push_back({"triplet_budget", [](TrainConfig& c, std::string_view v) { c.relation.triplet_budget = parse_unsigned(v); },
                     [](const TrainConfig& c) { return std::to_string(c.relation.triplet_budget); }});
        f.push_back({"epsilon", [](TrainConfig& c, std::string_view v) { c.relation.epsilon = parse_double(v); },
                     [](const TrainConfig& c) { return format_double(c.relation.epsilon); }});
        f.push_back({"use_columns", [](TrainConfig& c, std::string_view v) { c.relation.use_columns = parse_bool(v); },
                     [](const TrainConfig& c) { return std::string(c.relation.use_columns ? "true" : "false"); }});
        f.push_back({"use_rows", [](TrainConfig& c, std::string_view v) { c.relation.use_rows = parse_bool(v); },
                     [](const TrainConfig& c) { return std::string(c.relation.use_rows ? "true" : "false"); }});
        f.push_back({"use_patches", [](TrainConfig& c, std::string_view v) { c.relation.use_patches = parse_bool(v); },
                     [](const TrainConfig& c) { return std::string(c.relation.use_patches ? "true" : "false"); }});
        f.push_back({"angle_patches_only", [](TrainConfig& c, std::string_view v) { c.relation.angle_patches_only = parse_bool(v); },
                     [](const TrainConfig& c) { return std::string(c.relation.angle_patches_only ? "true" : "false"); }});
        f.push_back({"patch_n", [](TrainConfig& c, std::string_view v) { c.patch.n = parse_unsigned(v); },
                     [](const TrainConfig& c) { return std::to_string(c.patch.n); }});
        f.push_back({"patch_m", [](TrainConfig& c, std::string_view v) { c.patch.m = parse_unsigned(v); },
                     [](const TrainConfig& c) { return std::to_string(c.patch.m); }});
        f.push_back(size_field("teacher_eval_interval", &TrainConfig::teacher_eval_interval));
        f.push_back({"gan_mode", [](TrainConfig& c, std::string_view v) { c.gan_mode = parse_gan_mode(v); },
                     [](const TrainConfig& c) { return std::string(to_string(c.gan_mode)); }});
        f.push_back(size_field("seed", &TrainConfig::seed));
        f.push_back({"discriminator_mode",
                     [](TrainConfig& c, std::string_view v) { c.discriminator_mode = parse_discriminator_mode(v); },
                     [](const TrainConfig& c) { return std::string(to_string(c.discriminator_mode)); }});
        f.push_back(bool_field("distill_from_live", &TrainConfig::distill_from_live));
        f.push_back(real_field("recon_weight", &TrainConfig::recon_weight));
        f.push_back({"task", [](TrainConfig& c, std::string_view v) { c.task = parse_task(v); },
                     [](const TrainConfig& c) { return std::string(to_string(c.task)); }});
        f.push_back(size_field("image_size", &TrainConfig::image_size));
        f.push_back(size_field("train_count", &TrainConfig::train_count));
        f.push_back(size_field("val_count", &TrainConfig::val_count));
        f.push_back(size_field("teacher_base_width", &TrainConfig::teacher_base_width));
        f.push_back(real_field("student_width_factor", &TrainConfig::student_width_factor));
        f.push_back(size_field("num_res_blocks", &TrainConfig::num_res_blocks));
        f.push_back(size_field("disc_layers", &TrainConfig::disc_layers));
        f.push_back(size_field("disc_base_width", &TrainConfig::disc_base_width));
        f.push_back(real_field("adam_beta1", &TrainConfig::adam_beta1));
        f.push_back(real_field("adam_beta2", &TrainConfig::adam_beta2));
        f.push_back(size_field("sample_count", &TrainConfig::sample_count));
        return f;
    }();
    return table;
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw std::invalid_argument(key + ": " + why); };
    if (epochs < 1) fail("epochs", "must be at least 1");
    if (!(lr0 >= 0.0)) fail("lr0", "must be non-negative");
    if (batch_size < 1) fail("batch_size", "must be at least 1");
    if (!(lambda_crd >= 0.0)) fail("lambda_crd", "must be non-negative");
    if (!(lambda_per >= 0.0)) fail("lambda_per", "must be non-negative");
    if (!(relation.lambda_a >= 0.0)) fail("lambda_a", "must be non-negative");
    if (!(relation.epsilon > 0.0)) fail("epsilon", "must be positive");
    if (!(recon_weight >= 0.0)) fail("recon_weight", "must be non-negative");
    if (teacher_eval_interval < 1) fail("teacher_eval_interval", "must be at least 1");
    if (patch.n < 1) fail("patch_n", "must be at least 1");
    if (patch.m < 1) fail("patch_m", "must be at least 1");
    if (image_size < 8 || image_size % 4 != 0) fail("image_size", "must be a multiple of 4, at least 8");
    if (image_size % patch.n != 0) fail("patch_n", "must divide image_size");
    if (image_size % patch.m != 0) fail("patch_m", "must divide image_size");
    if (train_count < 1) fail("train_count", "must be at least 1");
    if (val_count < 2) fail("val_count", "must be at least 2");
    if (teacher_base_width < 1) fail("teacher_base_width", "must be at least 1");
    if (!(student_width_factor > 0.0)) fail("student_width_factor", "must be positive");
    if (disc_layers < 1) fail("disc_layers", "must be at least 1");
    if (disc_base_width < 1) fail("disc_base_width", "must be at least 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must lie in [0, 1)");
    if (relation.enabled().empty() && lambda_crd > 0.0) fail("use_columns", "all granularities disabled while lambda_crd > 0");
}

std::size_t TrainConfig::steps_per_epoch() const { return (train_count + batch_size - 1) / batch_size; }

SyntheticTask TrainConfig::synthetic_task() const { return {task, image_size, train_count, val_count, seed}; }

GeneratorSpec TrainConfig::teacher_spec() const {
    GeneratorSpec s;
    s.base_width = teacher_base_width;
    s.width_factor = 1.0;
    s.num_res_blocks = num_res_blocks;
    return s;
}

GeneratorSpec TrainConfig::student_spec() const {
    GeneratorSpec s = teacher_spec();
    s.width_factor = student_width_factor;
    return s;
}

DiscriminatorSpec TrainConfig::discriminator_spec() const {
    DiscriminatorSpec s;
    s.num_layers = disc_layers;
    s.base_width = disc_base_width;
    return s;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : fields()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            try {
                f.set(cfg, value);
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument(std::string(key) + ": " + e.what());
            }
            return;
        }
    }
    throw std::invalid_argument("unknown key '" + std::string(key) + "'");
}

TrainConfig parse_config_text(std::string_view text) {
    TrainConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void write_config(std::ostream& out, const TrainConfig& cfg) {
    for (const auto& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
}

std::string config_to_string(const TrainConfig& cfg) {
    std::ostringstream os;
    write_config(os, cfg);
    return os.str();
}

}  // namespace crd
