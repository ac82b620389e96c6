#include "crd/models.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "crd/ops.hpp"
#include "crd/tensor_io.hpp"

namespace crd {

std::string_view to_string(GanMode mode) { return mode == GanMode::vanilla ? "vanilla" : "least_squares"; }

GanMode parse_gan_mode(std::string_view name) {
    if (name == "vanilla") return GanMode::vanilla;
    if (name == "least_squares") return GanMode::least_squares;
    throw std::invalid_argument("unknown gan mode '" + std::string(name) + "'");
}

Tensor& ParameterStore::add(std::string name, Tensor t) {
    for (const auto& e : entries_) {
        if (e.name == name) throw std::invalid_argument("duplicate parameter " + name);
    }
    t.set_requires_grad(true);
    entries_.push_back({std::move(name), std::move(t)});
    return entries_.back().tensor;
}

const Tensor& ParameterStore::get(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw std::out_of_range("no parameter named " + std::string(name));
}

Tensor ParameterStore::use(std::string_view name, ParamUse mode) const {
    const Tensor& t = get(name);
    return mode == ParamUse::frozen ? detach(t) : t;
}

std::vector<Tensor> ParameterStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
    if (other.entries_.size() != entries_.size()) throw std::invalid_argument("copy_values_from: layouts differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i].tensor;
        const auto& src = other.entries_[i].tensor;
        if (entries_[i].name != other.entries_[i].name || dst.shape() != src.shape()) {
            throw std::invalid_argument("copy_values_from: parameter " + entries_[i].name + " differs");
        }
        auto d = dst.mutable_data();
        std::copy(src.data().begin(), src.data().end(), d.begin());
    }
}

ParameterStore ParameterStore::deep_copy() const {
    ParameterStore copy;
    for (const auto& e : entries_) copy.add(e.name, e.tensor.clone());
    return copy;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterStore::clear_grad() {
    for (auto& e : entries_) e.tensor.clear_grad();
}

namespace {

Tensor init_weight(std::mt19937_64& rng, Shape shape) {
    std::normal_distribution<double> dist(0.0, 0.02);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(values));
}

void add_conv(ParameterStore& store, std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out,
              std::size_t k) {
    store.add(name + ".weight", init_weight(rng, {out, in, k, k}));
    store.add(name + ".bias", Tensor::zeros({out}));
}

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

// Lifts [c,h,w] to [1,c,h,w]; returns whether it did.
bool as_batch(const Tensor& x, Tensor& out) {
    if (x.rank() == 4) {
        out = x;
        return false;
    }
    if (x.rank() == 3) {
        out = x.reshape({1, x.dim(0), x.dim(1), x.dim(2)});
        return true;
    }
    throw std::invalid_argument("expected [c,h,w] or [B,c,h,w] input, got " + shape_str(x.shape()));
}

}  // namespace

std::array<std::size_t, 3> GeneratorSpec::widths() const {
    std::array<std::size_t, 3> w{};
    for (std::size_t i = 0; i < 3; ++i) {
        const double scaled = std::round(static_cast<double>(base_width << i) * width_factor);
        if (scaled < 1.0) {
            throw std::invalid_argument("generator width " + std::to_string(base_width << i) + " x " +
                                        std::to_string(width_factor) + " rounds to zero");
        }
        w[i] = static_cast<std::size_t>(scaled);
    }
    return w;
}

std::size_t generator_parameter_count(const GeneratorSpec& spec) {
    const auto [w1, w2, w4] = spec.widths();
    std::size_t n = conv_params(spec.in_channels, w1, 7);
    n += conv_params(w1, w2, 3) + conv_params(w2, w4, 3);
    n += spec.num_res_blocks * 2 * conv_params(w4, w4, 3);
    n += conv_params(w4, w2, 3) + conv_params(w2, w1, 3);
    n += conv_params(w1, spec.out_channels, 7);
    return n;
}

Generator::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.in_channels == 0 || spec.out_channels == 0) throw std::invalid_argument("generator channels must be positive");
    if (!(spec.width_factor > 0.0)) throw std::invalid_argument("generator width_factor must be positive");
    const auto [w1, w2, w4] = spec.widths();
    std::mt19937_64 rng(seed);
    add_conv(params_, rng, "stem", spec.in_channels, w1, 7);
    add_conv(params_, rng, "down1", w1, w2, 3);
    add_conv(params_, rng, "down2", w2, w4, 3);
    for (std::size_t r = 0; r < spec.num_res_blocks; ++r) {
        add_conv(params_, rng, "res" + std::to_string(r) + ".conv1", w4, w4, 3);
        add_conv(params_, rng, "res" + std::to_string(r) + ".conv2", w4, w4, 3);
    }
    add_conv(params_, rng, "up1", w4, w2, 3);
    add_conv(params_, rng, "up2", w2, w1, 3);
    add_conv(params_, rng, "head", w1, spec.out_channels, 7);
}

Tensor Generator::conv(const Tensor& x, const std::string& name, std::size_t stride, std::size_t padding, ParamUse use) const {
    return conv2d(x, params_.use(name + ".weight", use), params_.use(name + ".bias", use), stride, padding);
}

Tensor Generator::forward(const Tensor& x, ParamUse use) const {
    Tensor h;
    const bool lifted = as_batch(x, h);
    if (h.dim(1) != spec_.in_channels) {
        throw std::invalid_argument("generator expects " + std::to_string(spec_.in_channels) + " channels, got " +
                                    shape_str(x.shape()));
    }
    if (h.dim(2) % 4 != 0 || h.dim(3) % 4 != 0) {
        throw std::invalid_argument("generator input " + shape_str(x.shape()) + " needs spatial dims divisible by 4");
    }
    h = relu(instance_norm(conv(h, "stem", 1, 3, use)));
    h = relu(instance_norm(conv(h, "down1", 2, 1, use)));
    h = relu(instance_norm(conv(h, "down2", 2, 1, use)));
    for (std::size_t r = 0; r < spec_.num_res_blocks; ++r) {
        const std::string prefix = "res" + std::to_string(r);
        Tensor y = relu(instance_norm(conv(h, prefix + ".conv1", 1, 1, use)));
        y = instance_norm(conv(y, prefix + ".conv2", 1, 1, use));
        h = h + y;
    }
    h = relu(instance_norm(conv(upsample_nearest(h, 2), "up1", 1, 1, use)));
    h = relu(instance_norm(conv(upsample_nearest(h, 2), "up2", 1, 1, use)));
    h = tanh(conv(h, "head", 1, 3, use));
    return lifted ? h.reshape({h.dim(1), h.dim(2), h.dim(3)}) : h;
}

Generator Generator::clone() const {
    Generator copy;
    copy.spec_ = spec_;
    copy.params_ = params_.deep_copy();
    return copy;
}

Discriminator::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.num_layers == 0 || spec.base_width == 0 || spec.in_channels == 0) {
        throw std::invalid_argument("discriminator spec fields must be positive");
    }
    std::mt19937_64 rng(seed);
    std::size_t in = spec.in_channels;
    for (std::size_t i = 0; i < spec.num_layers; ++i) {
        const bool last = i + 1 == spec.num_layers;
        const std::size_t out = last ? 1 : spec.base_width * (std::size_t{1} << std::min<std::size_t>(i, 3));
        add_conv(params_, rng, "layer" + std::to_string(i), in, out, 4);
        in = out;
    }
}

Tensor Discriminator::forward(const Tensor& x, ParamUse use) const {
    Tensor h;
    const bool lifted = as_batch(x, h);
    if (h.dim(1) != spec_.in_channels) {
        throw std::invalid_argument("discriminator expects " + std::to_string(spec_.in_channels) + " channels, got " +
                                    shape_str(x.shape()));
    }
    for (std::size_t i = 0; i < spec_.num_layers; ++i) {
        if (h.dim(2) + 2 < 4 || h.dim(3) + 2 < 4) {
            throw std::invalid_argument("discriminator input " + shape_str(x.shape()) + " smaller than its receptive field");
        }
        const std::string name = "layer" + std::to_string(i);
        h = conv2d(h, params_.use(name + ".weight", use), params_.use(name + ".bias", use), 2, 1);
        if (i + 1 < spec_.num_layers) h = leaky_relu(h, 0.2);
    }
    return lifted ? h.reshape({h.dim(1), h.dim(2), h.dim(3)}) : h;
}

Discriminator Discriminator::clone() const {
    Discriminator copy;
    copy.spec_ = spec_;
    copy.params_ = params_.deep_copy();
    return copy;
}

Tensor discriminator_loss(const Tensor& real_scores, const Tensor& fake_scores, GanMode mode) {
    if (mode == GanMode::vanilla) return mean(softplus(-real_scores)) + mean(softplus(fake_scores));
    return mean(square(real_scores - 1.0)) + mean(square(fake_scores));
}

Tensor generator_loss(const Tensor& fake_scores, GanMode mode) {
    if (mode == GanMode::vanilla) return mean(softplus(-fake_scores));
    return mean(square(fake_scores - 1.0));
}

AdversarialLosses adversarial_losses(const Discriminator& d, const Generator& g, const Tensor& real, const Tensor& input,
                                     GanMode mode) {
    const Tensor fake = g(input);
    AdversarialLosses out;
    out.d_loss = discriminator_loss(d(real), d(detach(fake)), mode);
    out.g_loss = generator_loss(d(fake, ParamUse::frozen), mode);
    return out;
}

void write_checkpoint(const std::filesystem::path& dir, const std::vector<CheckpointEntry>& entries) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
    manifest << "role,name,shape,file\n";
    for (const auto& entry : entries) {
        for (const auto& p : entry.store->entries()) {
            const std::string file = entry.role + "." + p.name + ".crdt";
            save_tensor(dir / file, p.tensor);
            std::string shape;
            for (std::size_t i = 0; i < p.tensor.rank(); ++i) shape += (i ? "x" : "") + std::to_string(p.tensor.dim(i));
            manifest << entry.role << ',' << p.name << ',' << shape << ',' << file << '\n';
        }
    }
    if (!manifest) throw std::runtime_error("failed writing " + (dir / "manifest.csv").string());
}

void read_checkpoint(const std::filesystem::path& dir, const std::string& role, ParameterStore& store) {
    std::ifstream manifest(dir / "manifest.csv");
    if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.csv").string());
    std::map<std::string, std::string> files;
    std::string line;
    std::getline(manifest, line);  // header
    while (std::getline(manifest, line)) {
        std::stringstream ss(line);
        std::string r, name, shape, file;
        std::getline(ss, r, ',');
        std::getline(ss, name, ',');
        std::getline(ss, shape, ',');
        std::getline(ss, file);
        if (r == role) files[name] = file;
    }
    for (auto& p : store.entries()) {
        auto it = files.find(p.name);
        if (it == files.end()) throw std::runtime_error("checkpoint " + dir.string() + " lacks " + role + "." + p.name);
        const Tensor loaded = load_tensor(dir / it->second);
        if (loaded.shape() != p.tensor.shape()) {
            throw std::runtime_error("checkpoint " + role + "." + p.name + " has shape " + shape_str(loaded.shape()) +
                                     ", model expects " + shape_str(p.tensor.shape()));
        }
        auto d = p.tensor.mutable_data();
        std::copy(loaded.data().begin(), loaded.data().end(), d.begin());
    }
}

}  // namespace crd
