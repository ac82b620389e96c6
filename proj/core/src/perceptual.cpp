#include "crd/perceptual.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "crd/ops.hpp"
#include "crd/tensor_io.hpp"

namespace crd {

FeatureExtractor::FeatureExtractor(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("FeatureExtractor: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto& l = layers_[i];
        if (l.weight.rank() != 4) throw std::invalid_argument("FeatureExtractor: layer " + l.name + " weight must be rank 4");
        if (i > 0 && l.weight.dim(1) != layers_[i - 1].weight.dim(0)) {
            throw std::invalid_argument("FeatureExtractor: layer " + l.name + " input channels do not chain");
        }
        l.weight.set_requires_grad(false);
        if (l.bias) l.bias->set_requires_grad(false);
    }
}

FeatureExtractor FeatureExtractor::random(std::size_t in_channels, std::uint64_t seed, const std::vector<std::size_t>& widths,
                                          bool with_bias) {
    std::mt19937_64 rng(seed);
    std::vector<Layer> layers;
    std::size_t in = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::size_t out = widths[i];
        const double fan_in = static_cast<double>(in * 9);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        std::vector<double> w(out * in * 9);
        for (auto& v : w) v = dist(rng);
        Layer layer;
        layer.name = "conv" + std::to_string(i);
        layer.weight = Tensor::from({out, in, 3, 3}, std::move(w));
        if (with_bias) {
            std::normal_distribution<double> bdist(0.0, 0.1);
            std::vector<double> b(out);
            for (auto& v : b) v = bdist(rng);
            layer.bias = Tensor::from({out}, std::move(b));
        }
        layers.push_back(std::move(layer));
        in = out;
    }
    return FeatureExtractor(std::move(layers));
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.txt").string());
    std::vector<Layer> layers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string name, weight_file, bias_file, stride, padding;
        if (!std::getline(ss, name, ',') || !std::getline(ss, weight_file, ',') || !std::getline(ss, bias_file, ',') ||
            !std::getline(ss, stride, ',') || !std::getline(ss, padding)) {
            throw std::runtime_error("extractor manifest line " + std::to_string(line_no) + ": expected 5 fields");
        }
        Layer layer;
        layer.name = name;
        layer.weight = load_tensor(dir / weight_file);
        if (bias_file != "-") layer.bias = load_tensor(dir / bias_file);
        layer.stride = std::stoul(stride);
        layer.padding = std::stoul(padding);
        layers.push_back(std::move(layer));
    }
    return FeatureExtractor(std::move(layers));
}

void FeatureExtractor::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
    for (const auto& l : layers_) {
        const std::string wfile = l.name + ".weight.crdt";
        save_tensor(dir / wfile, l.weight);
        std::string bfile = "-";
        if (l.bias) {
            bfile = l.name + ".bias.crdt";
            save_tensor(dir / bfile, *l.bias);
        }
        manifest << l.name << ',' << wfile << ',' << bfile << ',' << l.stride << ',' << l.padding << '\n';
    }
}

std::size_t FeatureExtractor::in_channels() const { return layers_.front().weight.dim(1); }

std::vector<Tensor> FeatureExtractor::extract(const Tensor& x) const {
    if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("extract: expected [c,h,w] or [B,c,h,w], got " + shape_str(x.shape()));
    const bool batched = x.rank() == 4;
    Tensor h = batched ? x : x.reshape({1, x.dim(0), x.dim(1), x.dim(2)});
    if (h.dim(1) != in_channels()) {
        throw std::invalid_argument("extract: input has " + std::to_string(h.dim(1)) + " channels, extractor expects " +
                                    std::to_string(in_channels()));
    }
    std::vector<Tensor> taps;
    taps.reserve(layers_.size());
    for (const auto& l : layers_) {
        h = leaky_relu(conv2d(h, l.weight, l.bias, l.stride, l.padding), 0.2);
        taps.push_back(batched ? h : h.reshape({h.dim(1), h.dim(2), h.dim(3)}));
    }
    return taps;
}

std::vector<Shape> FeatureExtractor::tap_shapes(std::size_t c, std::size_t h, std::size_t w) const {
    std::vector<Shape> shapes;
    for (const auto& l : layers_) {
        const std::size_t k = l.weight.dim(2);
        if (k > h + 2 * l.padding || k > w + 2 * l.padding) {
            throw std::invalid_argument("extractor layer " + l.name + " does not fit a " + std::to_string(h) + "x" +
                                        std::to_string(w) + " input");
        }
        c = l.weight.dim(0);
        h = (h + 2 * l.padding - k) / l.stride + 1;
        w = (w + 2 * l.padding - l.weight.dim(3)) / l.stride + 1;
        shapes.push_back({c, h, w});
    }
    return shapes;
}

std::vector<Tensor> extract(const Tensor& x, const FeatureExtractor& extractor) { return extractor.extract(x); }

Tensor perceptual_loss(const Tensor& teacher_out, const Tensor& student_out, const FeatureExtractor& extractor,
                       const std::vector<std::size_t>& taps) {
    if (teacher_out.shape() != student_out.shape()) {
        throw std::invalid_argument("perceptual_loss: teacher shape " + shape_str(teacher_out.shape()) + " vs student shape " +
                                    shape_str(student_out.shape()));
    }
    std::vector<Tensor> t_acts;
    {
        NoGradGuard guard;
        t_acts = extractor.extract(detach(teacher_out));
    }
    const std::vector<Tensor> s_acts = extractor.extract(student_out);
    std::vector<std::size_t> selected = taps;
    if (selected.empty()) {
        for (std::size_t j = 0; j < s_acts.size(); ++j) selected.push_back(j);
    }
    const double batch = student_out.rank() == 4 ? static_cast<double>(student_out.dim(0)) : 1.0;
    Tensor total;
    for (auto j : selected) {
        if (j >= s_acts.size()) throw std::out_of_range("perceptual_loss: tap " + std::to_string(j) + " out of range");
        // mean over the batch of (1 / C H W) * L1
        Tensor feature = mean(abs(t_acts[j] - s_acts[j]));
        Tensor style = sum(abs(gram(t_acts[j]) - gram(s_acts[j]))) / batch;
        Tensor term = feature + style;
        total = total.defined() ? total + term : term;
    }
    return total;
}

}  // namespace crd
