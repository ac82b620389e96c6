#include "crd/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crd {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'R', 'D', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("tensor file truncated");
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kMagic.data(), kMagic.size());
    out.put(static_cast<char>(kTensorFileVersion));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!out) throw std::runtime_error("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw std::runtime_error("not a CRDT tensor file");
    const int version = in.get();
    if (version != kTensorFileVersion) {
        throw std::runtime_error("unsupported CRDT version " + std::to_string(version));
    }
    const std::uint32_t rank = get_u32(in);
    if (rank > 8) throw std::runtime_error("CRDT rank " + std::to_string(rank) + " too large");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
    return Tensor::from(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return read_tensor(in);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    std::ostringstream os(std::ios::binary);
    write_tensor(os, t);
    const std::string s = os.str();
    return {s.begin(), s.end()};
}

}  // namespace crd
