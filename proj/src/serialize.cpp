#include "pixcorr/serialize.hpp"

#include "pixcorr/errors.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pixcorr {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("tensor stream truncated while reading u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw FormatError("tensor stream truncated while reading u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || magic[0] != 'P' || magic[1] != 'C' || magic[2] != 'T' ||
        magic[3] != '1')
        throw FormatError("bad tensor magic, expected PCT1");
    std::uint32_t rank = get_u32(in);
    if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " implausible");
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<std::size_t>(get_u64(in));
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(in));
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    write_tensor(out, t);
    if (!out) throw FormatError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path);
    return read_tensor(in);
}

void Checkpoint::set_int(const std::string& key, long long value) {
    manifest[key] = std::to_string(value);
}

void Checkpoint::set_double(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    manifest[key] = buf;
}

std::string Checkpoint::get(const std::string& key) const {
    auto it = manifest.find(key);
    if (it == manifest.end()) throw FormatError("checkpoint manifest missing key: " + key);
    return it->second;
}

long long Checkpoint::get_int(const std::string& key) const { return std::stoll(get(key)); }

double Checkpoint::get_double(const std::string& key) const { return std::stod(get(key)); }

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << "pixcorr-ckpt v1\n";
    for (const auto& [k, v] : ckpt.manifest) out << k << "=" << v << "\n";
    out << "tensors " << ckpt.tensors.size() << "\n";
    for (const Tensor& t : ckpt.tensors) write_tensor(out, t);
    if (!out) throw FormatError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "pixcorr-ckpt v1")
        throw FormatError("bad checkpoint header in " + path);
    Checkpoint ckpt;
    std::size_t n_tensors = 0;
    while (std::getline(in, line)) {
        if (line.rfind("tensors ", 0) == 0) {
            n_tensors = static_cast<std::size_t>(std::stoull(line.substr(8)));
            break;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("bad manifest line in " + path + ": " + line);
        ckpt.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
    ckpt.tensors.reserve(n_tensors);
    for (std::size_t i = 0; i < n_tensors; ++i) ckpt.tensors.push_back(read_tensor(in));
    return ckpt;
}

} // namespace pixcorr
