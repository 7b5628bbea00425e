#pragma once

#include "pixcorr/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pixcorr {

// Binary tensor format: magic "PCT1", u32 rank, u64 dims, raw f64 buffer.
// All fields little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Checkpoint container: a text manifest of key=value lines followed by a
// "tensors <N>" marker and N serialized tensors in declaration order.
struct Checkpoint {
    std::map<std::string, std::string> manifest;
    std::vector<Tensor> tensors;

    void set(const std::string& key, const std::string& value) { manifest[key] = value; }
    void set_int(const std::string& key, long long value);
    void set_double(const std::string& key, double value);
    std::string get(const std::string& key) const; // throws FormatError if absent
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool has(const std::string& key) const { return manifest.count(key) != 0; }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace pixcorr
