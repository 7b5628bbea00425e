#pragma once

#include "pixcorr/serialize.hpp"
#include "pixcorr/tensor.hpp"

#include <cstdint>
#include <vector>

namespace pixcorr {

// Self-attention module over logit rows: a 1x1 convolution (a per-pixel
// linear map on the class dimension), a ReLU'd row-normalized cosine
// similarity map, and a skip connection.
struct SamModule {
    Tensor weight; // [C,C], row = output channel; undefined when !use_conv
    Tensor bias;   // [C]
    std::size_t classes = 0;
    bool use_conv = true;  // "No Conv" ablation when false
    bool use_skip = true;  // "No skip-connection" ablation when false
    bool frozen = false;

    static SamModule init(std::size_t classes, std::uint64_t seed, bool use_conv = true,
                          bool use_skip = true);

    // Trainable parameters; empty for the no-conv variant.
    std::vector<Tensor> parameters() const;

    void freeze();
    void unfreeze();

    Checkpoint to_checkpoint() const;
    static SamModule from_checkpoint(const Checkpoint& ckpt);
};

// Row-cosine similarity: M[i,j] = <a_i,a_j> / (|a_i||a_j| + eps). Symmetric,
// entries in [-1,1] up to the epsilon, differentiable.
Tensor cosine_map(const Tensor& rows);

// Entrywise ReLU then per-row L1 normalization. Rows that are all zero after
// the ReLU stay all zero.
Tensor normalize_map(const Tensor& m);

struct SamOutput {
    Tensor attended; // z' = M' z
    Tensor skip;     // z'' = z + z', or z' itself when use_skip is false
    Tensor map;      // M'
};

// z_rows is [hw,C] (caller flattens row-major over the spatial grid).
SamOutput attend(const SamModule& sam, const Tensor& z_rows);

} // namespace pixcorr
