#include "pixcorr/sam.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/rng.hpp"

#include <cmath>

namespace pixcorr {

SamModule SamModule::init(std::size_t classes, std::uint64_t seed, bool use_conv, bool use_skip) {
    if (classes < 2) throw ConfigError("SAM needs at least 2 classes");
    SamModule sam;
    sam.classes = classes;
    sam.use_conv = use_conv;
    sam.use_skip = use_skip;
    if (use_conv) {
        Rng rng(derive_seed(seed, "sam-init"));
        double bound = std::sqrt(6.0 / static_cast<double>(classes));
        std::vector<double> w(classes * classes);
        for (double& v : w) v = rng.uniform(-bound, bound);
        sam.weight = Tensor::from_data({classes, classes}, std::move(w), true);
        sam.bias = Tensor::zeros({classes}, true);
    }
    return sam;
}

std::vector<Tensor> SamModule::parameters() const {
    if (!use_conv) return {};
    return {weight, bias};
}

void SamModule::freeze() {
    frozen = true;
    if (use_conv) {
        weight.set_requires_grad(false);
        bias.set_requires_grad(false);
    }
}

void SamModule::unfreeze() {
    frozen = false;
    if (use_conv) {
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }
}

Checkpoint SamModule::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.set("kind", "sam");
    ckpt.set_int("classes", static_cast<long long>(classes));
    ckpt.set_int("use_conv", use_conv ? 1 : 0);
    ckpt.set_int("use_skip", use_skip ? 1 : 0);
    if (use_conv) {
        ckpt.tensors.push_back(weight);
        ckpt.tensors.push_back(bias);
    }
    return ckpt;
}

SamModule SamModule::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.get("kind") != "sam")
        throw FormatError("checkpoint kind is not sam: " + ckpt.get("kind"));
    std::size_t classes = static_cast<std::size_t>(ckpt.get_int("classes"));
    bool use_conv = ckpt.get_int("use_conv") != 0;
    bool use_skip = ckpt.get_int("use_skip") != 0;
    SamModule sam = SamModule::init(classes, 0, use_conv, use_skip);
    if (use_conv) {
        if (ckpt.tensors.size() != 2)
            throw FormatError("sam checkpoint needs 2 tensors, has " +
                              std::to_string(ckpt.tensors.size()));
        if (ckpt.tensors[0].shape() != Shape{classes, classes} ||
            ckpt.tensors[1].shape() != Shape{classes})
            throw FormatError("sam checkpoint tensor shapes do not match class count " +
                              std::to_string(classes));
        sam.weight.data() = ckpt.tensors[0].data();
        sam.bias.data() = ckpt.tensors[1].data();
    }
    return sam;
}

Tensor cosine_map(const Tensor& rows) {
    if (rows.rank() != 2)
        throw DimensionError("cosine_map expects [n,C], got " + shape_str(rows.shape()));
    Tensor gram = matmul(rows, transpose(rows));
    Tensor norms = row_l2_norm(rows);
    Tensor denom = add_scalar(outer(norms, norms), kNormEps);
    return div(gram, denom);
}

Tensor normalize_map(const Tensor& m) { return row_l1_normalize(relu(m)); }

SamOutput attend(const SamModule& sam, const Tensor& z_rows) {
    if (z_rows.rank() != 2 || z_rows.shape()[1] != sam.classes)
        throw DimensionError("attend expects [hw," + std::to_string(sam.classes) + "], got " +
                             shape_str(z_rows.shape()));
    Tensor a = z_rows;
    if (sam.use_conv) a = add_row_vector(matmul(z_rows, transpose(sam.weight)), sam.bias);

    SamOutput out;
    out.map = normalize_map(cosine_map(a));
    out.attended = matmul(out.map, z_rows);
    out.skip = sam.use_skip ? add(z_rows, out.attended) : out.attended;
    return out;
}

} // namespace pixcorr
