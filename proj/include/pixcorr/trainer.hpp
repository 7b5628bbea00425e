#pragma once

#include "pixcorr/losses.hpp"
#include "pixcorr/pseudo.hpp"
#include "pixcorr/sam.hpp"
#include "pixcorr/scenegen.hpp"
#include "pixcorr/segnet.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pixcorr {

struct TrainConfig {
    std::size_t iterations = 6000;
    std::size_t batch_size = 1;
    double base_lr = 0.003;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double poly_power = 0.9;
    std::size_t eval_interval = 500;
    std::uint64_t seed = 1;
    LossConfig loss;
    bool use_conv = true;
    bool use_skip = true;
    std::size_t generation = 1;
    NetConfig net;
    // Stop (with a resumable state snapshot) after this many steps; 0 runs to
    // completion. Resuming the same run directory continues the schedule.
    std::size_t stop_after = 0;

    void validate() const;
};

// lr = base * (1 - step/iterations)^power
double poly_lr(std::size_t step, const TrainConfig& cfg);

// v <- momentum*v + g + weight_decay*p;  p <- p - lr*v
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay);
    void zero_grad();
    void step(double lr);

    const std::vector<Tensor>& params() const { return params_; }
    std::vector<std::vector<double>>& velocity() { return velocity_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    double momentum_, weight_decay_;
};

struct PhaseOutcome {
    double best_miou = 0.0;
    std::size_t best_step = 0;
    bool completed = true; // false when stopped early by stop_after
};

// Phase A: jointly trains a throwaway network and the SAM on labeled source
// images, minimizing source CE computed on the module's (skip) output. Only
// the SAM survives; it is saved at the last step.
SamModule train_sam(const Dataset& source_train, const Dataset& source_eval,
                    const TrainConfig& cfg, const std::string& run_dir,
                    PhaseOutcome* outcome = nullptr);

// "No Pseudo" bootstrap: source-CE-only training of a fresh network,
// evaluated on the target eval split; returns the best checkpoint.
SegNet train_source_only(const Dataset& source_train, const Dataset& target_eval,
                         const TrainConfig& cfg, const std::string& run_dir,
                         PhaseOutcome* outcome = nullptr);

// Phase B: domain-adaptive training of a fresh network with a frozen SAM and
// precomputed pseudo labels. One source and one target sample per iteration.
// Returns the best-mIoU checkpoint.
SegNet adapt(const Dataset& source_train, const Dataset& target_train,
             const Dataset& target_eval, const SamModule& sam, const PseudoStore& pseudo,
             const TrainConfig& cfg, const std::string& run_dir,
             PhaseOutcome* outcome = nullptr);

struct VariantSpec {
    std::string name;
    LossConfig loss;
    bool use_conv = true;
    bool use_skip = true;
};

// pseudo-only | ours | ours-zpp-both | ours-zp-target | no-conv | no-skip
VariantSpec resolve_variant(const std::string& name, const LossConfig& base);

struct GenerationRow {
    std::size_t gen = 0;
    std::string variant;
    double miou = 0.0;
    double pseudo_coverage = 0.0;
};

struct GenerationLoopResult {
    double no_pseudo_miou = 0.0;
    std::vector<GenerationRow> rows;
};

struct ProtocolConfig {
    TrainConfig sam;   // phase A settings
    TrainConfig adapt; // phase B settings (loss holds the "ours" profile)
    std::size_t gens = 3;
    std::vector<std::string> variants = {"pseudo-only", "ours"};
};

// Full protocol: SAM trained once per needed architecture, a "No Pseudo"
// bootstrap whose pseudo labels seed generation 1 of every variant, then
// per-variant self-training chains. Writes table.csv and no_pseudo.csv.
GenerationLoopResult run_generation_loop(const Dataset& source_train, const Dataset& source_eval,
                                         const Dataset& target_train, const Dataset& target_eval,
                                         const ProtocolConfig& proto, const std::string& out_dir);

} // namespace pixcorr
