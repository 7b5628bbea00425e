#pragma once

#include "pixcorr/losses.hpp"
#include "pixcorr/scenegen.hpp"
#include "pixcorr/segnet.hpp"
#include "pixcorr/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pixcorr {

// Experiment-level configuration, persisted as a flat key=value text file.
// Command-line overrides take precedence over file values.
struct ExperimentConfig {
    // data
    std::string data_dir = "runs/data";
    std::size_t image_size = 32;
    std::size_t classes = 5;
    std::size_t train_per_domain = 200;
    std::size_t eval_per_domain = 50;
    // network
    std::vector<std::size_t> net_widths = {16, 32, 32};
    std::size_t downsample = 4;
    // sam ablations
    bool use_conv = true;
    bool use_skip = true;
    // objective
    LossConfig loss;
    // optimization
    std::size_t iters_sam = 3000;
    std::size_t iters_adapt = 6000;
    std::size_t eval_interval = 500;
    std::size_t batch_size = 1;
    double base_lr = 0.003;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double poly_power = 0.9;
    // run
    std::uint64_t seed = 1;
    std::size_t gens = 3;
    std::string out_dir = "runs";
    std::string variants = "pseudo-only,ours";
    std::size_t stop_after = 0;

    void validate() const;
};

// Throws ConfigError naming any unknown key or unparseable value.
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig load_config_file(const std::string& path);

// Deterministic key-sorted echo; written as <run>/config.resolved.
std::string serialize_config(const ExperimentConfig& cfg);

// Hash of the resolved config with the seed excluded; run directories are
// named <command>-<hash8>-s<seed>.
std::string config_hash8(const ExperimentConfig& cfg);

NetConfig make_net_config(const ExperimentConfig& cfg);
TrainConfig make_sam_train_config(const ExperimentConfig& cfg);
TrainConfig make_adapt_train_config(const ExperimentConfig& cfg);
ProtocolConfig make_protocol_config(const ExperimentConfig& cfg);

// The four dataset splits of one experiment, derived deterministically from
// the config seed. Target ground truth is generated for evaluation; training
// code must not read target_train labels.
struct DataSplits {
    Dataset source_train, source_eval, target_train, target_eval;
};
DataSplits generate_splits(const ExperimentConfig& cfg);

std::vector<std::string> split_csv_list(const std::string& s);

} // namespace pixcorr
