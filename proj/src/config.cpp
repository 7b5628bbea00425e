#include "pixcorr/config.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/rng.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pixcorr {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + value);
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        return std::stod(value);
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ConfigError("bad boolean for " + key + ": " + value + " (expected 0/1/true/false)");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

void ExperimentConfig::validate() const {
    if (image_size % downsample != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " not divisible by downsample " + std::to_string(downsample));
    if (classes != kSceneClasses)
        throw ConfigError("classes must be " + std::to_string(kSceneClasses) +
                          " for the synthetic scene grammar");
    if (train_per_domain == 0 || eval_per_domain == 0)
        throw ConfigError("train_per_domain and eval_per_domain must be >= 1");
    if (gens == 0) throw ConfigError("gens must be >= 1");
    make_adapt_train_config(*this).validate();
    make_sam_train_config(*this).validate();
    for (const std::string& v : split_csv_list(variants)) resolve_variant(v, loss);
}

void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data_dir") cfg.data_dir = value;
    else if (key == "image_size") cfg.image_size = parse_size(key, value);
    else if (key == "classes") cfg.classes = parse_size(key, value);
    else if (key == "train_per_domain") cfg.train_per_domain = parse_size(key, value);
    else if (key == "eval_per_domain") cfg.eval_per_domain = parse_size(key, value);
    else if (key == "net_widths") {
        cfg.net_widths.clear();
        for (const std::string& w : split_csv_list(value))
            cfg.net_widths.push_back(parse_size(key, w));
        if (cfg.net_widths.empty()) throw ConfigError("net_widths must name at least one layer");
    } else if (key == "downsample") cfg.downsample = parse_size(key, value);
    else if (key == "use_conv") cfg.use_conv = parse_bool(key, value);
    else if (key == "use_skip") cfg.use_skip = parse_bool(key, value);
    else if (key == "lambda") cfg.loss.lambda = parse_double(key, value);
    else if (key == "att_form") cfg.loss.att_form = parse_att_form(value);
    else if (key == "att_domains") cfg.loss.att_domains = parse_att_domains(value);
    else if (key == "att_metric") cfg.loss.att_metric = parse_att_metric(value);
    else if (key == "iters_sam") cfg.iters_sam = parse_size(key, value);
    else if (key == "iters_adapt") cfg.iters_adapt = parse_size(key, value);
    else if (key == "eval_interval") cfg.eval_interval = parse_size(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_size(key, value);
    else if (key == "base_lr") cfg.base_lr = parse_double(key, value);
    else if (key == "momentum") cfg.momentum = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "poly_power") cfg.poly_power = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_size(key, value);
    else if (key == "gens") cfg.gens = parse_size(key, value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "variants") cfg.variants = value;
    else if (key == "stop_after") cfg.stop_after = parse_size(key, value);
    else throw ConfigError("unknown config key: " + key);
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got: " +
                              line);
        apply_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string widths;
    for (std::size_t i = 0; i < cfg.net_widths.size(); ++i) {
        if (i) widths += ",";
        widths += std::to_string(cfg.net_widths[i]);
    }
    // std::map-free but sorted by hand: keep this list alphabetical
    std::ostringstream out;
    out << "att_domains=" << att_domains_name(cfg.loss.att_domains) << "\n"
        << "att_form=" << att_form_name(cfg.loss.att_form) << "\n"
        << "att_metric=" << att_metric_name(cfg.loss.att_metric) << "\n"
        << "base_lr=" << fmt_double(cfg.base_lr) << "\n"
        << "batch_size=" << cfg.batch_size << "\n"
        << "classes=" << cfg.classes << "\n"
        << "data_dir=" << cfg.data_dir << "\n"
        << "downsample=" << cfg.downsample << "\n"
        << "eval_interval=" << cfg.eval_interval << "\n"
        << "eval_per_domain=" << cfg.eval_per_domain << "\n"
        << "gens=" << cfg.gens << "\n"
        << "image_size=" << cfg.image_size << "\n"
        << "iters_adapt=" << cfg.iters_adapt << "\n"
        << "iters_sam=" << cfg.iters_sam << "\n"
        << "lambda=" << fmt_double(cfg.loss.lambda) << "\n"
        << "momentum=" << fmt_double(cfg.momentum) << "\n"
        << "net_widths=" << widths << "\n"
        << "out_dir=" << cfg.out_dir << "\n"
        << "poly_power=" << fmt_double(cfg.poly_power) << "\n"
        << "seed=" << cfg.seed << "\n"
        << "stop_after=" << cfg.stop_after << "\n"
        << "train_per_domain=" << cfg.train_per_domain << "\n"
        << "use_conv=" << (cfg.use_conv ? 1 : 0) << "\n"
        << "use_skip=" << (cfg.use_skip ? 1 : 0) << "\n"
        << "variants=" << cfg.variants << "\n"
        << "weight_decay=" << fmt_double(cfg.weight_decay) << "\n";
    return out.str();
}

std::string config_hash8(const ExperimentConfig& cfg) {
    // seed excluded so reruns across seeds group under comparable names
    ExperimentConfig c = cfg;
    c.seed = 0;
    std::uint64_t h = fnv1a(serialize_config(c));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%08llx", static_cast<unsigned long long>(h & 0xffffffffULL));
    return buf;
}

NetConfig make_net_config(const ExperimentConfig& cfg) {
    NetConfig net;
    net.in_channels = 3;
    net.widths = cfg.net_widths;
    net.downsample = cfg.downsample;
    net.classes = cfg.classes;
    net.init_seed = cfg.seed;
    return net;
}

namespace {

TrainConfig base_train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.batch_size;
    t.base_lr = cfg.base_lr;
    t.momentum = cfg.momentum;
    t.weight_decay = cfg.weight_decay;
    t.poly_power = cfg.poly_power;
    t.eval_interval = cfg.eval_interval;
    t.seed = cfg.seed;
    t.loss = cfg.loss;
    t.use_conv = cfg.use_conv;
    t.use_skip = cfg.use_skip;
    t.net = make_net_config(cfg);
    t.stop_after = cfg.stop_after;
    return t;
}

} // namespace

TrainConfig make_sam_train_config(const ExperimentConfig& cfg) {
    TrainConfig t = base_train_config(cfg);
    t.iterations = cfg.iters_sam;
    t.stop_after = 0; // stop_after applies to the command's own phase only
    return t;
}

TrainConfig make_adapt_train_config(const ExperimentConfig& cfg) {
    TrainConfig t = base_train_config(cfg);
    t.iterations = cfg.iters_adapt;
    return t;
}

ProtocolConfig make_protocol_config(const ExperimentConfig& cfg) {
    ProtocolConfig p;
    p.sam = make_sam_train_config(cfg);
    p.adapt = make_adapt_train_config(cfg);
    p.adapt.stop_after = 0; // the generation loop is not interruptible mid-phase
    p.gens = cfg.gens;
    p.variants = split_csv_list(cfg.variants);
    return p;
}

DataSplits generate_splits(const ExperimentConfig& cfg) {
    auto make = [&](Domain d, const char* tag, std::size_t n) {
        std::uint64_t split_seed = derive_seed(cfg.seed, tag);
        DomainSpec spec =
            d == Domain::Source ? default_source_spec(split_seed) : default_target_spec(split_seed);
        return generate(spec, n, cfg.image_size, cfg.image_size, cfg.classes);
    };
    DataSplits s;
    s.source_train = make(Domain::Source, "src-train", cfg.train_per_domain);
    s.source_eval = make(Domain::Source, "src-eval", cfg.eval_per_domain);
    s.target_train = make(Domain::Target, "tgt-train", cfg.train_per_domain);
    s.target_eval = make(Domain::Target, "tgt-eval", cfg.eval_per_domain);
    return s;
}

} // namespace pixcorr
