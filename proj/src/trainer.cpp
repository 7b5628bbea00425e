#include "pixcorr/trainer.hpp"

#include "pixcorr/errors.hpp"
#include "pixcorr/metrics.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

namespace fs = std::filesystem;

namespace pixcorr {

void TrainConfig::validate() const {
    if (iterations == 0) throw ConfigError("iterations must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be > 0");
    if (poly_power <= 0.0) throw ConfigError("poly_power must be > 0");
    if (base_lr <= 0.0) throw ConfigError("base_lr must be > 0");
    if (eval_interval == 0) throw ConfigError("eval_interval must be > 0");
    if (loss.lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (stop_after > iterations)
        throw ConfigError("stop_after exceeds iterations");
}

double poly_lr(std::size_t step, const TrainConfig& cfg) {
    double frac = static_cast<double>(step) / static_cast<double>(cfg.iterations);
    return cfg.base_lr * std::pow(1.0 - frac, cfg.poly_power);
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdOptimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void SgdOptimizer::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        const std::vector<double>& g = p.grad();
        std::vector<double>& v = velocity_[i];
        if (g.size() != v.size())
            throw DimensionError("sgd: gradient size " + std::to_string(g.size()) +
                                 " does not match parameter " + shape_str(p.shape()));
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j] + weight_decay_ * p.at(j);
            p.at(j) -= lr * v[j];
        }
    }
}

namespace {

struct StepLosses {
    Tensor total;
    double seg_s = 0.0, seg_t = 0.0, att = 0.0;
};

struct CsvLogger {
    std::ofstream out;
    explicit CsvLogger(const std::string& path) {
        bool fresh = !fs::exists(path);
        out.open(path, std::ios::app);
        if (!out) throw FormatError("cannot open metrics log: " + path);
        if (fresh)
            out << "step,split,miou,loss_seg_s,loss_seg_t,loss_att,entropy_correct,entropy_"
                   "incorrect\n";
    }
    void row(std::size_t step, const char* split, double miou, double ls, double lt, double la,
             double ent_c, double ent_i) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", step, split,
                      miou, ls, lt, la, ent_c, ent_i);
        out << buf;
        out.flush();
    }
};

// Running means of the loss components since the last logged row; part of
// the snapshot so a resumed run reproduces the log byte for byte.
struct LossAccum {
    double seg_s = 0.0, seg_t = 0.0, att = 0.0;
    std::size_t n = 0;
};

// Full training state: parameters, optimizer velocity, progress counters.
void save_state(const std::string& path, const std::vector<Tensor>& params,
                const std::vector<std::vector<double>>& velocity, std::size_t step,
                double best_miou, std::size_t best_step, const LossAccum& acc) {
    Checkpoint st;
    st.set("kind", "train-state");
    st.set_int("step", static_cast<long long>(step));
    st.set_double("best_miou", best_miou);
    st.set_int("best_step", static_cast<long long>(best_step));
    st.set_int("n_params", static_cast<long long>(params.size()));
    st.set_double("acc_seg_s", acc.seg_s);
    st.set_double("acc_seg_t", acc.seg_t);
    st.set_double("acc_att", acc.att);
    st.set_int("acc_n", static_cast<long long>(acc.n));
    for (const Tensor& p : params) st.tensors.push_back(p);
    for (std::size_t i = 0; i < velocity.size(); ++i)
        st.tensors.push_back(
            Tensor::from_data(params[i].shape(), velocity[i]));
    save_checkpoint(path, st);
}

bool try_resume(const std::string& path, std::vector<Tensor>& params,
                std::vector<std::vector<double>>& velocity, std::size_t& step, double& best_miou,
                std::size_t& best_step, LossAccum& acc) {
    if (!fs::exists(path)) return false;
    Checkpoint st = load_checkpoint(path);
    if (st.get("kind") != "train-state") throw FormatError("not a train-state checkpoint: " + path);
    std::size_t n = static_cast<std::size_t>(st.get_int("n_params"));
    if (n != params.size() || st.tensors.size() != 2 * n)
        throw FormatError("train-state parameter count mismatch in " + path);
    for (std::size_t i = 0; i < n; ++i) {
        if (st.tensors[i].shape() != params[i].shape())
            throw FormatError("train-state tensor shape mismatch in " + path);
        params[i].data() = st.tensors[i].data();
        velocity[i] = st.tensors[n + i].data();
    }
    step = static_cast<std::size_t>(st.get_int("step"));
    best_miou = st.get_double("best_miou");
    best_step = static_cast<std::size_t>(st.get_int("best_step"));
    acc.seg_s = st.get_double("acc_seg_s");
    acc.seg_t = st.get_double("acc_seg_t");
    acc.att = st.get_double("acc_att");
    acc.n = static_cast<std::size_t>(st.get_int("acc_n"));
    return true;
}

std::size_t sample_index(std::uint64_t seed, const char* tag, std::size_t step, std::size_t slot,
                         std::size_t n) {
    return static_cast<std::size_t>(derive_seed(seed, tag, step * 8191 + slot) % n);
}

struct EvalSnapshot {
    double miou = 0.0;
    double entropy_correct = 0.0;
    double entropy_incorrect = 0.0;
};

// Shared cadence: step losses, divergence guard, interval evaluation, best
// tracking, resumable snapshots. eval_fn must not mutate parameters.
PhaseOutcome run_training(const TrainConfig& cfg, const std::string& run_dir,
                          const char* phase_name, const char* split_name,
                          std::vector<Tensor> trainable,
                          const std::function<StepLosses(std::size_t)>& step_fn,
                          const std::function<EvalSnapshot()>& eval_fn,
                          const std::function<Checkpoint()>& best_payload_fn) {
    cfg.validate();
    fs::create_directories(run_dir);
    SgdOptimizer opt(trainable, cfg.momentum, cfg.weight_decay);

    std::size_t start_step = 0, best_step = 0;
    double best_miou = -1.0;
    LossAccum acc;
    std::string state_path = (fs::path(run_dir) / "state.ckpt").string();
    bool resumed =
        try_resume(state_path, trainable, opt.velocity(), start_step, best_miou, best_step, acc);
    if (resumed)
        std::fprintf(stderr, "[%s] resumed at step %zu (best %.4f @ %zu)\n", phase_name,
                     start_step, best_miou, best_step);

    CsvLogger csv((fs::path(run_dir) / "metrics.csv").string());
    std::string best_path = (fs::path(run_dir) / "best.ckpt").string();

    std::size_t end_step = cfg.stop_after ? cfg.stop_after : cfg.iterations;

    for (std::size_t step = start_step; step < end_step; ++step) {
        StepLosses losses = step_fn(step);
        double total = losses.total.value();
        if (!std::isfinite(total))
            throw NumericError(std::string(phase_name) + " diverged at step " +
                               std::to_string(step) + ": loss " + std::to_string(total));

        opt.zero_grad();
        backward(losses.total);
        opt.step(poly_lr(step, cfg));

        acc.seg_s += losses.seg_s;
        acc.seg_t += losses.seg_t;
        acc.att += losses.att;
        ++acc.n;

        bool at_interval = (step + 1) % cfg.eval_interval == 0;
        bool last = step + 1 == cfg.iterations;
        if (at_interval || last) {
            EvalSnapshot ev = eval_fn();
            csv.row(step + 1, split_name, ev.miou, acc.seg_s / acc.n, acc.seg_t / acc.n,
                    acc.att / acc.n, ev.entropy_correct, ev.entropy_incorrect);
            std::fprintf(stderr, "[%s] step %zu/%zu loss %.4f miou %.4f\n", phase_name, step + 1,
                         cfg.iterations, (acc.seg_s + acc.seg_t) / acc.n, ev.miou);
            acc = LossAccum{};
            if (ev.miou > best_miou) {
                best_miou = ev.miou;
                best_step = step + 1;
                Checkpoint best = best_payload_fn();
                best.set_double("best_miou", best_miou);
                best.set_int("best_step", static_cast<long long>(best_step));
                save_checkpoint(best_path, best);
            }
            save_state(state_path, trainable, opt.velocity(), step + 1, best_miou, best_step, acc);
        } else if (step + 1 == end_step) {
            // early stop between intervals still snapshots for resume
            save_state(state_path, trainable, opt.velocity(), step + 1, best_miou, best_step, acc);
        }
    }

    PhaseOutcome out;
    out.best_miou = best_miou;
    out.best_step = best_step;
    out.completed = end_step == cfg.iterations;
    return out;
}

} // namespace

SamModule train_sam(const Dataset& source_train, const Dataset& source_eval,
                    const TrainConfig& cfg, const std::string& run_dir, PhaseOutcome* outcome) {
    if (source_train.samples.empty() || !source_train.has_labels)
        throw ConfigError("SAM training needs a labeled source dataset");

    NetConfig net_cfg = cfg.net;
    net_cfg.init_seed = derive_seed(cfg.seed, "sam-phase-net");
    SegNet net = SegNet::init(net_cfg);
    SamModule sam = SamModule::init(net_cfg.classes, derive_seed(cfg.seed, "sam-phase-module"),
                                    cfg.use_conv, cfg.use_skip);

    std::vector<Tensor> trainable = net.parameters();
    for (const Tensor& p : sam.parameters()) trainable.push_back(p);

    std::size_t H = source_train.height, W = source_train.width;
    std::size_t h = H / net_cfg.downsample, w = W / net_cfg.downsample;

    auto joint_forward = [&](const Tensor& image) {
        Tensor z = net.forward_logits(image);
        Tensor rows = pixel_rows(z);
        SamOutput so = attend(sam, rows);
        Tensor grid = pixel_grid(so.skip, h, w);
        return softmax(bilinear_upsample(grid, H, W), 0);
    };

    auto step_fn = [&](std::size_t step) {
        StepLosses out;
        Tensor acc;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t idx =
                sample_index(cfg.seed, "sample-src", step, b, source_train.samples.size());
            const SceneSample& s = source_train.samples[idx];
            Tensor ce = ce_source(joint_forward(s.image), s.label);
            acc = acc.defined() ? add(acc, ce) : ce;
        }
        out.total = mul_scalar(acc, 1.0 / static_cast<double>(cfg.batch_size));
        out.seg_s = out.total.value();
        return out;
    };

    auto eval_fn = [&]() {
        EvalSnapshot ev;
        if (source_eval.samples.empty()) return ev;
        IoUAccumulator acc(net_cfg.classes);
        double sum_c = 0.0, sum_i = 0.0;
        std::size_t n_c = 0, n_i = 0;
        for (const SceneSample& s : source_eval.samples) {
            Tensor p = joint_forward(s.image);
            acc.add(argmax_map(p), s.label);
            ImageEntropy e = entropy_analysis(p, s.label);
            if (e.n_correct) {
                sum_c += e.correct;
                ++n_c;
            }
            if (e.n_incorrect) {
                sum_i += e.incorrect;
                ++n_i;
            }
        }
        ev.miou = acc.report().miou;
        if (n_c) ev.entropy_correct = sum_c / n_c;
        if (n_i) ev.entropy_incorrect = sum_i / n_i;
        return ev;
    };

    auto best_payload = [&]() {
        Checkpoint c = sam.to_checkpoint();
        c.set("phase", "sam-joint");
        return c;
    };

    PhaseOutcome out = run_training(cfg, run_dir, "train-sam", "source_eval", trainable, step_fn,
                                    eval_fn, best_payload);
    if (outcome) *outcome = out;

    // The module is kept from the last save point, not the best-eval one.
    if (out.completed)
        save_checkpoint((fs::path(run_dir) / "sam.ckpt").string(), sam.to_checkpoint());
    return sam;
}

SegNet train_source_only(const Dataset& source_train, const Dataset& target_eval,
                         const TrainConfig& cfg, const std::string& run_dir,
                         PhaseOutcome* outcome) {
    if (source_train.samples.empty() || !source_train.has_labels)
        throw ConfigError("source-only training needs a labeled source dataset");

    NetConfig net_cfg = cfg.net;
    net_cfg.init_seed = derive_seed(cfg.seed, "bootstrap-net");
    SegNet net = SegNet::init(net_cfg);

    auto step_fn = [&](std::size_t step) {
        StepLosses out;
        Tensor acc;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t idx =
                sample_index(cfg.seed, "sample-src", step, b, source_train.samples.size());
            const SceneSample& s = source_train.samples[idx];
            Tensor ce = ce_source(net.predict(s.image).p, s.label);
            acc = acc.defined() ? add(acc, ce) : ce;
        }
        out.total = mul_scalar(acc, 1.0 / static_cast<double>(cfg.batch_size));
        out.seg_s = out.total.value();
        return out;
    };

    auto eval_fn = [&]() {
        EvalSnapshot ev;
        EvalResult res = evaluate(net, target_eval);
        ev.miou = res.iou.miou;
        ev.entropy_correct = res.entropy.mean_correct;
        ev.entropy_incorrect = res.entropy.mean_incorrect;
        return ev;
    };

    PhaseOutcome out = run_training(cfg, run_dir, "no-pseudo", "target_eval", net.parameters(),
                                    step_fn, eval_fn, [&] { return net.to_checkpoint(); });
    if (outcome) *outcome = out;

    std::string best_path = (fs::path(run_dir) / "best.ckpt").string();
    if (!fs::exists(best_path)) return net; // stopped before the first eval
    return SegNet::from_checkpoint(load_checkpoint(best_path));
}

SegNet adapt(const Dataset& source_train, const Dataset& target_train,
             const Dataset& target_eval, const SamModule& sam, const PseudoStore& pseudo,
             const TrainConfig& cfg, const std::string& run_dir, PhaseOutcome* outcome) {
    if (!sam.frozen) throw ConfigError("adapt requires a frozen SAM");
    if (pseudo.maps.size() != target_train.samples.size())
        throw ConfigError("pseudo-label store has " + std::to_string(pseudo.maps.size()) +
                          " maps for " + std::to_string(target_train.samples.size()) +
                          " target images");

    NetConfig net_cfg = cfg.net;
    net_cfg.init_seed = derive_seed(cfg.seed, "adapt-net");
    SegNet net = SegNet::init(net_cfg);

    auto step_fn = [&](std::size_t step) {
        StepLosses out;
        Tensor acc;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            std::size_t is =
                sample_index(cfg.seed, "sample-src", step, b, source_train.samples.size());
            std::size_t it =
                sample_index(cfg.seed, "sample-tgt", step, b, target_train.samples.size());
            TotalLoss tl = total_loss(source_train.samples[is], target_train.samples[it],
                                      pseudo.maps[it], net, sam, cfg.loss);
            out.seg_s += tl.seg_source;
            out.seg_t += tl.seg_target;
            out.att += tl.att_source + tl.att_target;
            acc = acc.defined() ? add(acc, tl.total) : tl.total;
        }
        double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        out.total = mul_scalar(acc, inv_b);
        out.seg_s *= inv_b;
        out.seg_t *= inv_b;
        out.att *= inv_b;
        return out;
    };

    auto eval_fn = [&]() {
        EvalSnapshot ev;
        EvalResult res = evaluate(net, target_eval);
        ev.miou = res.iou.miou;
        ev.entropy_correct = res.entropy.mean_correct;
        ev.entropy_incorrect = res.entropy.mean_incorrect;
        return ev;
    };

    PhaseOutcome out = run_training(cfg, run_dir, "adapt", "target_eval", net.parameters(),
                                    step_fn, eval_fn, [&] { return net.to_checkpoint(); });
    if (outcome) *outcome = out;

    std::string best_path = (fs::path(run_dir) / "best.ckpt").string();
    if (!fs::exists(best_path)) return net; // stopped before the first eval
    return SegNet::from_checkpoint(load_checkpoint(best_path));
}

VariantSpec resolve_variant(const std::string& name, const LossConfig& base) {
    VariantSpec v;
    v.name = name;
    v.loss = base;
    if (name == "pseudo-only") {
        v.loss.lambda = 0.0;
    } else if (name == "ours") {
        // base profile as configured
    } else if (name == "ours-zpp-both") {
        v.loss.att_form = AttForm::ZVsZpp;
        v.loss.att_domains = AttDomains::Both;
    } else if (name == "ours-zp-target") {
        v.loss.att_form = AttForm::ZVsZp;
        v.loss.att_domains = AttDomains::TargetOnly;
    } else if (name == "no-conv") {
        v.use_conv = false;
    } else if (name == "no-skip") {
        v.use_skip = false;
    } else {
        throw ConfigError("unknown variant: " + name +
                          " (expected pseudo-only, ours, ours-zpp-both, ours-zp-target, "
                          "no-conv or no-skip)");
    }
    return v;
}

GenerationLoopResult run_generation_loop(const Dataset& source_train, const Dataset& source_eval,
                                         const Dataset& target_train, const Dataset& target_eval,
                                         const ProtocolConfig& proto, const std::string& out_dir) {
    if (proto.gens == 0) throw ConfigError("generation loop needs gens >= 1");
    if (proto.variants.empty()) throw ConfigError("generation loop needs at least one variant");

    std::vector<VariantSpec> variants;
    for (const std::string& name : proto.variants)
        variants.push_back(resolve_variant(name, proto.adapt.loss));

    fs::create_directories(out_dir);

    // SAM trained once per needed architecture and reused across generations.
    std::map<std::pair<bool, bool>, SamModule> sam_cache;
    auto get_sam = [&](const VariantSpec& v) -> SamModule& {
        auto key = std::make_pair(v.use_conv, v.use_skip);
        auto it = sam_cache.find(key);
        if (it != sam_cache.end()) return it->second;
        SamModule sam;
        if (!v.use_conv) {
            sam = SamModule::init(proto.sam.net.classes, 0, false, v.use_skip);
        } else {
            TrainConfig sam_cfg = proto.sam;
            sam_cfg.use_conv = v.use_conv;
            sam_cfg.use_skip = v.use_skip;
            std::string dir = out_dir + "/sam" + (v.use_skip ? "" : "-noskip");
            sam = train_sam(source_train, source_eval, sam_cfg, dir);
        }
        sam.freeze();
        return sam_cache.emplace(key, std::move(sam)).first->second;
    };

    // "No Pseudo" bootstrap provides generation-1 pseudo labels for everyone.
    TrainConfig boot_cfg = proto.adapt;
    PhaseOutcome boot_out;
    SegNet bootstrap = train_source_only(source_train, target_eval, boot_cfg,
                                         out_dir + "/no-pseudo", &boot_out);

    GenerationLoopResult result;
    result.no_pseudo_miou = boot_out.best_miou;
    {
        std::ofstream np(fs::path(out_dir) / "no_pseudo.csv");
        np << "variant,miou\n";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "no-pseudo,%.9f\n", boot_out.best_miou);
        np << buf;
    }

    std::map<std::string, SegNet> prev;
    for (const VariantSpec& v : variants) prev.emplace(v.name, bootstrap);

    std::ofstream table(fs::path(out_dir) / "table.csv");
    table << "gen,variant,miou,pseudo_coverage\n";

    for (std::size_t gen = 1; gen <= proto.gens; ++gen) {
        TrainConfig gen_cfg = proto.adapt;
        gen_cfg.seed = derive_seed(proto.adapt.seed, "generation", gen);
        gen_cfg.generation = gen;

        for (const VariantSpec& v : variants) {
            std::string run_dir =
                out_dir + "/gen" + std::to_string(gen) + "/" + v.name;
            fs::create_directories(run_dir);

            PseudoStore store = build_pseudo_store(prev.at(v.name), target_train);
            save_pseudo_store(run_dir + "/pseudo", store);
            double coverage = 0.0;
            for (const PseudoLabelMap& m : store.maps)
                coverage += pseudo_label_stats(m, proto.adapt.net.classes).coverage;
            coverage /= static_cast<double>(store.maps.size());

            TrainConfig cfg_v = gen_cfg;
            cfg_v.loss = v.loss;
            cfg_v.use_conv = v.use_conv;
            cfg_v.use_skip = v.use_skip;

            PhaseOutcome out;
            SegNet best = adapt(source_train, target_train, target_eval, get_sam(v), store,
                                cfg_v, run_dir, &out);

            GenerationRow row;
            row.gen = gen;
            row.variant = v.name;
            row.miou = out.best_miou;
            row.pseudo_coverage = coverage;
            result.rows.push_back(row);

            char buf[160];
            std::snprintf(buf, sizeof(buf), "%zu,%s,%.9f,%.9f\n", gen, v.name.c_str(), out.best_miou,
                          coverage);
            table << buf;
            table.flush();

            prev.at(v.name) = std::move(best);
        }
    }
    return result;
}

} // namespace pixcorr
