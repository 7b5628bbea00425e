#include "pixcorr/cli.hpp"

#include "pixcorr/config.hpp"
#include "pixcorr/errors.hpp"
#include "pixcorr/metrics.hpp"
#include "pixcorr/ops.hpp"
#include "pixcorr/pixmap.hpp"
#include "pixcorr/rng.hpp"
#include "pixcorr/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;

namespace pixcorr {

namespace {

struct CliState {
    ExperimentConfig cfg;
    std::string command;
    // command-specific paths
    std::string net_path, sam_path, pseudo_path, run_path, split = "target_eval";
    std::size_t report_images = 2;
};

void write_resolved_config(const fs::path& dir, const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.resolved");
    if (!out) throw FormatError("cannot write config echo in " + dir.string());
    out << serialize_config(cfg);
}

fs::path make_run_dir(const CliState& st) {
    fs::path dir = fs::path(st.cfg.out_dir) /
                   (st.command + "-" + config_hash8(st.cfg) + "-s" + std::to_string(st.cfg.seed));
    fs::create_directories(dir);
    write_resolved_config(dir, st.cfg);
    return dir;
}

fs::path split_dir(const ExperimentConfig& cfg, const std::string& split) {
    return fs::path(cfg.data_dir) / split;
}

Dataset load_split(const ExperimentConfig& cfg, const std::string& split, bool with_labels) {
    fs::path dir = split_dir(cfg, split);
    if (!fs::exists(dir / "manifest.txt"))
        throw ConfigError("dataset split not found: " + dir.string() +
                          " (run `pixcorr gen-data` first)");
    return load_dataset(dir.string(), with_labels);
}

int cmd_gen_data(const CliState& st) {
    st.cfg.validate();
    DataSplits splits = generate_splits(st.cfg);
    const std::pair<const char*, const Dataset*> plan[] = {
        {"source_train", &splits.source_train},
        {"source_eval", &splits.source_eval},
        {"target_train", &splits.target_train},
        {"target_eval", &splits.target_eval},
    };
    for (const auto& [name, ds] : plan) {
        save_dataset(split_dir(st.cfg, name).string(), *ds);
        std::fprintf(stderr, "[gen-data] wrote %zu %s samples to %s\n", ds->samples.size(), name,
                     split_dir(st.cfg, name).string().c_str());
    }
    write_resolved_config(st.cfg.data_dir, st.cfg);
    std::printf("%s\n", st.cfg.data_dir.c_str());
    return 0;
}

void ensure_data(const CliState& st) {
    if (!fs::exists(split_dir(st.cfg, "source_train") / "manifest.txt")) {
        std::fprintf(stderr, "[%s] data_dir %s has no datasets, generating\n", st.command.c_str(),
                     st.cfg.data_dir.c_str());
        cmd_gen_data(st);
    }
}

int cmd_train_sam(const CliState& st) {
    st.cfg.validate();
    Dataset source_train = load_split(st.cfg, "source_train", true);
    Dataset source_eval = load_split(st.cfg, "source_eval", true);

    fs::path run_dir = make_run_dir(st);
    TrainConfig cfg = make_sam_train_config(st.cfg);
    cfg.stop_after = st.cfg.stop_after;
    PhaseOutcome out;
    train_sam(source_train, source_eval, cfg, run_dir.string(), &out);
    if (!out.completed) {
        std::fprintf(stderr, "[train-sam] stopped at step %zu; rerun to resume\n",
                     st.cfg.stop_after);
        return 0;
    }
    std::printf("%s\n", (run_dir / "sam.ckpt").string().c_str());
    return 0;
}

int cmd_pseudo(const CliState& st) {
    st.cfg.validate();
    if (st.net_path.empty()) throw ConfigError("pseudo needs --net <checkpoint>");
    if (!fs::exists(st.net_path))
        throw ConfigError("network checkpoint not found: " + st.net_path);
    SegNet net = SegNet::from_checkpoint(load_checkpoint(st.net_path));
    Dataset target_train = load_split(st.cfg, "target_train", false);

    fs::path run_dir = make_run_dir(st);
    PseudoStore store = build_pseudo_store(net, target_train);
    fs::path store_dir = run_dir / "store";
    save_pseudo_store(store_dir.string(), store);

    double coverage = 0.0;
    for (const auto& m : store.maps) coverage += pseudo_label_stats(m, st.cfg.classes).coverage;
    coverage /= static_cast<double>(store.maps.size());
    std::fprintf(stderr, "[pseudo] coverage %.4f over %zu images\n", coverage, store.maps.size());
    std::printf("%s\n", store_dir.string().c_str());
    return 0;
}

int cmd_adapt(const CliState& st) {
    st.cfg.validate();
    if (st.sam_path.empty()) throw ConfigError("adapt needs --sam <checkpoint>");
    if (!fs::exists(st.sam_path)) throw ConfigError("SAM checkpoint not found: " + st.sam_path);
    if (st.pseudo_path.empty())
        throw ConfigError("adapt needs --pseudo <store>; run `pixcorr pseudo` first");
    if (!fs::exists(fs::path(st.pseudo_path) / "thresholds.txt"))
        throw ConfigError("pseudo-label store not found: " + st.pseudo_path +
                          "; run `pixcorr pseudo` first");

    SamModule sam = SamModule::from_checkpoint(load_checkpoint(st.sam_path));
    sam.freeze();
    PseudoStore store = load_pseudo_store(st.pseudo_path);

    Dataset source_train = load_split(st.cfg, "source_train", true);
    Dataset target_train = load_split(st.cfg, "target_train", false);
    Dataset target_eval = load_split(st.cfg, "target_eval", true);

    fs::path run_dir = make_run_dir(st);
    TrainConfig cfg = make_adapt_train_config(st.cfg);
    PhaseOutcome out;
    adapt(source_train, target_train, target_eval, sam, store, cfg, run_dir.string(), &out);
    if (!out.completed) {
        std::fprintf(stderr, "[adapt] stopped at step %zu; rerun to resume\n", st.cfg.stop_after);
        return 0;
    }
    std::fprintf(stderr, "[adapt] best miou %.4f at step %zu\n", out.best_miou, out.best_step);
    std::printf("%s\n", (run_dir / "best.ckpt").string().c_str());
    return 0;
}

int cmd_iterate(const CliState& st) {
    st.cfg.validate();
    ensure_data(st);
    Dataset source_train = load_split(st.cfg, "source_train", true);
    Dataset source_eval = load_split(st.cfg, "source_eval", true);
    Dataset target_train = load_split(st.cfg, "target_train", false);
    Dataset target_eval = load_split(st.cfg, "target_eval", true);

    fs::path run_dir = make_run_dir(st);
    ProtocolConfig proto = make_protocol_config(st.cfg);
    GenerationLoopResult res = run_generation_loop(source_train, source_eval, target_train,
                                                   target_eval, proto, run_dir.string());

    std::printf("no-pseudo,%.9f\n", res.no_pseudo_miou);
    for (const GenerationRow& row : res.rows)
        std::printf("gen%zu,%s,%.9f\n", row.gen, row.variant.c_str(), row.miou);
    std::fprintf(stderr, "[iterate] table at %s\n", (run_dir / "table.csv").string().c_str());
    return 0;
}

int cmd_eval(const CliState& st) {
    st.cfg.validate();
    if (st.net_path.empty()) throw ConfigError("eval needs --net <checkpoint>");
    if (!fs::exists(st.net_path))
        throw ConfigError("network checkpoint not found: " + st.net_path);
    SegNet net = SegNet::from_checkpoint(load_checkpoint(st.net_path));
    Dataset eval_set = load_split(st.cfg, st.split, true);

    EvalResult res = evaluate(net, eval_set);
    fs::path run_dir = make_run_dir(st);
    std::ofstream csv(run_dir / "eval.csv");
    csv << "class,iou,present\n";
    static const char* class_names[] = {"sky", "road", "building", "vehicle", "pole"};
    for (std::size_t c = 0; c < res.iou.iou.size(); ++c) {
        const char* name = c < 5 ? class_names[c] : "class";
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s,%.9f,%d\n", name, res.iou.iou[c],
                      res.iou.present[c] ? 1 : 0);
        csv << buf;
        std::printf("%-10s iou %.4f%s\n", name, res.iou.iou[c],
                    res.iou.present[c] ? "" : " (absent)");
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "miou,%.9f,1\n", res.iou.miou);
    csv << buf;
    std::printf("miou       %.4f\n", res.iou.miou);
    std::printf("entropy    correct %.4f incorrect %.4f\n", res.entropy.mean_correct,
                res.entropy.mean_incorrect);
    return 0;
}

int cmd_report(const CliState& st) {
    st.cfg.validate();
    std::string net_path = st.net_path;
    if (net_path.empty()) {
        if (st.run_path.empty()) throw ConfigError("report needs --run <dir> or --net <ckpt>");
        net_path = (fs::path(st.run_path) / "best.ckpt").string();
    }
    if (!fs::exists(net_path)) throw ConfigError("network checkpoint not found: " + net_path);
    SegNet net = SegNet::from_checkpoint(load_checkpoint(net_path));
    Dataset eval_set = load_split(st.cfg, "target_eval", true);

    fs::path out_dir = st.run_path.empty() ? make_run_dir(st) / "report"
                                           : fs::path(st.run_path) / "report";
    fs::create_directories(out_dir);

    // per-class IoU table
    EvalResult res = evaluate(net, eval_set);
    {
        std::ofstream csv(out_dir / "iou.csv");
        csv << "class,iou,present\n";
        for (std::size_t c = 0; c < res.iou.iou.size(); ++c) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%zu,%.9f,%d\n", c, res.iou.iou[c],
                          res.iou.present[c] ? 1 : 0);
            csv << buf;
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "miou,%.9f,1\n", res.iou.miou);
        csv << buf;
    }

    std::size_t n_images = std::min<std::size_t>(st.report_images, eval_set.samples.size());
    std::size_t d = net.config().downsample;
    std::size_t H = eval_set.height, W = eval_set.width, h = H / d, w = W / d;
    for (std::size_t i = 0; i < n_images; ++i) {
        const SceneSample& s = eval_set.samples[i];
        auto pred = net.predict(s.image);

        // predicted label map (class indices spread over the gray range)
        auto labels = argmax_map(pred.p);
        Graymap pm;
        pm.width = W;
        pm.height = H;
        pm.pixels.resize(labels.size());
        for (std::size_t j = 0; j < labels.size(); ++j)
            pm.pixels[j] = static_cast<std::uint8_t>(labels[j] * 51);
        char name[64];
        std::snprintf(name, sizeof(name), "pred_%04zu.pgm", i);
        write_pgm((out_dir / name).string(), pm);

        // pixel-similarity heatmaps of the prediction and the ground truth
        Tensor z_rows = pixel_rows(pred.z);
        Tensor sim_pred = pixel_similarity_map(z_rows);
        std::snprintf(name, sizeof(name), "sim_pred_%04zu.pgm", i);
        write_heatmap((out_dir / name).string(), sim_pred.data(), h * w, h * w);

        Tensor gt_rows = one_hot_rows_nearest(s.label, H, W, h, w, net.config().classes);
        Tensor sim_gt = pixel_similarity_map(gt_rows);
        std::snprintf(name, sizeof(name), "sim_gt_%04zu.pgm", i);
        write_heatmap((out_dir / name).string(), sim_gt.data(), h * w, h * w);

        // per-class attention of the most confident pixel
        for (std::size_t c = 0; c < net.config().classes; ++c) {
            auto vis = attention_visualization(z_rows, h, w, H, W, c);
            if (!vis) {
                std::fprintf(stderr, "[report] image %zu: class %zu not predicted\n", i, c);
                continue;
            }
            std::snprintf(name, sizeof(name), "attention_c%zu_%04zu.pgm", c, i);
            write_heatmap((out_dir / name).string(), vis->heat, H, W);
            std::snprintf(name, sizeof(name), "attention_c%zu_%04zu.anchor.txt", c, i);
            std::ofstream anchor(out_dir / name);
            anchor << "anchor_y=" << vis->anchor_y << "\nanchor_x=" << vis->anchor_x << "\n";
        }
    }
    std::printf("%s\n", out_dir.string().c_str());
    return 0;
}

} // namespace

int dispatch(int argc, char** argv) {
    CLI::App app{"pixel-correlation transfer for unsupervised domain adaptation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    CliState st;

    // flag presence decides precedence: file < command line
    std::optional<std::uint64_t> seed_flag;
    std::optional<double> lambda_flag;
    std::optional<std::string> att_form_flag, att_domains_flag, att_metric_flag, out_flag,
        data_dir_flag, variants_flag;
    std::optional<std::size_t> gens_flag, stop_after_flag;
    bool no_conv = false, no_skip = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { seed_flag = v; }, "rng seed");
        cmd->add_option_function<std::string>(
            "--out", [&](const std::string& v) { out_flag = v; }, "output root directory");
        cmd->add_option_function<std::string>(
            "--data-dir", [&](const std::string& v) { data_dir_flag = v; },
            "dataset root directory");
        cmd->add_option_function<double>(
            "--lambda", [&](double v) { lambda_flag = v; }, "attention loss weight");
        cmd->add_option_function<std::string>(
            "--att-form", [&](const std::string& v) { att_form_flag = v; }, "z-zpp or z-zp");
        cmd->add_option_function<std::string>(
            "--att-domains", [&](const std::string& v) { att_domains_flag = v; },
            "both or target");
        cmd->add_option_function<std::string>(
            "--att-metric", [&](const std::string& v) { att_metric_flag = v; },
            "l1, kl or cosine");
        cmd->add_flag("--no-conv", no_conv, "ablation: no 1x1 convolution in the SAM");
        cmd->add_flag("--no-skip", no_skip, "ablation: no skip connection in the SAM");
        cmd->add_option_function<std::size_t>(
            "--gens", [&](std::size_t v) { gens_flag = v; }, "self-training generations");
        cmd->add_option_function<std::string>(
            "--variants", [&](const std::string& v) { variants_flag = v; },
            "comma list of training variants");
        cmd->add_option_function<std::size_t>(
            "--stop-after", [&](std::size_t v) { stop_after_flag = v; },
            "checkpoint and stop after this step");
        cmd->add_option("--set", overrides, "extra key=value config overrides")
            ->type_name("KEY=VALUE");
        return cmd;
    };

    CLI::App* gen = add_common(app.add_subcommand("gen-data", "generate the synthetic domains"));
    CLI::App* tsam = add_common(app.add_subcommand("train-sam", "phase A: train the SAM"));
    CLI::App* pseudo =
        add_common(app.add_subcommand("pseudo", "compute thresholds and pseudo labels"));
    pseudo->add_option("--net", st.net_path, "segmentation checkpoint");
    CLI::App* adapt_cmd =
        add_common(app.add_subcommand("adapt", "phase B: domain-adaptive training"));
    adapt_cmd->add_option("--sam", st.sam_path, "frozen SAM checkpoint");
    adapt_cmd->add_option("--pseudo", st.pseudo_path, "pseudo-label store directory");
    CLI::App* iterate =
        add_common(app.add_subcommand("iterate", "full multi-generation protocol"));
    CLI::App* eval_cmd = add_common(app.add_subcommand("eval", "evaluate a checkpoint"));
    eval_cmd->add_option("--net", st.net_path, "segmentation checkpoint");
    eval_cmd->add_option("--split", st.split, "dataset split to evaluate");
    CLI::App* report = add_common(app.add_subcommand("report", "emit heatmaps and tables"));
    report->add_option("--run", st.run_path, "adapt/iterate run directory");
    report->add_option("--net", st.net_path, "checkpoint override");
    report->add_option("--images", st.report_images, "eval images to visualize");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (!config_path.empty()) st.cfg = load_config_file(config_path);
        for (const std::string& kv : overrides) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got: " + kv);
            apply_config_value(st.cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_flag) st.cfg.seed = *seed_flag;
        if (out_flag) st.cfg.out_dir = *out_flag;
        if (data_dir_flag) st.cfg.data_dir = *data_dir_flag;
        if (lambda_flag) st.cfg.loss.lambda = *lambda_flag;
        if (att_form_flag) st.cfg.loss.att_form = parse_att_form(*att_form_flag);
        if (att_domains_flag) st.cfg.loss.att_domains = parse_att_domains(*att_domains_flag);
        if (att_metric_flag) st.cfg.loss.att_metric = parse_att_metric(*att_metric_flag);
        if (no_conv) st.cfg.use_conv = false;
        if (no_skip) st.cfg.use_skip = false;
        if (gens_flag) st.cfg.gens = *gens_flag;
        if (variants_flag) st.cfg.variants = *variants_flag;
        if (stop_after_flag) st.cfg.stop_after = *stop_after_flag;
        // gen-data default: datasets live under the output root
        if (!data_dir_flag && config_path.empty()) st.cfg.data_dir = st.cfg.out_dir + "/data";

        if (gen->parsed()) {
            st.command = "gen-data";
            return cmd_gen_data(st);
        }
        if (tsam->parsed()) {
            st.command = "train-sam";
            return cmd_train_sam(st);
        }
        if (pseudo->parsed()) {
            st.command = "pseudo";
            return cmd_pseudo(st);
        }
        if (adapt_cmd->parsed()) {
            st.command = "adapt";
            return cmd_adapt(st);
        }
        if (iterate->parsed()) {
            st.command = "iterate";
            return cmd_iterate(st);
        }
        if (eval_cmd->parsed()) {
            st.command = "eval";
            return cmd_eval(st);
        }
        if (report->parsed()) {
            st.command = "report";
            return cmd_report(st);
        }
        throw ConfigError("no command given");
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

} // namespace pixcorr
