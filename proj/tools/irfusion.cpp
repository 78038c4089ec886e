#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "irff/checkpoint.hpp"
#include "irff/image_io.hpp"
#include "irff/runner.hpp"

namespace fs = std::filesystem;
using namespace irff;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kIo = 4 };

struct ConfigOptions {
    std::string preset = "desk";
    std::string file;
    std::vector<std::string> settings;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
    cmd->add_option("--preset", o.preset, "Base preset: desk or paper-protocol");
    cmd->add_option("-c,--config", o.file, "key = value config file");
    cmd->add_option("-s,--set", o.settings, "Override one key, as key=value (repeatable)");
}

RunConfig resolve(const ConfigOptions& o, const std::string& fallback_file = {}) {
    RunConfig cfg = preset_config(o.preset);
    const auto& file = o.file.empty() ? fallback_file : o.file;
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& kv : o.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

std::string sibling_config(const std::string& checkpoint) {
    const auto p = fs::path(checkpoint).parent_path() / "config.txt";
    return fs::exists(p) ? p.string() : std::string{};
}

int run_synth(const ConfigOptions& o, const std::string& out) {
    auto cfg = resolve(o);
    if (!out.empty()) cfg.data_root = out;
    if (cfg.data_root.empty()) throw ConfigError("synth needs an output directory (--out or data_root)");
    const auto st = write_synthetic_corpus(cfg.data_root, cfg);
    write_config(fs::path(cfg.data_root) / "synth_config.txt", cfg);
    std::printf("wrote %zu train + %zu test pairs to %s\n", st.train, st.test, cfg.data_root.c_str());
    std::printf("foreground fraction mean=%.4f min=%.4f max=%.4f\n", st.mean_foreground, st.min_foreground,
                st.max_foreground);
    return kOk;
}

int run_train(const ConfigOptions& o, const std::string& data, const std::string& out) {
    auto cfg = resolve(o);
    if (!data.empty()) cfg.data_root = data;
    if (!out.empty()) cfg.output_dir = out;
    if (cfg.data_root.empty()) throw ConfigError("train needs a dataset (--data or data_root)");
    cfg.validate();
    const auto split = load_split_dataset(cfg.data_root);
    const auto result = train(cfg, split, cfg.output_dir);
    for (const auto& e : result.epochs) std::printf("%s\n", format_epoch_line(e).c_str());
    std::printf("final train_dice=%.6f test_dice=%.6f best_epoch=%zu\n", result.train_dice, result.test_dice,
                result.best_epoch);
    return kOk;
}

int run_eval(const ConfigOptions& o, const std::string& checkpoint, const std::string& data, const std::string& split,
             const std::string& out, bool masks) {
    auto cfg = resolve(o, sibling_config(checkpoint));
    if (!data.empty()) cfg.data_root = data;
    if (!out.empty()) cfg.output_dir = out;
    cfg.validate();
    IhbsModel model(cfg.model);
    cfg.norm = restore_checkpoint(checkpoint, model);
    auto parts = load_split_dataset(cfg.data_root);
    std::vector<SamplePair> samples;
    if (split == "test" || split == "all") samples.insert(samples.end(), parts.test.begin(), parts.test.end());
    if (split == "train" || split == "all") samples.insert(samples.end(), parts.train.begin(), parts.train.end());
    if (samples.empty()) throw UsageError("the '" + split + "' split of " + cfg.data_root + " is empty");

    const auto result = evaluate(model, samples, cfg);
    const fs::path dir = cfg.output_dir;
    write_text(dir / "report.json", report_to_json({result.summary, cfg.aggregation, cfg.threshold, samples.size()}));
    write_text(dir / "per_image.csv", per_image_csv(result));
    if (masks) {
        for (const auto& s : samples) {
            const auto p = predict(model, cfg, s.rgb, s.thermal);
            write_png(dir / "masks" / (s.id + ".png"), p.mask);
        }
    }
    const auto& m = result.summary;
    std::printf("%zu images (%s): dice=%.4f iou=%.4f accuracy=%.4f precision=%.4f specificity=%.4f recall=%.4f "
                "cl_dice=%.4f\n",
                samples.size(), to_string(cfg.aggregation).c_str(), m.dice, m.iou, m.accuracy, m.precision,
                m.specificity, m.recall, m.cl_dice);
    return kOk;
}

int run_predict(const ConfigOptions& o, const std::string& checkpoint, const std::string& rgb_path,
                const std::string& thermal_path, const std::string& out, std::string overlay) {
    auto cfg = resolve(o, sibling_config(checkpoint));
    cfg.validate();
    IhbsModel model(cfg.model);
    cfg.norm = restore_checkpoint(checkpoint, model);
    const auto rgb = image_to_tensor(read_image(rgb_path, 3));
    const auto thermal = image_to_tensor(read_image(thermal_path, 1));
    const auto p = predict(model, cfg, rgb, thermal);
    if (overlay.empty()) {
        const fs::path op(out);
        overlay = (op.parent_path() / (op.stem().string() + "_overlay.png")).string();
    }
    write_png(out, p.mask);
    write_png(overlay, p.overlay);
    std::printf("wrote %s and %s\n", out.c_str(), overlay.c_str());
    return kOk;
}

int run_bench(const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& channels,
              const std::vector<std::size_t>& segments, std::size_t max_measured, std::size_t repeats,
              const std::string& out) {
    const auto rows = bench_attention(sizes, channels, segments, max_measured, repeats);
    const auto csv = bench_csv(rows);
    if (out.empty()) std::fputs(csv.c_str(), stdout);
    else write_text(out, csv);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGB-thermal crack segmentation: synthesize data, train, evaluate, predict"};
    app.require_subcommand(1);

    ConfigOptions synth_opts, train_opts, eval_opts, predict_opts;
    std::string synth_out, train_data, train_out, eval_ckpt, eval_data, eval_split = "test", eval_out;
    std::string pred_ckpt, pred_rgb, pred_thermal, pred_out, pred_overlay, bench_out;
    bool eval_masks = false;
    std::vector<std::size_t> bench_sizes{1, 8, 16, 32, 64, 128, 256}, bench_channels{32, 64}, bench_segments{1, 4};
    std::size_t bench_max = 64, bench_repeats = 3;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic RGB-T crack dataset");
    add_config_options(synth, synth_opts);
    synth->add_option("-o,--out", synth_out, "Dataset root to create");

    auto* trainc = app.add_subcommand("train", "Train a model");
    add_config_options(trainc, train_opts);
    trainc->add_option("-d,--data", train_data, "Dataset root");
    trainc->add_option("-o,--out", train_out, "Run directory (config, log, checkpoints)");

    auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_config_options(evalc, eval_opts);
    evalc->add_option("-k,--checkpoint", eval_ckpt, "Checkpoint file")->required();
    evalc->add_option("-d,--data", eval_data, "Dataset root");
    evalc->add_option("--split", eval_split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
    evalc->add_option("-o,--out", eval_out, "Report directory");
    evalc->add_flag("--masks", eval_masks, "Also write predicted mask PNGs");

    auto* pred = app.add_subcommand("predict", "Segment one RGB-thermal pair");
    add_config_options(pred, predict_opts);
    pred->add_option("-k,--checkpoint", pred_ckpt, "Checkpoint file")->required();
    pred->add_option("--rgb", pred_rgb, "RGB image")->required();
    pred->add_option("--thermal", pred_thermal, "Thermal image")->required();
    pred->add_option("-o,--out", pred_out, "Mask PNG to write")->required();
    pred->add_option("--overlay", pred_overlay, "Overlay PNG (default <out>_overlay.png)");

    auto* bench = app.add_subcommand("bench-attn", "Naive vs efficient attention cost table");
    bench->add_option("--sizes", bench_sizes, "Square feature-map sizes")->delimiter(',');
    bench->add_option("--channels", bench_channels, "Key/value channel counts")->delimiter(',');
    bench->add_option("--segments", bench_segments, "Segment counts")->delimiter(',');
    bench->add_option("--max-measured", bench_max, "Largest size that is timed and instrumented");
    bench->add_option("--repeats", bench_repeats, "Timing repeats (best of)");
    bench->add_option("-o,--out", bench_out, "CSV file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) return run_synth(synth_opts, synth_out);
        if (*trainc) return run_train(train_opts, train_data, train_out);
        if (*evalc) return run_eval(eval_opts, eval_ckpt, eval_data, eval_split, eval_out, eval_masks);
        if (*pred) return run_predict(predict_opts, pred_ckpt, pred_rgb, pred_thermal, pred_out, pred_overlay);
        if (*bench) return run_bench(bench_sizes, bench_channels, bench_segments, bench_max, bench_repeats, bench_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kConfig;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kIo;
    } catch (const Error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    }
    return kOk;
}
