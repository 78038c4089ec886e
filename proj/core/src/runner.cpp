#include "irff/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>

#include "irff/checkpoint.hpp"
#include "irff/fusion.hpp"
#include "irff/ops.hpp"
#include "irff/rng.hpp"

IRFF_BEGIN_NAMESPACE

namespace fs = std::filesystem;

namespace {

constexpr const char* kNormRgbMean = "norm.rgb_mean";
constexpr const char* kNormRgbStd = "norm.rgb_std";
constexpr const char* kNormThermal = "norm.thermal";
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4155;

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ModelConfig model_config(const RunConfig& cfg) {
    auto m = cfg.model;
    m.seed = cfg.seed;
    return m;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<long long>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

Tensor vector_tensor(std::initializer_list<double> values) {
    std::vector<real> v;
    for (double x : values) v.push_back(static_cast<real>(x));
    const std::size_t n = v.size();
    return Tensor::from({n}, std::move(v));
}

Tensor threshold_map(const Tensor& prob, double threshold) {
    std::vector<real> out(prob.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(prob.data()[i]) >= threshold ? 1 : 0;
    return Tensor::from(prob.shape(), std::move(out));
}

template <class F>
double time_ms(std::size_t repeats, F&& fn) {
    double best = 1e300;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

}  // namespace

DatasetSplit synthetic_corpus(const RunConfig& cfg) {
    cfg.synth.validate();
    DatasetSplit out;
    for (std::size_t i = 0; i < cfg.train_count + cfg.test_count; ++i) {
        auto s = synth_corpus_sample(cfg.data_seed, i, cfg.synth);
        (i < cfg.train_count ? out.train : out.test).push_back(std::move(s));
    }
    return out;
}

CorpusStats write_synthetic_corpus(const fs::path& root, const RunConfig& cfg) {
    cfg.synth.validate();
    std::vector<SplitEntry> entries;
    CorpusStats st;
    st.min_foreground = 1.0;
    const std::size_t total = cfg.train_count + cfg.test_count;
    write_split(root, {});
    for (std::size_t i = 0; i < total; ++i) {
        const auto s = synth_corpus_sample(cfg.data_seed, i, cfg.synth);
        write_sample(root, s);
        const bool is_train = i < cfg.train_count;
        entries.push_back({s.id, is_train ? SplitRole::train : SplitRole::test});
        const double fg = foreground_fraction(s.mask);
        st.mean_foreground += fg;
        st.min_foreground = std::min(st.min_foreground, fg);
        st.max_foreground = std::max(st.max_foreground, fg);
        (is_train ? st.train : st.test) += 1;
    }
    if (total > 0) st.mean_foreground /= static_cast<double>(total);
    else st.min_foreground = 0;
    write_split(root, entries);
    return st;
}

std::string format_epoch_line(const EpochLog& e) {
    return "epoch=" + std::to_string(e.epoch) + " total=" + fixed(e.total) + " main=" + fixed(e.main) +
           " aux=" + fixed(e.aux) + " topo=" + fixed(e.topology) + " ce=" + fixed(e.ce) + " dice=" + fixed(e.dice) +
           " val_dice=" + fixed(e.val_dice);
}

std::vector<NamedTensor> checkpoint_entries(const IhbsModel& model, const Standardization& norm) {
    auto entries = model.params().entries();
    entries.push_back({kNormRgbMean, vector_tensor({norm.rgb_mean[0], norm.rgb_mean[1], norm.rgb_mean[2]})});
    entries.push_back({kNormRgbStd, vector_tensor({norm.rgb_std[0], norm.rgb_std[1], norm.rgb_std[2]})});
    entries.push_back({kNormThermal, vector_tensor({norm.thermal_mean, norm.thermal_std})});
    return entries;
}

Standardization restore_checkpoint(const fs::path& path, IhbsModel& model) {
    auto loaded = load_checkpoint(path);
    Standardization norm;
    std::vector<NamedTensor> params;
    bool have_mean = false, have_std = false, have_thermal = false;
    for (auto& e : loaded) {
        const auto d = e.tensor.data();
        if (e.name == kNormRgbMean && d.size() == 3) {
            for (std::size_t k = 0; k < 3; ++k) norm.rgb_mean[k] = d[k];
            have_mean = true;
        } else if (e.name == kNormRgbStd && d.size() == 3) {
            for (std::size_t k = 0; k < 3; ++k) norm.rgb_std[k] = d[k];
            have_std = true;
        } else if (e.name == kNormThermal && d.size() == 2) {
            norm.thermal_mean = d[0];
            norm.thermal_std = d[1];
            have_thermal = true;
        } else {
            params.push_back(std::move(e));
        }
    }
    if (!(have_mean && have_std && have_thermal)) {
        throw ConfigError("checkpoint " + path.string() + " lacks standardization statistics");
    }
    restore_into(params, model.params().entries());
    return norm;
}

SegOutput infer(const IhbsModel& model, const SamplePair& sample, const RunConfig& cfg) {
    NoGradGuard no_grad;
    const auto s = preprocess(sample, cfg.eval_size, cfg.norm);
    return model.forward(s.rgb, s.thermal);
}

EvalResult evaluate(const IhbsModel& model, const std::vector<SamplePair>& samples, const RunConfig& cfg) {
    if (samples.empty()) throw UsageError("nothing to evaluate: the sample list is empty");
    EvalResult r;
    for (const auto& s : samples) {
        const auto out = infer(model, s, cfg);
        const auto mask = resize_sample(s, cfg.eval_size, cfg.eval_size).mask;
        r.ids.push_back(s.id);
        r.per_image.push_back(compute_metrics(out.main_prob, mask, cfg.threshold));
        r.per_image_aux.push_back(compute_metrics(out.aux_prob, mask, cfg.threshold));
    }
    r.summary = aggregate(r.per_image, cfg.aggregation);
    r.aux_summary = aggregate(r.per_image_aux, cfg.aggregation);
    return r;
}

std::string per_image_csv(const EvalResult& result) {
    std::string s = "stem,dice,iou,accuracy,precision,specificity,recall,cl_dice\n";
    for (std::size_t i = 0; i < result.ids.size(); ++i) {
        const auto& m = result.per_image[i];
        s += result.ids[i];
        for (double v : {m.dice, m.iou, m.accuracy, m.precision, m.specificity, m.recall, m.cl_dice}) {
            s += "," + fixed(v, 8);
        }
        s += "\n";
    }
    return s;
}

TrainResult train(const RunConfig& cfg_in, const DatasetSplit& data, const fs::path& out_dir, IhbsModel* model_out,
                  const TrainHooks& hooks) {
    cfg_in.validate();
    if (data.train.empty()) throw UsageError("training split is empty");
    for (const auto& s : data.train) validate_sample(s);
    for (const auto& s : data.test) validate_sample(s);

    std::vector<SamplePair> train_raw;
    train_raw.reserve(data.train.size());
    for (const auto& s : data.train) train_raw.push_back(resize_sample(s, cfg_in.train_size, cfg_in.train_size));

    RunConfig cfg = cfg_in;
    cfg.norm = fit_standardization(train_raw);
    IhbsModel model(model_config(cfg));

    TrainResult result;
    result.norm = cfg.norm;

    std::ofstream log;
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        write_config(out_dir / "config.txt", cfg);
        log.open(out_dir / "train.log", std::ios::binary | std::ios::trunc);
        if (!log) throw IoError("cannot write " + (out_dir / "train.log").string());
        log << "# train started " << utc_timestamp() << "\n";
        log.flush();
    }

    auto params = model.parameters();
    auto state = make_optimizer_state(params, cfg.optim);
    const auto& val = data.test.empty() ? data.train : data.test;
    const std::size_t n = train_raw.size();
    bool saved_best = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled(n, Rng::derive(cfg.seed, kShuffleStream, epoch));
        EpochLog e;
        e.epoch = epoch;
        std::size_t step = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const real inv_batch = static_cast<real>(1.0 / static_cast<double>(end - start));
            zero_grad(params);
            for (std::size_t b = start; b < end; ++b) {
                const auto idx = order[b];
                SamplePair s = train_raw[idx];
                if (cfg.augment) {
                    s = augment(s, Rng::derive(cfg.seed, kAugmentStream, epoch, idx).bits(), cfg.train_size);
                }
                s = standardize(s, cfg.norm);
                const auto out = model.forward(s.rgb, s.thermal);
                const auto loss = composite_loss(s.mask, out.main_prob, out.aux_prob, cfg.loss);
                e.total += loss.total.item();
                e.main += loss.main.weighted.item();
                e.aux += loss.aux.weighted.item();
                e.topology += loss.main.topology;
                e.ce += loss.main.ce;
                e.dice += loss.main.dice;
                backward(scale(loss.total, inv_batch));
            }
            optimizer_step(params, state);
            if (hooks.after_backward) hooks.after_backward(epoch, step, model);
            ++step;
        }
        const double dn = static_cast<double>(n);
        e.total /= dn;
        e.main /= dn;
        e.aux /= dn;
        e.topology /= dn;
        e.ce /= dn;
        e.dice /= dn;
        e.val_dice = evaluate(model, val, cfg).summary.dice;
        result.epochs.push_back(e);
        if (e.val_dice > result.best_val_dice) {
            result.best_val_dice = e.val_dice;
            result.best_epoch = epoch;
            if (!out_dir.empty()) {
                save_checkpoint(out_dir / "best.ckpt", checkpoint_entries(model, cfg.norm));
                saved_best = true;
            }
        }
        if (log.is_open()) {
            log << format_epoch_line(e) << "\n";
            log.flush();
        }
    }

    result.train_dice = evaluate(model, data.train, cfg).summary.dice;
    result.test_dice = data.test.empty() ? 0.0 : evaluate(model, data.test, cfg).summary.dice;
    if (!out_dir.empty()) {
        const auto entries = checkpoint_entries(model, cfg.norm);
        save_checkpoint(out_dir / "final.ckpt", entries);
        if (!saved_best) save_checkpoint(out_dir / "best.ckpt", entries);
        log << "final train_dice=" << fixed(result.train_dice, 8) << " test_dice=" << fixed(result.test_dice, 8)
            << " best_epoch=" << result.best_epoch << "\n";
    }
    if (model_out) *model_out = std::move(model);
    return result;
}

Prediction predict(const IhbsModel& model, const RunConfig& cfg, const Tensor& rgb, const Tensor& thermal) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb input must be [3, H, W]");
    if (thermal.rank() != 3 || thermal.dim(0) != 1) throw ShapeError("thermal input must be [1, H, W]");
    if (rgb.dim(1) != thermal.dim(1) || rgb.dim(2) != thermal.dim(2)) {
        throw ShapeError("rgb " + shape_str(rgb.shape()) + " and thermal " + shape_str(thermal.shape()) +
                         " are not aligned");
    }
    const auto h = rgb.dim(1), w = rgb.dim(2);
    SamplePair s{rgb, thermal, Tensor::zeros({1, h, w}), "input"};
    const auto out = infer(model, s, cfg);
    Tensor prob;
    {
        NoGradGuard no_grad;
        prob = (h == cfg.eval_size && w == cfg.eval_size) ? out.main_prob : resize_bilinear(out.main_prob, h, w);
    }
    const auto bin = binarize(prob, cfg.threshold);
    const auto skeleton = hard_skeleton(bin, h, w);

    Prediction p;
    p.probability = prob;
    p.mask = tensor_to_image(threshold_map(prob, cfg.threshold));
    p.overlay = tensor_to_image(rgb);
    for (std::size_t i = 0; i < h * w; ++i) {
        if (bin[i]) {
            p.overlay.pixels[3 * i] = 255;
            p.overlay.pixels[3 * i + 1] = 0;
            p.overlay.pixels[3 * i + 2] = 0;
        }
        if (skeleton[i]) p.overlay.pixels[3 * i + 1] = 255;
    }
    return p;
}

std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& channels,
                                      const std::vector<std::size_t>& segments, std::size_t max_measured,
                                      std::size_t repeats) {
    std::vector<BenchRow> rows;
    Rng rng(7);
    for (auto size : sizes) {
        for (auto c : channels) {
            for (auto n : segments) {
                if (n == 0 || c % n != 0) continue;
                BenchRow row;
                row.size = size;
                row.key_channels = row.value_channels = c;
                row.segments = n;
                const auto cost = attention_cost_estimate(size, size, c, c, n, sizeof(float));
                row.naive_bytes = cost.naive_bytes;
                row.efficient_bytes = cost.efficient_bytes;
                row.ratio = cost.ratio;
                if (size <= max_measured) {
                    NoGradGuard no_grad;
                    auto make = [&] {
                        std::vector<real> v(c * size * size);
                        for (auto& x : v) x = static_cast<real>(rng.normal());
                        return Tensor::from({c, size, size}, std::move(v));
                    };
                    const auto q = make(), k = make(), v = make();
                    AttentionProbe probe;
                    efficient_cross_attention(q, k, v, n, &probe);
                    row.measured = true;
                    row.measured_buffers = probe.buffers;
                    row.measured_bytes = probe.bytes * sizeof(float) / sizeof(real);
                    row.efficient_ms = time_ms(repeats, [&] { efficient_cross_attention(q, k, v, n); });
                    row.naive_ms = time_ms(repeats, [&] { dense_factorized_attention(q, k, v, n); });
                }
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string s =
        "height,width,key_channels,value_channels,segments,naive_bytes,naive_gb,efficient_bytes,efficient_mb,ratio,"
        "measured_buffers,measured_bytes,naive_ms,efficient_ms\n";
    for (const auto& r : rows) {
        char buf[512];
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%zu,%zu,%.0f,%.2f,%.0f,%.3f,%.1f,", r.size, r.size,
                      r.key_channels, r.value_channels, r.segments, r.naive_bytes, r.naive_bytes / 1e9,
                      r.efficient_bytes, r.efficient_bytes / 1e6, r.ratio);
        s += buf;
        if (r.measured) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.4f,%.4f\n", r.measured_buffers, r.measured_bytes, r.naive_ms,
                          r.efficient_ms);
        } else {
            std::snprintf(buf, sizeof(buf), ",,,\n");
        }
        s += buf;
    }
    return s;
}

IRFF_END_NAMESPACE
