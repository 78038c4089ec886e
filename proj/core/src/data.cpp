#include "irff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "irff/image_io.hpp"
#include "irff/ops.hpp"
#include "irff/rng.hpp"

IRFF_BEGIN_NAMESPACE

namespace fs = std::filesystem;

namespace {

constexpr const char* kModalities[] = {"rgb", "thermal", "mask"};

struct Canvas {
    std::size_t h, w;
    std::vector<double> v;
    Canvas(std::size_t h_, std::size_t w_, double fill = 0.0) : h(h_), w(w_), v(h_ * w_, fill) {}
    double& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
    double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

// Smooth value noise: random lattice every `cell` pixels, bilinear between.
Canvas value_noise(Rng& rng, std::size_t size, std::size_t cell) {
    const std::size_t n = size / cell + 2;
    std::vector<double> lattice(n * n);
    for (auto& l : lattice) l = rng.uniform(-1.0, 1.0);
    Canvas out(size, size);
    for (std::size_t y = 0; y < size; ++y) {
        const double fy = static_cast<double>(y) / cell;
        const auto y0 = static_cast<std::size_t>(fy);
        const double ty = fy - y0;
        for (std::size_t x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x) / cell;
            const auto x0 = static_cast<std::size_t>(fx);
            const double tx = fx - x0;
            const double a = lattice[y0 * n + x0], b = lattice[y0 * n + x0 + 1];
            const double c = lattice[(y0 + 1) * n + x0], d = lattice[(y0 + 1) * n + x0 + 1];
            out.at(y, x) = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
        }
    }
    return out;
}

Canvas gaussian_blur(const Canvas& in, double sigma) {
    if (sigma <= 0) return in;
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double total = 0;
    for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= total;
    const int h = static_cast<int>(in.h), w = static_cast<int>(in.w);
    Canvas tmp(in.h, in.w), out(in.h, in.w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in.at(y, std::clamp(x + i, 0, w - 1));
            tmp.at(y, x) = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(std::clamp(y + i, 0, h - 1), x);
            out.at(y, x) = s;
        }
    }
    return out;
}

struct Walker {
    double x, y, heading;
    std::size_t steps;
};

void stamp(Canvas& mask, double cx, double cy, double radius) {
    const int lo_y = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    const int hi_y = std::min(static_cast<int>(mask.h) - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    const int lo_x = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    const int hi_x = std::min(static_cast<int>(mask.w) - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= radius * radius) mask.at(y, x) = 1.0;
        }
    }
}

void draw_crack(Canvas& mask, Rng& rng, const SynthParams& p) {
    const double size = static_cast<double>(p.size);
    const double margin = 6.0;
    const double width = rng.uniform(p.min_width, p.max_width);
    std::vector<Walker> pending{{rng.uniform(margin, size - margin), rng.uniform(margin, size - margin),
                                 rng.uniform(0.0, 2 * std::numbers::pi),
                                 static_cast<std::size_t>(rng.integer(static_cast<long long>(p.min_length),
                                                                      static_cast<long long>(p.max_length)))}};
    bool branched = false;
    while (!pending.empty()) {
        Walker wk = pending.back();
        pending.pop_back();
        const bool is_branch = branched && pending.empty() && wk.steps < p.min_length;
        double radius = (is_branch ? 0.75 : 1.0) * width / 2.0;
        for (std::size_t s = 0; s < wk.steps; ++s) {
            stamp(mask, wk.x, wk.y, std::max(0.5, radius));
            wk.heading += rng.normal(0.0, p.step_jitter);
            double nx = wk.x + std::cos(wk.heading), ny = wk.y + std::sin(wk.heading);
            if (nx < 1 || nx > size - 1 || ny < 1 || ny > size - 1) {
                wk.heading += std::numbers::pi;
                nx = wk.x + std::cos(wk.heading);
                ny = wk.y + std::sin(wk.heading);
            }
            wk.x = nx;
            wk.y = ny;
            if (!branched && rng.bernoulli(p.branch_probability)) {
                branched = true;
                const double turn = rng.uniform(0.5, 1.1) * (rng.bernoulli(0.5) ? 1 : -1);
                pending.push_back({wk.x, wk.y, wk.heading + turn, (wk.steps - s) / 2});
            }
        }
    }
}

// Dark band along a random line with soft edges.
void add_shadow(Canvas& shade, Rng& rng, double size) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double nx = -std::sin(angle), ny = std::cos(angle);
    const double px = rng.uniform(0.2, 0.8) * size, py = rng.uniform(0.2, 0.8) * size;
    const double half = rng.uniform(5.0, 12.0);
    const double depth = rng.uniform(0.15, 0.3);
    for (std::size_t y = 0; y < shade.h; ++y) {
        for (std::size_t x = 0; x < shade.w; ++x) {
            const double d = std::abs((x + 0.5 - px) * nx + (y + 0.5 - py) * ny);
            const double t = std::clamp((half - d) / 3.0, 0.0, 1.0);
            shade.at(y, x) *= 1.0 - depth * t;
        }
    }
}

// Elliptical damp patch: darker and smoother than the surrounding asphalt.
void add_watermark(Canvas& shade, Canvas& smooth, Rng& rng, double size) {
    const double cx = rng.uniform(0.15, 0.85) * size, cy = rng.uniform(0.15, 0.85) * size;
    const double rx = rng.uniform(5.0, 14.0), ry = rng.uniform(4.0, 10.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double c = std::cos(angle), s = std::sin(angle);
    const double depth = rng.uniform(0.1, 0.22);
    for (std::size_t y = 0; y < shade.h; ++y) {
        for (std::size_t x = 0; x < shade.w; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
            const double t = std::clamp((1.0 - std::sqrt(u * u + v * v)) * 3.0, 0.0, 1.0);
            shade.at(y, x) *= 1.0 - depth * t;
            smooth.at(y, x) *= 1.0 - 0.5 * t;
        }
    }
}

Tensor canvas_tensor(const std::vector<const Canvas*>& planes) {
    const auto h = planes.front()->h, w = planes.front()->w;
    std::vector<real> data;
    data.reserve(planes.size() * h * w);
    for (const auto* p : planes) {
        for (double v : p->v) data.push_back(static_cast<real>(std::clamp(v, 0.0, 1.0)));
    }
    return Tensor::from({planes.size(), h, w}, std::move(data));
}

Tensor flip_tensor(const Tensor& x, FlipAxis axis) {
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<real> out(x.numel());
    const auto d = x.data();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t px = 0; px < w; ++px) {
                const std::size_t sy = axis == FlipAxis::vertical ? h - 1 - y : y;
                const std::size_t sx = axis == FlipAxis::horizontal ? w - 1 - px : px;
                out[(k * h + y) * w + px] = d[(k * h + sy) * w + sx];
            }
        }
    }
    return Tensor::from(x.shape(), std::move(out));
}

Tensor resize_nearest(const Tensor& x, std::size_t oh, std::size_t ow) {
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<real> out(c * oh * ow);
    const auto d = x.data();
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t sy = std::min(h - 1, (y * h) / oh);
            for (std::size_t px = 0; px < ow; ++px) {
                const std::size_t sx = std::min(w - 1, (px * w) / ow);
                out[(k * oh + y) * ow + px] = d[(k * h + sy) * w + sx];
            }
        }
    }
    return Tensor::from({c, oh, ow}, std::move(out));
}

Tensor clamp_unit(const Tensor& x) {
    std::vector<real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = std::clamp(v, real(0), real(1));
    return Tensor::from(x.shape(), std::move(out));
}

std::map<std::string, fs::path> list_stems(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (ext != ".png" && ext != ".pgm") continue;
        out.emplace(e.path().stem().string(), e.path());
    }
    return out;
}

}  // namespace

void validate_sample(const SamplePair& s) {
    if (s.rgb.rank() != 3 || s.rgb.dim(0) != 3) throw DataError(s.id + ": rgb must be [3, H, W]");
    if (s.thermal.rank() != 3 || s.thermal.dim(0) != 1) throw DataError(s.id + ": thermal must be [1, H, W]");
    if (s.mask.rank() != 3 || s.mask.dim(0) != 1) throw DataError(s.id + ": mask must be [1, H, W]");
    if (s.rgb.dim(1) != s.mask.dim(1) || s.rgb.dim(2) != s.mask.dim(2) || s.thermal.dim(1) != s.mask.dim(1) ||
        s.thermal.dim(2) != s.mask.dim(2)) {
        throw DataError(s.id + ": rgb, thermal and mask sizes differ");
    }
    for (auto v : s.mask.data()) {
        if (v != real(0) && v != real(1)) throw DataError(s.id + ": mask is not binary");
    }
}

void SynthParams::validate() const {
    if (size < 32) throw ConfigError("synth size must be >= 32");
    if (min_width < 1.0 || max_width < min_width) throw ConfigError("synth width range must satisfy 1 <= min <= max");
    if (max_cracks < min_cracks) throw ConfigError("synth crack count range is inverted");
    if (max_length < min_length || min_length < 1) throw ConfigError("synth crack length range is invalid");
    if (step_jitter < 0 || thermal_blur < 0 || rgb_noise < 0 || thermal_noise < 0 || texture_amplitude < 0) {
        throw ConfigError("synth noise and jitter parameters must be non-negative");
    }
    if (branch_probability < 0 || branch_probability > 1) throw ConfigError("branch_probability must be in [0, 1]");
}

SamplePair synth_generate(std::uint64_t seed, const SynthParams& p) {
    p.validate();
    Rng rng(seed);
    const std::size_t n = p.size;
    const double size = static_cast<double>(n);

    Canvas mask(n, n);
    const auto cracks = static_cast<std::size_t>(
        rng.integer(static_cast<long long>(p.min_cracks), static_cast<long long>(p.max_cracks)));
    for (std::size_t i = 0; i < cracks; ++i) draw_crack(mask, rng, p);

    Canvas coarse = value_noise(rng, n, 16);
    Canvas fine = value_noise(rng, n, 4);
    Canvas shade(n, n, 1.0), smooth(n, n, 1.0);
    if (p.shadows && rng.bernoulli(0.6)) add_shadow(shade, rng, size);
    if (p.watermarks && rng.bernoulli(0.6)) add_watermark(shade, smooth, rng, size);
    const Canvas crack_soft = gaussian_blur(mask, 0.6);

    const double base = rng.uniform(0.42, 0.58);
    std::array<double, 3> tint{rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
    const double darkening = p.crack_darkening * rng.uniform(0.8, 1.2);
    std::array<Canvas, 3> rgb{Canvas(n, n), Canvas(n, n), Canvas(n, n)};
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double texture = p.texture_amplitude * (0.6 * coarse.at(y, x) + 0.4 * fine.at(y, x) * smooth.at(y, x));
            const double grain = rng.normal(0.0, p.rgb_noise);
            const double crack = 1.0 - darkening * std::min(1.0, 1.25 * crack_soft.at(y, x));
            for (std::size_t k = 0; k < 3; ++k) {
                rgb[k].at(y, x) = (base + tint[k] + texture + grain) * shade.at(y, x) * crack;
            }
        }
    }

    const Canvas heat = gaussian_blur(mask, p.thermal_blur);
    const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
    const double level = rng.uniform(0.3, 0.45);
    const double contrast = p.thermal_contrast * rng.uniform(0.85, 1.15);
    Canvas thermal(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            thermal.at(y, x) = level + gx * (x / size - 0.5) + gy * (y / size - 0.5) + contrast * heat.at(y, x) +
                               rng.normal(0.0, p.thermal_noise);
        }
    }

    SamplePair s;
    s.rgb = canvas_tensor({&rgb[0], &rgb[1], &rgb[2]});
    s.thermal = canvas_tensor({&thermal});
    s.mask = canvas_tensor({&mask});
    s.id = "synth_" + std::to_string(seed);
    return s;
}

SamplePair synth_corpus_sample(std::uint64_t corpus_seed, std::size_t index, const SynthParams& params) {
    auto s = synth_generate(Rng::derive(corpus_seed, index).bits(), params);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05zu", index);
    s.id = std::string("s") + buf;
    return s;
}

double foreground_fraction(const Tensor& mask) {
    double fg = 0;
    for (auto v : mask.data()) fg += v;
    return fg / static_cast<double>(mask.numel());
}

void write_sample(const fs::path& root, const SamplePair& s) {
    validate_sample(s);
    write_png(root / "rgb" / (s.id + ".png"), tensor_to_image(s.rgb));
    write_png(root / "thermal" / (s.id + ".png"), tensor_to_image(s.thermal));
    write_png(root / "mask" / (s.id + ".png"), tensor_to_image(s.mask));
}

void write_split(const fs::path& root, const std::vector<SplitEntry>& entries) {
    std::error_code ec;
    fs::create_directories(root, ec);
    for (const char* m : kModalities) fs::create_directories(root / m, ec);
    std::ofstream out(root / "split.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (root / "split.txt").string());
    for (const auto& e : entries) out << e.stem << ' ' << (e.role == SplitRole::train ? "train" : "test") << '\n';
    if (!out) throw IoError("cannot write " + (root / "split.txt").string());
}

std::vector<SplitEntry> read_split(const fs::path& root) {
    std::vector<SplitEntry> out;
    const auto path = root / "split.txt";
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string stem, role;
        if (!(ls >> stem)) continue;
        if (!(ls >> role) || (role != "train" && role != "test")) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected '<stem> train|test'");
        }
        out.push_back({stem, role == "train" ? SplitRole::train : SplitRole::test});
    }
    return out;
}

std::vector<SamplePair> load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
    const auto rgb = list_stems(root / "rgb");
    const auto thermal = list_stems(root / "thermal");
    const auto mask = list_stems(root / "mask");

    std::set<std::string> all;
    for (const auto* m : {&rgb, &thermal, &mask}) {
        for (const auto& [stem, _] : *m) all.insert(stem);
    }
    std::string missing;
    for (const auto& stem : all) {
        std::string lacks;
        if (!rgb.count(stem)) lacks += " rgb";
        if (!thermal.count(stem)) lacks += " thermal";
        if (!mask.count(stem)) lacks += " mask";
        if (!lacks.empty()) missing += "\n  " + stem + " (missing" + lacks + ")";
    }
    if (!missing.empty()) throw DataError("unmatched stems in " + root.string() + ":" + missing);

    std::vector<SamplePair> out;
    out.reserve(all.size());
    for (const auto& stem : all) {
        SamplePair s;
        s.id = stem;
        s.rgb = image_to_tensor(read_image(rgb.at(stem), 3));
        s.thermal = image_to_tensor(read_image(thermal.at(stem), 1));
        auto m = image_to_tensor(read_image(mask.at(stem), 1));
        std::vector<real> bin(m.numel());
        for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = m.data()[i] >= real(0.5) ? real(1) : real(0);
        s.mask = Tensor::from(m.shape(), std::move(bin));
        validate_sample(s);
        out.push_back(std::move(s));
    }
    return out;
}

DatasetSplit load_split_dataset(const fs::path& root) {
    auto samples = load_dataset(root);
    std::map<std::string, SplitRole> roles;
    for (const auto& e : read_split(root)) roles[e.stem] = e.role;
    DatasetSplit out;
    for (auto& s : samples) {
        auto it = roles.find(s.id);
        const bool test = it != roles.end() && it->second == SplitRole::test;
        (test ? out.test : out.train).push_back(std::move(s));
    }
    return out;
}

SamplePair flip(const SamplePair& s, FlipAxis axis) {
    return {flip_tensor(s.rgb, axis), flip_tensor(s.thermal, axis), flip_tensor(s.mask, axis), s.id};
}

SamplePair adjust_rgb(const SamplePair& s, double brightness, double contrast) {
    std::vector<real> out(s.rgb.numel());
    const auto d = s.rgb.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = (static_cast<double>(d[i]) - 0.5) * contrast + 0.5 + brightness;
        out[i] = static_cast<real>(std::clamp(v, 0.0, 1.0));
    }
    return {Tensor::from(s.rgb.shape(), std::move(out)), s.thermal, s.mask, s.id};
}

SamplePair resize_sample(const SamplePair& s, std::size_t height, std::size_t width) {
    if (s.mask.dim(1) == height && s.mask.dim(2) == width) return s;
    NoGradGuard no_grad;
    return {clamp_unit(resize_bilinear(s.rgb, height, width)), clamp_unit(resize_bilinear(s.thermal, height, width)),
            resize_nearest(s.mask, height, width), s.id};
}

SamplePair augment(const SamplePair& s, std::uint64_t seed, std::size_t train_size, const AugmentParams& p) {
    Rng rng(seed);
    SamplePair out = s;
    if (rng.bernoulli(p.flip_probability)) out = flip(out, FlipAxis::horizontal);
    if (rng.bernoulli(p.flip_probability)) out = flip(out, FlipAxis::vertical);
    const double brightness = rng.uniform(-p.brightness, p.brightness);
    const double contrast = rng.uniform(1.0 - p.contrast, 1.0 + p.contrast);
    out = adjust_rgb(out, brightness, contrast);
    if (train_size > 0) out = resize_sample(out, train_size, train_size);
    return out;
}

Standardization fit_standardization(const std::vector<SamplePair>& samples) {
    if (samples.empty()) throw UsageError("cannot fit standardization on an empty corpus");
    std::array<double, 4> sum{}, sq{};
    std::array<double, 4> count{};
    for (const auto& s : samples) {
        const auto plane = s.rgb.dim(1) * s.rgb.dim(2);
        const auto rgb = s.rgb.data();
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double v = rgb[k * plane + i];
                sum[k] += v;
                sq[k] += v * v;
            }
            count[k] += static_cast<double>(plane);
        }
        for (auto v : s.thermal.data()) {
            sum[3] += v;
            sq[3] += static_cast<double>(v) * v;
        }
        count[3] += static_cast<double>(s.thermal.numel());
    }
    Standardization st;
    auto finish = [&](std::size_t k, double& mean, double& stddev) {
        mean = sum[k] / count[k];
        const double var = std::max(0.0, sq[k] / count[k] - mean * mean);
        stddev = std::max(std::sqrt(var), 1e-6);
    };
    for (std::size_t k = 0; k < 3; ++k) finish(k, st.rgb_mean[k], st.rgb_std[k]);
    finish(3, st.thermal_mean, st.thermal_std);
    return st;
}

SamplePair standardize(const SamplePair& s, const Standardization& st) {
    const auto plane = s.rgb.dim(1) * s.rgb.dim(2);
    std::vector<real> rgb(s.rgb.numel()), thermal(s.thermal.numel());
    const auto r = s.rgb.data();
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < plane; ++i) {
            rgb[k * plane + i] = static_cast<real>((r[k * plane + i] - st.rgb_mean[k]) / st.rgb_std[k]);
        }
    }
    const auto t = s.thermal.data();
    for (std::size_t i = 0; i < thermal.size(); ++i) {
        thermal[i] = static_cast<real>((t[i] - st.thermal_mean) / st.thermal_std);
    }
    return {Tensor::from(s.rgb.shape(), std::move(rgb)), Tensor::from(s.thermal.shape(), std::move(thermal)), s.mask,
            s.id};
}

SamplePair preprocess(const SamplePair& s, std::size_t eval_size, const Standardization& stats) {
    if (eval_size < 32) throw ConfigError("eval_size must be >= 32");
    return standardize(resize_sample(s, eval_size, eval_size), stats);
}

IRFF_END_NAMESPACE
