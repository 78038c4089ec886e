#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "irff/data.hpp"
#include "irff/error.hpp"
#include "irff/image_io.hpp"

using namespace irff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = fs::temp_directory_path() / "irff_data_tests" / (std::string(info->test_suite_name()) + "." + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool same(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const auto x = a.data();
    const auto y = b.data();
    return std::equal(x.begin(), x.end(), y.begin());
}

SamplePair small_synth(std::uint64_t seed) {
    SynthParams p;
    p.size = 32;
    p.min_length = 10;
    p.max_length = 20;
    return synth_generate(seed, p);
}

SamplePair marked_sample() {
    const std::size_t h = 4, w = 5;
    std::vector<real> rgb(3 * h * w, real(0)), th(h * w, real(0)), mask(h * w, real(0));
    for (std::size_t k = 0; k < 3; ++k) rgb[k * h * w + 1 * w + 3] = real(1);
    th[1 * w + 3] = real(1);
    mask[1 * w + 3] = real(1);
    return {Tensor::from({3, h, w}, std::move(rgb)), Tensor::from({1, h, w}, std::move(th)),
            Tensor::from({1, h, w}, std::move(mask)), "m"};
}

}  // namespace

TEST(Synth, Deterministic) {
    SynthParams p;
    for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
        const auto a = synth_generate(seed, p);
        const auto b = synth_generate(seed, p);
        EXPECT_TRUE(same(a.rgb, b.rgb));
        EXPECT_TRUE(same(a.thermal, b.thermal));
        EXPECT_TRUE(same(a.mask, b.mask));
    }
    EXPECT_FALSE(same(synth_generate(1, p).mask, synth_generate(2, p).mask));
}

TEST(Synth, ShapesAndRanges) {
    const auto s = synth_generate(3, SynthParams{});
    EXPECT_EQ(s.rgb.shape(), (Shape{3, 64, 64}));
    EXPECT_EQ(s.thermal.shape(), (Shape{1, 64, 64}));
    EXPECT_EQ(s.mask.shape(), (Shape{1, 64, 64}));
    EXPECT_NO_THROW(validate_sample(s));
    for (const Tensor* t : {&s.rgb, &s.thermal}) {
        for (auto v : t->data()) {
            EXPECT_GE(v, 0);
            EXPECT_LE(v, 1);
        }
    }
}

TEST(Synth, ZeroCracksGiveEmptyMask) {
    SynthParams p;
    p.min_cracks = 0;
    p.max_cracks = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(foreground_fraction(synth_generate(seed, p).mask), 0.0);
}

TEST(Synth, ForegroundFractionBand) {
    SynthParams p;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const double fg = foreground_fraction(synth_generate(seed, p).mask);
        EXPECT_GE(fg, 0.002) << seed;
        EXPECT_LE(fg, 0.08) << seed;
    }
}

TEST(Synth, CorpusSampleDependsOnIndexOnly) {
    SynthParams p;
    p.size = 32;
    const auto a = synth_corpus_sample(11, 4, p);
    const auto b = synth_corpus_sample(11, 4, p);
    EXPECT_TRUE(same(a.rgb, b.rgb));
    EXPECT_EQ(a.id, "s00004");
    EXPECT_FALSE(same(a.rgb, synth_corpus_sample(11, 5, p).rgb));
    EXPECT_FALSE(same(a.rgb, synth_corpus_sample(12, 4, p).rgb));
}

TEST(Synth, ValidationErrors) {
    SynthParams p;
    p.size = 31;
    EXPECT_THROW(synth_generate(0, p), ConfigError);
    p = {};
    p.min_width = 0.5;
    EXPECT_THROW(synth_generate(0, p), ConfigError);
    p = {};
    p.min_cracks = 3;
    p.max_cracks = 2;
    EXPECT_THROW(synth_generate(0, p), ConfigError);
    p = {};
    p.branch_probability = 1.5;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    p.rgb_noise = -1;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ImageIo, PngRoundTripWithinOneLevel) {
    const auto dir = scratch_dir();
    const auto s = small_synth(5);
    write_sample(dir, s);
    const auto back = load_dataset(dir);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].id, s.id);
    for (auto [orig, got] : {std::pair{&s.rgb, &back[0].rgb}, std::pair{&s.thermal, &back[0].thermal}}) {
        ASSERT_EQ(orig->shape(), got->shape());
        const auto a = orig->data();
        const auto b = got->data();
        for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LE(std::abs(a[i] - b[i]), 1.0 / 255.0 + 1e-6);
    }
    EXPECT_TRUE(same(s.mask, back[0].mask));
}

TEST(ImageIo, ReadsAsciiAndBinaryPgm) {
    const auto dir = scratch_dir();
    {
        std::ofstream f(dir / "a.pgm");
        f << "P2\n# comment\n3 2\n255\n0 128 255\n10 20 30\n";
    }
    {
        std::ofstream f(dir / "b.pgm", std::ios::binary);
        f << "P5\n2 1\n255\n";
        f.put(static_cast<char>(7));
        f.put(static_cast<char>(200));
    }
    const auto a = read_image(dir / "a.pgm", 1);
    EXPECT_EQ(a.width, 3u);
    EXPECT_EQ(a.height, 2u);
    EXPECT_EQ(a.pixels, (std::vector<std::uint8_t>{0, 128, 255, 10, 20, 30}));
    const auto b = read_image(dir / "b.pgm", 3);
    EXPECT_EQ(b.channels, 3u);
    EXPECT_EQ(b.pixels, (std::vector<std::uint8_t>{7, 7, 7, 200, 200, 200}));
}

TEST(ImageIo, Errors) {
    const auto dir = scratch_dir();
    EXPECT_THROW(read_image(dir / "nope.png", 1), IoError);
    {
        std::ofstream f(dir / "bad.png", std::ios::binary);
        f << "not a png";
    }
    EXPECT_THROW(read_image(dir / "bad.png", 1), IoError);
    {
        std::ofstream f(dir / "short.pgm", std::ios::binary);
        f << "P5\n4 4\n255\nab";
    }
    EXPECT_THROW(read_image(dir / "short.pgm", 1), IoError);
}

TEST(ImageIo, TensorQuantizationClamps) {
    const auto t = Tensor::from({1, 1, 4}, {real(-0.5), real(0), real(0.5), real(2)});
    const auto img = tensor_to_image(t);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 0, 128, 255}));
    const auto back = image_to_tensor(img);
    EXPECT_FLOAT_EQ(back.data()[3], 1.0f);
}

TEST(Dataset, EmptyDirectoriesGiveEmptyList) {
    const auto dir = scratch_dir();
    for (const char* m : {"rgb", "thermal", "mask"}) fs::create_directories(dir / m);
    EXPECT_TRUE(load_dataset(dir).empty());
    const auto split = load_split_dataset(dir);
    EXPECT_TRUE(split.train.empty());
    EXPECT_TRUE(split.test.empty());
}

TEST(Dataset, MissingRootIsIoError) { EXPECT_THROW(load_dataset(scratch_dir() / "absent"), IoError); }

TEST(Dataset, LexicographicOrder) {
    const auto dir = scratch_dir();
    for (const char* id : {"b10", "a2", "b2", "a10"}) {
        auto s = small_synth(1);
        s.id = id;
        write_sample(dir, s);
    }
    std::vector<std::string> ids;
    for (const auto& s : load_dataset(dir)) ids.push_back(s.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"a10", "a2", "b10", "b2"}));
}

TEST(Dataset, UnmatchedStemsListed) {
    const auto dir = scratch_dir();
    auto s = small_synth(2);
    s.id = "pair_ok";
    write_sample(dir, s);
    s.id = "lonely_one";
    write_sample(dir, s);
    fs::remove(dir / "mask" / "lonely_one.png");
    s.id = "lonely_two";
    write_sample(dir, s);
    fs::remove(dir / "thermal" / "lonely_two.png");
    try {
        load_dataset(dir);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("lonely_one"), std::string::npos);
        EXPECT_NE(msg.find("lonely_two"), std::string::npos);
        EXPECT_EQ(msg.find("pair_ok"), std::string::npos);
    }
}

TEST(Dataset, SizeMismatchIsDataError) {
    const auto dir = scratch_dir();
    write_sample(dir, small_synth(3));
    auto big = synth_generate(3, SynthParams{});
    big.id = small_synth(3).id;
    write_png(dir / "mask" / (big.id + ".png"), tensor_to_image(big.mask));
    EXPECT_THROW(load_dataset(dir), DataError);
}

TEST(Dataset, SplitManifest) {
    const auto dir = scratch_dir();
    for (const char* id : {"x0", "x1", "x2"}) {
        auto s = small_synth(4);
        s.id = id;
        write_sample(dir, s);
    }
    write_split(dir, {{"x0", SplitRole::train}, {"x1", SplitRole::test}});
    const auto entries = read_split(dir);
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[1].stem, "x1");
    EXPECT_EQ(entries[1].role, SplitRole::test);
    const auto split = load_split_dataset(dir);
    ASSERT_EQ(split.train.size(), 2u);
    ASSERT_EQ(split.test.size(), 1u);
    EXPECT_EQ(split.test[0].id, "x1");

    std::ofstream(dir / "split.txt") << "x0 validation\n";
    EXPECT_THROW(read_split(dir), DataError);
    fs::remove(dir / "split.txt");
    EXPECT_TRUE(read_split(dir).empty());
}

TEST(Validate, RejectsBadSamples) {
    auto s = marked_sample();
    EXPECT_NO_THROW(validate_sample(s));
    auto bad = s;
    bad.mask = Tensor::full({1, 4, 5}, real(0.5));
    EXPECT_THROW(validate_sample(bad), DataError);
    bad = s;
    bad.thermal = Tensor::zeros({1, 4, 6});
    EXPECT_THROW(validate_sample(bad), DataError);
    bad = s;
    bad.rgb = Tensor::zeros({1, 4, 5});
    EXPECT_THROW(validate_sample(bad), DataError);
}

TEST(Augment, FlipIsInvolutionAndAligned) {
    const auto s = marked_sample();
    for (auto axis : {FlipAxis::horizontal, FlipAxis::vertical}) {
        const auto once = flip(s, axis);
        const auto twice = flip(once, axis);
        EXPECT_TRUE(same(twice.rgb, s.rgb));
        EXPECT_TRUE(same(twice.thermal, s.thermal));
        EXPECT_TRUE(same(twice.mask, s.mask));
    }
    const auto h = flip(s, FlipAxis::horizontal);
    EXPECT_EQ(h.mask.at({0, 1, 1}), 1);
    EXPECT_EQ(h.thermal.at({0, 1, 1}), 1);
    EXPECT_EQ(h.rgb.at({2, 1, 1}), 1);
    const auto v = flip(s, FlipAxis::vertical);
    EXPECT_EQ(v.mask.at({0, 2, 3}), 1);
    EXPECT_EQ(v.thermal.at({0, 2, 3}), 1);
    EXPECT_EQ(v.rgb.at({0, 2, 3}), 1);
}

TEST(Augment, BrightnessShiftOnMidGray) {
    SamplePair s{Tensor::full({3, 4, 4}, real(0.5)), Tensor::full({1, 4, 4}, real(0.25)), Tensor::zeros({1, 4, 4}),
                 "g"};
    const auto out = adjust_rgb(s, 0.1, 1.0);
    for (auto v : out.rgb.data()) EXPECT_NEAR(v, 0.6, 1e-7);
    EXPECT_TRUE(same(out.thermal, s.thermal));
    EXPECT_TRUE(same(out.mask, s.mask));
    const auto c = adjust_rgb(s, 0.0, 1.7);
    for (auto v : c.rgb.data()) EXPECT_NEAR(v, 0.5, 1e-7);
    const auto hi = adjust_rgb(s, 0.9, 1.0);
    for (auto v : hi.rgb.data()) EXPECT_EQ(v, 1);
}

TEST(Augment, MaskStaysBinaryAndThermalUnjittered) {
    const auto s = small_synth(6);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = augment(s, seed, 48);
        EXPECT_EQ(out.mask.shape(), (Shape{1, 48, 48}));
        EXPECT_NO_THROW(validate_sample(out));
    }
    AugmentParams no_flip;
    no_flip.flip_probability = 0;
    const auto out = augment(s, 3, 32, no_flip);
    EXPECT_TRUE(same(out.thermal, s.thermal));
    EXPECT_TRUE(same(out.mask, s.mask));
    EXPECT_TRUE(same(augment(s, 9, 40).rgb, augment(s, 9, 40).rgb));
}

TEST(Augment, NearestResizeKeepsMaskBinary) {
    const auto s = small_synth(7);
    for (std::size_t n : {17u, 32u, 45u, 64u}) {
        const auto r = resize_sample(s, n, n);
        EXPECT_EQ(r.rgb.shape(), (Shape{3, n, n}));
        for (auto v : r.mask.data()) EXPECT_TRUE(v == 0 || v == 1);
        for (auto v : r.rgb.data()) {
            EXPECT_GE(v, 0);
            EXPECT_LE(v, 1);
        }
    }
    const auto up = resize_sample(s, 64, 64);
    EXPECT_NEAR(foreground_fraction(up.mask), foreground_fraction(s.mask), 1e-12);
}

TEST(Standardize, CorpusMeanZeroUnitStd) {
    SynthParams p;
    p.size = 32;
    std::vector<SamplePair> corpus;
    for (std::size_t i = 0; i < 12; ++i) corpus.push_back(synth_corpus_sample(5, i, p));
    const auto st = fit_standardization(corpus);
    std::array<double, 4> sum{}, sq{};
    double n = 0;
    for (const auto& s : corpus) {
        const auto z = standardize(s, st);
        const auto r = z.rgb.data();
        const std::size_t plane = 32 * 32;
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t i = 0; i < plane; ++i) {
                sum[k] += r[k * plane + i];
                sq[k] += static_cast<double>(r[k * plane + i]) * r[k * plane + i];
            }
        }
        for (auto v : z.thermal.data()) {
            sum[3] += v;
            sq[3] += static_cast<double>(v) * v;
        }
        n += plane;
    }
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_LT(std::abs(sum[k] / n), 1e-6) << k;
        EXPECT_NEAR(sq[k] / n, 1.0, 1e-5) << k;
    }
    EXPECT_THROW(fit_standardization({}), UsageError);
}

TEST(Standardize, PreprocessResizesAndRejectsSmallSizes) {
    const auto s = small_synth(8);
    const Standardization st;
    const auto out = preprocess(s, 48, st);
    EXPECT_EQ(out.rgb.shape(), (Shape{3, 48, 48}));
    const auto same_size = preprocess(s, 32, st);
    const auto a = same_size.rgb.data();
    const auto b = s.rgb.data();
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i] - 0.5, 1e-7);
    EXPECT_THROW(preprocess(s, 31, st), ConfigError);
}
