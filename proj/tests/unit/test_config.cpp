#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "irff/error.hpp"
#include "irff/run_config.hpp"

using namespace irff;

TEST(Presets, DeskDefaults) {
    const auto c = preset_config("desk");
    EXPECT_EQ(c.preset, "desk");
    EXPECT_EQ(c.train_count, 200u);
    EXPECT_EQ(c.test_count, 40u);
    EXPECT_EQ(c.epochs, 50u);
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.train_size, 64u);
    EXPECT_EQ(c.aggregation, Aggregation::micro);
    EXPECT_DOUBLE_EQ(c.threshold, 0.5);
    EXPECT_NO_THROW(c.validate());
}

TEST(Presets, PaperProtocol) {
    const auto c = preset_config("paper-protocol");
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_EQ(c.epochs, 150u);
    EXPECT_EQ(c.train_size, 480u);
    EXPECT_EQ(c.eval_size, 480u);
    EXPECT_NEAR(c.optim.weight_decay, 1e-4, 1e-9);
    EXPECT_NEAR(c.optim.lr, 1e-3, 1e-9);
    EXPECT_NEAR(c.loss.alpha, 0.3, 1e-7);
    EXPECT_NEAR(c.loss.beta, 1.0, 1e-7);
    EXPECT_NEAR(c.loss.gamma, 1.0, 1e-7);
    EXPECT_NEAR(c.loss.delta, 0.1, 1e-7);
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW(preset_config("laptop"), ConfigError);
    EXPECT_EQ(preset_names().size(), 2u);
}

TEST(Settings, ApplyTypedValues) {
    auto c = preset_config("desk");
    apply_setting(c, "epochs", "7");
    apply_setting(c, "loss.alpha", "0.25");
    apply_setting(c, "augment", "off");
    apply_setting(c, "aggregation", "macro");
    apply_setting(c, "model.fusion_stages", "0,2");
    apply_setting(c, "data_root", "/tmp/x y");
    EXPECT_EQ(c.epochs, 7u);
    EXPECT_NEAR(c.loss.alpha, 0.25, 1e-9);
    EXPECT_FALSE(c.augment);
    EXPECT_EQ(c.aggregation, Aggregation::macro);
    EXPECT_TRUE(c.model.fusion_enabled[0]);
    EXPECT_FALSE(c.model.fusion_enabled[1]);
    EXPECT_TRUE(c.model.fusion_enabled[2]);
    EXPECT_EQ(c.data_root, "/tmp/x y");
    apply_setting(c, "model.fusion_stages", "none");
    for (bool b : c.model.fusion_enabled) EXPECT_FALSE(b);
}

TEST(Settings, Errors) {
    auto c = preset_config("desk");
    try {
        apply_setting(c, "los.alpha", "1");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("los.alpha"), std::string::npos);
    }
    EXPECT_THROW(apply_setting(c, "epochs", "ten"), ConfigError);
    EXPECT_THROW(apply_setting(c, "epochs", "5x"), ConfigError);
    EXPECT_THROW(apply_setting(c, "augment", "maybe"), ConfigError);
    EXPECT_THROW(apply_setting(c, "model.fusion_stages", "9"), ConfigError);
    EXPECT_THROW(apply_setting(c, "norm.rgb_mean", "0.1,0.2"), ConfigError);
}

TEST(Settings, PresetResetsEverything) {
    auto c = preset_config("desk");
    apply_setting(c, "epochs", "3");
    apply_setting(c, "preset", "desk");
    EXPECT_EQ(c.epochs, 50u);
}

TEST(Validate, RejectsOutOfRange) {
    auto make = [](const char* k, const char* v) {
        auto c = preset_config("desk");
        apply_setting(c, k, v);
        return c;
    };
    EXPECT_THROW(make("batch_size", "0").validate(), ConfigError);
    EXPECT_THROW(make("train_size", "16").validate(), ConfigError);
    EXPECT_THROW(make("eval_size", "60").validate(), ConfigError);
    EXPECT_THROW(make("optim.lr", "0").validate(), ConfigError);
    EXPECT_THROW(make("optim.beta2", "1").validate(), ConfigError);
    EXPECT_THROW(make("threshold", "1").validate(), ConfigError);
    EXPECT_THROW(make("loss.alpha", "-0.1").validate(), ConfigError);
    EXPECT_THROW(make("norm.thermal_std", "0").validate(), ConfigError);
}

TEST(ConfigText, ParsesCommentsAndBlanks) {
    const auto items = parse_config_text("# header\n\n  epochs = 4  # inline\nseed=9\n");
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[0], (std::pair<std::string, std::string>{"epochs", "4"}));
    EXPECT_EQ(items[1], (std::pair<std::string, std::string>{"seed", "9"}));
    EXPECT_THROW(parse_config_text("epochs 4\n"), ConfigError);
}

TEST(ConfigText, PresetLineIsTheBase) {
    auto c = preset_config("desk");
    apply_config_text(c, "epochs = 3\npreset = paper-protocol\n");
    EXPECT_EQ(c.preset, "paper-protocol");
    EXPECT_EQ(c.epochs, 3u);
    EXPECT_EQ(c.train_size, 480u);
}

TEST(ConfigText, FormatRoundTrip) {
    auto c = preset_config("paper-protocol");
    apply_setting(c, "loss.alpha", "0.123456789");
    apply_setting(c, "seed", "18446744073709551615");
    apply_setting(c, "norm.rgb_mean", "0.1,0.2,0.3");
    apply_setting(c, "model.fusion_stages", "1,2");
    apply_setting(c, "output_dir", "runs/a");
    const auto text = format_config(c);
    RunConfig back = preset_config("desk");
    apply_config_text(back, text);
    EXPECT_EQ(format_config(back), text);
    EXPECT_EQ(back.seed, 18446744073709551615ULL);
    EXPECT_EQ(back.output_dir, "runs/a");

    const auto items = config_items(c);
    EXPECT_EQ(items.front().first, "preset");
    std::set<std::string> keys;
    for (const auto& [k, v] : items) EXPECT_TRUE(keys.insert(k).second) << k;
}

TEST(ConfigText, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "irff_config_test" / "config.txt";
    auto c = preset_config("desk");
    apply_setting(c, "epochs", "11");
    write_config(path, c);
    RunConfig back;
    apply_config_file(back, path);
    EXPECT_EQ(format_config(back), format_config(c));
    EXPECT_THROW(apply_config_file(back, path.parent_path() / "missing.txt"), IoError);
}
