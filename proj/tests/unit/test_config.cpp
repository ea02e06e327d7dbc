#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "sign/app.hpp"
#include "sign/config.hpp"
#include "sign/data.hpp"
#include "sign/error.hpp"

using namespace sign;

TEST(Config, DefaultsAndTypedAccess) {
    Config c;
    EXPECT_EQ(c.integer("schedule.N"), 18u);
    EXPECT_DOUBLE_EQ(c.real("schedule.rho"), 7.0);
    EXPECT_EQ(c.sizes("model.hidden"), (std::vector<std::size_t>{128, 128, 128}));
    EXPECT_EQ(c.get("train.mode"), "sign");
}

TEST(Config, UnknownKeyNamed) {
    Config c;
    try {
        c.set("schedule.NN", "4");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("schedule.NN"), std::string::npos);
    }
    EXPECT_THROW(Config::parse("loss.lamda_f = 1\n"), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
    Config c;
    EXPECT_THROW(c.set("schedule.N", "abc"), ConfigError);
    EXPECT_THROW(c.set("schedule.N", "-3"), ConfigError);
    EXPECT_THROW(c.set("train.mode", "gan"), ConfigError);
    EXPECT_THROW(c.set("train.lr_decay", "step"), ConfigError);
    EXPECT_THROW(c.set("data.normalize", "maybe"), ConfigError);
    EXPECT_THROW(c.assign("no_equals_sign"), ConfigError);
    EXPECT_THROW(Config::parse("just words\n"), ConfigError);
}

TEST(Config, CommentsAndWhitespace) {
    Config c = Config::parse("# header\n  schedule.N =  32   # trailing\n\nseed=5\n");
    EXPECT_EQ(c.integer("schedule.N"), 32u);
    EXPECT_EQ(c.integer("seed"), 5u);
}

TEST(Config, ResolvedRoundTrip) {
    Config c;
    c.set("loss.lambda_n", "0.25");
    c.set("data.kind", "rings");
    c.set("model.hidden", "64,32");
    Config back = Config::parse(c.resolved());
    EXPECT_EQ(back.resolved(), c.resolved());
    for (const auto& k : Config::keys()) EXPECT_EQ(back.get(k), c.get(k)) << k;
}

TEST(Config, TrainingHashIgnoresRunLength) {
    Config a, b;
    b.set("train.steps", "7");
    b.set("train.resume", "somewhere.ckpt");
    EXPECT_EQ(a.training_hash(), b.training_hash());
    b.set("train.lr", "0.01");
    EXPECT_NE(a.training_hash(), b.training_hash());
}

TEST(Config, FileLoad) {
    const std::string p = (std::filesystem::temp_directory_path() / "sign_test.cfg").string();
    write_text(p, "schedule.T = 5\n");
    EXPECT_DOUBLE_EQ(Config::load(p).real("schedule.T"), 5.0);
    std::filesystem::remove(p);
    EXPECT_THROW(Config::load(p), IoError);
}

TEST(App, TrainConfigConsistency) {
    Config c;
    c.set("dmd.enabled", "true");
    EXPECT_THROW(app::train_config(c), ConfigError);
    c.set("loss.lambda_d", "0.1");
    EXPECT_NO_THROW(app::train_config(c));
    Config ign;
    ign.set("train.mode", "ign");
    EXPECT_EQ(app::train_config(ign).grad_clip, 0.0);
}

TEST(App, StreamsAreIndependentAndStable) {
    Rng a = app::stream(3, "data"), b = app::stream(3, "data"), c = app::stream(3, "eval"), d = app::stream(4, "data");
    const double va = a.normal();
    EXPECT_EQ(va, b.normal());
    EXPECT_NE(va, c.normal());
    EXPECT_NE(va, d.normal());
}

TEST(App, ModelArchFromConfig) {
    Config c;
    c.set("model.hidden", "16,8");
    auto arch = app::model_arch(c, 3);
    EXPECT_EQ(arch.widths, (std::vector<std::size_t>{3, 16, 8, 3}));
    EXPECT_TRUE(arch.skip);
}
