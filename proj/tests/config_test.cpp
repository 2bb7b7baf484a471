#include "rvae/config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "temp_dir.hpp"

namespace rvae {
namespace {

const char* kText = R"(# top comment
seed = 7
  name   =  run one   # trailing


[train]
epochs = 20
lr = 1e-3
betas = 0.001, 0.01 ,0.1
flag = yes

[data]
path = /tmp/x.idx
)";

TEST(ConfigParse, SectionsCommentsAndTrimming) {
  const auto c = Config::parse(kText, "t.cfg");
  EXPECT_EQ(c.get("seed"), "7");
  EXPECT_EQ(c.get("name"), "run one");
  EXPECT_EQ(c.get("train.epochs"), "20");
  EXPECT_EQ(c.get("train.lr"), "1e-3");
  EXPECT_EQ(c.get("data.path"), "/tmp/x.idx");
  EXPECT_EQ(c.values().size(), 7u);
}

TEST(ConfigParse, MalformedLinesNameTheLine) {
  try {
    Config::parse("a = 1\n[broken\n", "bad.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse("just words\n"), ConfigError);
  EXPECT_THROW(Config::parse(" = 3\n"), ConfigError);
}

TEST(ConfigGet, TypedGetters) {
  const auto c = Config::parse(kText);
  EXPECT_EQ(c.get_int("train.epochs"), 20);
  EXPECT_EQ(c.get_uint("seed", 0), 7u);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 1e-3);
  EXPECT_TRUE(c.get_bool("train.flag", false));
  EXPECT_EQ(c.get_doubles("train.betas"), (std::vector<double>{0.001, 0.01, 0.1}));
  EXPECT_EQ(c.get_strings("train.betas"), (std::vector<std::string>{"0.001", "0.01", "0.1"}));
}

TEST(ConfigGet, FallbacksAndMissingKeys) {
  const auto c = Config::parse(kText);
  EXPECT_EQ(c.get("nope", "dflt"), "dflt");
  EXPECT_EQ(c.get_int("nope", -4), -4);
  EXPECT_DOUBLE_EQ(c.get_double("nope", 2.5), 2.5);
  EXPECT_FALSE(c.get_bool("nope", false));
  EXPECT_THROW(c.get("nope"), ConfigError);
  EXPECT_THROW(c.get_doubles("nope"), ConfigError);
}

TEST(ConfigGet, BadValuesThrow) {
  Config c;
  c.set("a", "12x");
  c.set("b", "maybe");
  c.set("c", "-3");
  c.set("d", "1, two");
  EXPECT_THROW(c.get_int("a"), ConfigError);
  EXPECT_THROW(c.get_double("a"), ConfigError);
  EXPECT_THROW(c.get_bool("b", true), ConfigError);
  EXPECT_THROW(c.get_uint("c", 0), ConfigError);
  EXPECT_THROW(c.get_doubles("d"), ConfigError);
  EXPECT_THROW(c.get_int("c.5"), ConfigError);
}

TEST(ConfigKeys, RequireKnownNamesOffender) {
  const auto c = Config::parse("seed = 1\n[train]\nepohcs = 3\n");
  try {
    c.require_known({"seed", "train.epochs"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epohcs"), std::string::npos);
  }
  EXPECT_NO_THROW(c.require_known({"seed", "train.epohcs"}));
}

TEST(ConfigKeys, MergeOverridesAndSectionStrips) {
  auto c = Config::parse(kText);
  c.merge(Config::parse("[train]\nepochs = 3\nextra = z\n"));
  EXPECT_EQ(c.get_int("train.epochs"), 3);
  EXPECT_EQ(c.get("train.extra"), "z");
  EXPECT_EQ(c.get("seed"), "7");
  const auto t = c.section("train");
  EXPECT_EQ(t.get("epochs"), "3");
  EXPECT_FALSE(t.has("seed"));
  EXPECT_FALSE(t.has("data.path"));
  c.erase("seed");
  EXPECT_FALSE(c.has("seed"));
}

TEST(ConfigDump, ParseOfDumpIsIdentity) {
  const auto c = Config::parse(kText);
  const auto text = c.dump();
  EXPECT_EQ(Config::parse(text), c);
  EXPECT_EQ(Config::parse(text).dump(), text);
}

TEST(ConfigDump, LoadFromFile) {
  testing::TempDir dir;
  testing::write_file(dir / "a.cfg", kText);
  EXPECT_EQ(Config::load(dir / "a.cfg"), Config::parse(kText));
  EXPECT_THROW(Config::load(dir / "missing.cfg"), ConfigError);
}

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::pow(10.0, u(rng)) * (i % 2 ? 1 : -1);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-3), "0.001");
  const double tiny = std::numeric_limits<double>::denorm_min();
  Config c;
  c.set("x", format_double(tiny));
  EXPECT_EQ(c.get_double("x"), tiny);
}

}  // namespace
}  // namespace rvae
