#include <gtest/gtest.h>

#include "anm/grid.hpp"
#include "fixtures.hpp"

using namespace anm;
using nlohmann::json;

TEST(Config, DeskConfigShape) {
  const auto& c = test::desk();
  EXPECT_EQ(c.n_buses(), 6);
  EXPECT_EQ(c.n_devices(), 7);
  int des = 0;
  for (const auto& d : c.devices) des += d.kind == DeviceKind::des;
  EXPECT_EQ(des, 1);
  EXPECT_EQ(c.devices[c.slack_device()].bus, 1);
  EXPECT_EQ(c.aux_modulus, 96);
  EXPECT_DOUBLE_EQ(c.delta_t, 0.25);
}

TEST(Config, SlackOffBusOneRejected) {
  auto j = test::desk_json();
  j["devices"][0]["bus"] = 2;
  try {
    parse_config(j.dump());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("devices[0].bus"), std::string::npos) << e.what();
  }
}

TEST(Config, ZeroEfficiencyRejected) {
  auto j = test::desk_json();
  for (auto& d : j["devices"])
    if (d["kind"] == "des") d["eta"] = 0.0;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
}

TEST(Config, MissingSchemaVersionNamed) {
  auto j = test::desk_json();
  j.erase("schema_version");
  try {
    parse_config(j.dump());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("schema_version", 0), 0u);
  }
}

TEST(Config, HashStableAndSensitive) {
  const auto a = parse_config(test::desk_json().dump());
  const auto b = parse_config(test::desk_json().dump());
  EXPECT_EQ(a.content_hash(), b.content_hash());
  auto j = test::desk_json();
  j["lambda_penalty"] = 50.0;
  EXPECT_NE(parse_config(j.dump()).content_hash(), a.content_hash());
}

TEST(Admittance, SingleBranchStamp) {
  const auto c = parse_config(test::two_bus_json().dump());
  const auto y = build_admittance(c);
  const std::complex<double> g(1.0, -5.0);
  EXPECT_NEAR(std::abs(y(0, 0) - g), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(1, 1) - g), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(0, 1) + g), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(1, 0) + g), 0.0, 1e-15);
}

TEST(Admittance, ShuntAddsToBothDiagonals) {
  auto j = test::two_bus_json();
  j["branches"][0]["y_shunt"] = {0.0, 0.1};
  const auto y = build_admittance(parse_config(j.dump()));
  EXPECT_NEAR(std::abs(y(0, 0) - std::complex<double>(1.0, -4.9)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(1, 1) - std::complex<double>(1.0, -4.9)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(0, 1) - std::complex<double>(-1.0, 5.0)), 0.0, 1e-15);
}

TEST(Admittance, NoBranchesIsZero) {
  auto j = test::two_bus_json();
  j["branches"] = json::array();
  const auto y = build_admittance(parse_config(j.dump()));
  EXPECT_EQ(y.norm(), 0.0);
}

TEST(Admittance, TapRatioStamp) {
  auto j = test::two_bus_json();
  j["branches"][0]["tap"] = 2.0;
  const auto y = build_admittance(parse_config(j.dump()));
  const std::complex<double> g(1.0, -5.0);
  EXPECT_NEAR(std::abs(y(0, 0) - g / 4.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(0, 1) + g / 2.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(y(1, 1) - g), 0.0, 1e-15);
}

TEST(Injections, SummedPerBus) {
  const auto& c = test::desk();
  std::vector<std::pair<double, double>> p(c.devices.size(), {0.0, 0.0});
  p[1] = {2.0, 0.5};   // residential, bus 3
  p[2] = {-5.0, 1.0};  // pv, bus 3
  const auto inj = aggregate_bus_injections(p, c);
  EXPECT_DOUBLE_EQ(inj.p[1], -3.0);
  EXPECT_DOUBLE_EQ(inj.q[1], 1.5);
}

TEST(Injections, ZeroPowersZeroInjections) {
  const auto& c = test::desk();
  std::vector<std::pair<double, double>> p(c.devices.size(), {0.0, 0.0});
  const auto inj = aggregate_bus_injections(p, c);
  for (double v : inj.p) EXPECT_EQ(v, 0.0);
  for (double v : inj.q) EXPECT_EQ(v, 0.0);
}

TEST(Injections, DistinctBusesPassThrough) {
  const auto& c = test::desk();
  std::vector<std::pair<double, double>> p(c.devices.size(), {0.0, 0.0});
  p[5] = {-7.0, -2.0};  // ev, bus 5
  p[6] = {3.0, 4.0};    // des, bus 6
  const auto inj = aggregate_bus_injections(p, c);
  EXPECT_DOUBLE_EQ(inj.p[3], -7.0);
  EXPECT_DOUBLE_EQ(inj.q[3], -2.0);
  EXPECT_DOUBLE_EQ(inj.p[4], 3.0);
  EXPECT_DOUBLE_EQ(inj.q[4], 4.0);
}

TEST(Injections, SlackIgnored) {
  const auto& c = test::desk();
  std::vector<std::pair<double, double>> p(c.devices.size(), {0.0, 0.0});
  p[c.slack_device()] = {99.0, 99.0};
  const auto inj = aggregate_bus_injections(p, c);
  for (double v : inj.p) EXPECT_EQ(v, 0.0);
}
