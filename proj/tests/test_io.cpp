#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "dymixop/config.hpp"
#include "dymixop/io.hpp"
#include "oracles.hpp"

using namespace dymixop;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dymixop_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

Tensor<double> random_like(const Tensor<double>& like, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(like.shape(), rng, like.is_complex());
}

std::vector<double> values_of(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

std::string bytes_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrajectoryDataset<double> tiny_dataset() {
  TrajectoryDataset<double> ds;
  ds.pde = "ks1d";
  std::mt19937_64 rng(11);
  ds.data = oracle::random_tensor({3, 4, 1, 8}, rng);
  ds.channel_names = {"u"};
  ds.split = {"train", "test", "train"};
  ds.spec = {{"n", "8"}, {"pde", "ks1d"}};
  return ds;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.channels = 1;
  c.width = 4;
  c.depth = 2;
  c.modes = {3};
  c.seed = 5;
  return c;
}

TEST_F(IoTest, DatasetRoundTripIsExact) {
  const auto ds = tiny_dataset();
  io::save_dataset(path("d.dmxd"), ds);
  const auto back = io::load_dataset<double>(path("d.dmxd"));
  EXPECT_EQ(back.pde, ds.pde);
  EXPECT_EQ(back.data.shape(), ds.data.shape());
  EXPECT_EQ(values_of(back.data), values_of(ds.data));
  EXPECT_EQ(back.split, ds.split);
  EXPECT_EQ(back.spec, ds.spec);
  EXPECT_FALSE(fs::exists(path("d.dmxd.tmp")));
}

TEST_F(IoTest, DatasetHeaderLayout) {
  io::save_dataset(path("d.dmxd"), tiny_dataset());
  const auto raw = bytes_of(path("d.dmxd"));
  ASSERT_GE(raw.size(), 8u);
  EXPECT_EQ(raw.substr(0, 4), "DMXD");
  const std::uint32_t len = static_cast<unsigned char>(raw[4]) | static_cast<unsigned char>(raw[5]) << 8 |
                            static_cast<unsigned char>(raw[6]) << 16 | static_cast<unsigned char>(raw[7]) << 24;
  EXPECT_EQ(raw.size(), 8u + len + 3 * 4 * 8 * sizeof(double));
  const auto header = nlohmann::json::parse(raw.substr(8, len));
  EXPECT_EQ(header.at("dtype"), "f64");
  EXPECT_EQ(header.at("shape"), nlohmann::json::array({3, 4, 1, 8}));
}

TEST_F(IoTest, DatasetLoadsIntoSinglePrecision) {
  const auto ds = tiny_dataset();
  io::save_dataset(path("d.dmxd"), ds);
  const auto back = io::load_dataset<float>(path("d.dmxd"));
  for (std::size_t i = 0; i < ds.data.size(); ++i) EXPECT_EQ(back.data[i], static_cast<float>(ds.data[i]));
}

TEST_F(IoTest, BadMagicIsAnIoError) {
  io::save_dataset(path("d.dmxd"), tiny_dataset());
  try {
    io::load_checkpoint<double>(path("d.dmxd"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST_F(IoTest, TruncatedPayloadIsRejected) {
  io::save_dataset(path("d.dmxd"), tiny_dataset());
  auto raw = bytes_of(path("d.dmxd"));
  raw.resize(raw.size() - 8);
  std::ofstream(path("cut.dmxd"), std::ios::binary).write(raw.data(), static_cast<std::streamsize>(raw.size()));
  EXPECT_THROW(io::load_dataset<double>(path("cut.dmxd")), Error);
}

TEST_F(IoTest, MissingFileIsAnIoError) {
  try {
    io::load_dataset<double>(path("absent.dmxd"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST_F(IoTest, CheckpointSaveLoadSaveIsByteIdentical) {
  DyMixOpModel<double> model(tiny_model());
  OptimizerState<double> state;
  for (const auto& p : model.parameters()) {
    state.m[p.id] = random_like(p.value(), 1);
    state.v[p.id] = random_like(p.value(), 2);
  }
  state.step = 17;
  state.epoch = 3;
  state.lr = 0.000970299;
  NormStats norm{{-1.25}, {2.5}};
  const auto run = to_values(RunConfig{}, run_keys());
  io::save_checkpoint(path("a.ckpt"), io::make_checkpoint(model, state, run, norm, norm));
  io::save_checkpoint(path("b.ckpt"), io::load_checkpoint<double>(path("a.ckpt")));
  EXPECT_EQ(bytes_of(path("a.ckpt")), bytes_of(path("b.ckpt")));
}

TEST_F(IoTest, CheckpointRestoresParametersAndOptimizer) {
  DyMixOpModel<double> model(tiny_model());
  OptimizerState<double> state;
  state.step = 4;
  state.epoch = 2;
  state.lr = 0.5;
  for (const auto& p : model.parameters()) state.m[p.id] = random_like(p.value(), 3);
  io::save_checkpoint(path("a.ckpt"), io::make_checkpoint(model, state, {}, NormStats{{0}, {1}}, NormStats{{0}, {1}}));

  auto c = io::load_checkpoint<double>(path("a.ckpt"));
  EXPECT_EQ(c.model.width, 4u);
  auto other_config = tiny_model();
  other_config.seed = 99;
  DyMixOpModel<double> other(other_config);
  OptimizerState<double> restored;
  io::restore(c, other, restored);
  for (const auto& p : model.parameters()) EXPECT_EQ(values_of(other.parameter(p.id).value()), values_of(p.value())) << p.id;
  EXPECT_EQ(restored.step, 4u);
  EXPECT_EQ(restored.epoch, 2u);
  EXPECT_EQ(restored.lr, 0.5);
  EXPECT_EQ(restored.m.size(), model.parameters().size());
}

TEST_F(IoTest, RestoreRejectsMismatchedModel) {
  DyMixOpModel<double> model(tiny_model());
  io::save_checkpoint(path("a.ckpt"), io::make_checkpoint(model, OptimizerState<double>{}, {}, NormStats{{0}, {1}},
                                                          NormStats{{0}, {1}}));
  auto wider = tiny_model();
  wider.width = 6;
  DyMixOpModel<double> other(wider);
  OptimizerState<double> state;
  EXPECT_THROW(io::restore(io::load_checkpoint<double>(path("a.ckpt")), other, state), Error);
}

TEST_F(IoTest, EmptyPredictionHasHeaderOnly) {
  io::save_prediction(path("p.dmxd"), Shape{0, 1, 8}, Tensor<double>{}, {});
  const auto c = io::read_container(path("p.dmxd"), io::dataset_magic);
  EXPECT_TRUE(c.payload.empty());
  EXPECT_EQ(c.header.at("shape"), nlohmann::json::array({0, 1, 8}));
}

TEST(Config, KeyValueFileParsing) {
  const auto file = (fs::temp_directory_path() / "dymixop_cfg.txt").string();
  std::ofstream(file) << "# comment\nwidth = 12  # trailing\n\nmodes = 4,5\nactivation=tanh\n";
  RunConfig cfg;
  apply_values(cfg, run_keys(), read_key_values(file));
  fs::remove(file);
  EXPECT_EQ(cfg.width, 12u);
  EXPECT_EQ(cfg.modes, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(cfg.activation, Activation::tanh);
}

TEST(Config, UnknownKeyIsAConfigError) {
  RunConfig cfg;
  try {
    apply_values(cfg, run_keys(), {{"widht", "3"}});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Config, MalformedValuesAreRejected) {
  RunConfig cfg;
  EXPECT_THROW(apply_values(cfg, run_keys(), {{"width", "12x"}}), Error);
  EXPECT_THROW(apply_values(cfg, run_keys(), {{"lr", "fast"}}), Error);
  EXPECT_THROW(apply_values(cfg, run_keys(), {{"final_activation", "maybe"}}), Error);
  EXPECT_THROW(apply_values(cfg, run_keys(), {{"preset", "half"}}), Error);
  EXPECT_THROW(apply_values(cfg, run_keys(), {{"precision", "f16"}}), Error);
}

TEST(Config, ValuesRoundTrip) {
  RunConfig cfg;
  cfg.lr = 3e-4;
  cfg.modes = {7, 9};
  cfg.stack = StackMode::parallel;
  const auto values = to_values(cfg, run_keys());
  RunConfig back;
  apply_values(back, run_keys(), values);
  EXPECT_EQ(to_values(back, run_keys()), values);
  EXPECT_EQ(back.lr, 3e-4);
}

TEST(Config, PresetsChangeTheModel) {
  RunConfig cfg;
  cfg.preset = "local-only";
  EXPECT_EQ(cfg.model(1).nonlinear_kind, MixKind::local);
  cfg.preset = "global-only";
  EXPECT_EQ(cfg.model(1).nonlinear_kind, MixKind::global);
  cfg.preset = "linear-only";
  EXPECT_EQ(cfg.model(1).n_nonlinear, 0u);
  cfg.preset = "nonlinear-only";
  EXPECT_EQ(cfg.model(1).n_linear, 0u);
  cfg.preset = "parallel-only";
  EXPECT_EQ(cfg.model(1).stack, StackMode::parallel);
  cfg.preset = "hierarchical-only";
  EXPECT_EQ(cfg.model(1).stack, StackMode::hierarchical);
  EXPECT_EQ(preset_names().size(), 7u);
}

TEST(Config, SpecDefaultsFollowThePde) {
  const auto spec = spec_from_values({{"pde", "burgers1d"}, {"trajectories", "4"}});
  EXPECT_EQ(spec.pde, Pde::burgers1d);
  EXPECT_EQ(spec.n, TrajectorySpec::defaults(Pde::burgers1d).n);
  EXPECT_EQ(spec.trajectories, 4u);
  EXPECT_THROW(spec_from_values({{"pde", "heat"}}), Error);
}

}  // namespace
