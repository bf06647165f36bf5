#include <doctest.h>

#include <set>

#include "pvckit/network.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pvckit;

namespace {

NetworkConfig mini_config(int64_t filters = 4, std::array<int64_t, 3> dims = {4, 12, 12}) {
  NetworkConfig cfg;
  cfg.filters = filters;
  cfg.dense_layers_per_block = 1;
  cfg.input_dims = dims;
  return cfg;
}

}  // namespace

TEST_CASE("build validates the shape arithmetic at the paper scale") {
  NetworkConfig cfg;  // defaults: 50x70x70, 32 filters, 4 blocks
  validate_config(cfg);
  // H,W shrink by 2 per down block: 70 -> 62 at the bottleneck, back to 70
  cfg.input_dims = {50, 8, 70};
  CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("down block 3"), ConfigError);
  // smallest workable in-plane extent: 4 blocks consume 8, the last conv
  // still needs one output sample
  cfg.input_dims = {50, 9, 9};
  validate_config(cfg);
}

TEST_CASE("config errors") {
  NetworkConfig cfg;
  cfg.input_channels = 3;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = NetworkConfig{};
  cfg.filters = 0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = NetworkConfig{};
  cfg.dense_kernel = {4, 3, 3};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = NetworkConfig{};
  cfg.input_channels = 2;
  cfg.filters = 7;  // not divisible; dense attention mix cannot replicate channels
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.filters = 8;
  validate_config(cfg);
}

TEST_CASE("build is deterministic and enumerates parameters exactly once") {
  const NetworkConfig cfg = mini_config();
  Model a = build(cfg, 7);
  Model b = build(cfg, 7);
  auto pa = a.parameters();
  auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(oracle::max_abs_diff(*pa[i].second, *pb[i].second) == 0.0);
  }
  Model c = build(cfg, 8);
  bool any_different = false;
  auto pc = c.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first.ends_with(".W") && oracle::max_abs_diff(*pa[i].second, *pc[i].second) > 0)
      any_different = true;
  CHECK(any_different);

  // unique names
  std::set<std::string> names;
  for (auto& [n, t] : pa) names.insert(n);
  CHECK(names.size() == pa.size());

  // biases start at zero (Xavier applies to kernels only)
  for (auto& [n, t] : pa)
    if (n.ends_with(".B") || n.ends_with("_b"))
      for (int64_t i = 0; i < t->size(); ++i) CHECK(t->data()[i] == 0.0);
}

TEST_CASE("forward preserves the input shape and the z extent") {
  const NetworkConfig cfg = mini_config(4, {4, 12, 12});
  Model m = build(cfg, 3);
  Rng rng(9);
  Tensor x = oracle::random_tensor(Shape{2, 1, 4, 12, 12}, rng, 0.0, 1.0);
  const Tensor y = forward_nograd(m, x);
  CHECK(y.shape() == Shape{2, 1, 4, 12, 12});
}

TEST_CASE("shrunken config keeps the output shape (24x32x32, filters 8)") {
  NetworkConfig cfg;
  cfg.filters = 8;
  cfg.dense_layers_per_block = 1;
  cfg.input_dims = {24, 32, 32};
  Model m = build(cfg, 5);
  Rng rng(6);
  Tensor x = oracle::random_tensor(Shape{1, 1, 24, 32, 32}, rng, 0.0, 1.0);
  const Tensor y = forward_nograd(m, x);
  CHECK(y.shape() == Shape{1, 1, 24, 32, 32});
}

TEST_CASE("outputs are non-negative (terminal ReLU)") {
  const NetworkConfig cfg = mini_config();
  Model m = build(cfg, 11);
  Rng rng(12);
  const Tensor y = forward_nograd(m, oracle::random_tensor(Shape{1, 1, 4, 12, 12}, rng, 0.0, 2.0));
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] >= 0.0);
}

TEST_CASE("zero input with a zeroed terminal layer gives zero output") {
  const NetworkConfig cfg = mini_config();
  Model m = build(cfg, 13);
  *m.find_parameter("out.W") = Tensor(m.find_parameter("out.W")->shape());
  // saturate the terminal attention away: zero head weights give factor 0.5,
  // and 0.5 * 0 stays 0 either way
  const Tensor y = forward_nograd(m, Tensor(Shape{1, 1, 4, 12, 12}));
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("forward is deterministic") {
  const NetworkConfig cfg = mini_config();
  Model m = build(cfg, 17);
  Rng rng(18);
  Tensor x = oracle::random_tensor(Shape{1, 1, 4, 12, 12}, rng, 0.0, 1.0);
  const Tensor y1 = forward_nograd(m, x);
  const Tensor y2 = forward_nograd(m, x);
  CHECK(oracle::max_abs_diff(y1, y2) == 0.0);
}

TEST_CASE("static/dynamic parity with attentions forced to one") {
  NetworkConfig dyn_cfg = mini_config();
  Model dyn = build(dyn_cfg, 19);
  NetworkConfig stat_cfg = dyn_cfg;
  stat_cfg.dynamic_enabled = false;
  Model stat = build(stat_cfg, 19);
  // share the conv kernels/biases
  for (auto& [name, t] : stat.parameters()) {
    Tensor* src = dyn.find_parameter(name);
    REQUIRE(src != nullptr);
    *t = *src;
  }
  Rng rng(20);
  Tensor x = oracle::random_tensor(Shape{2, 1, 4, 12, 12}, rng, 0.0, 1.0);
  ForwardOptions force;
  force.force_attention_one = true;
  const Tensor yd = forward_nograd(dyn, x, force);
  const Tensor ys = forward_nograd(stat, x);
  CHECK(oracle::max_abs_diff(yd, ys) <= 1e-10);
}

TEST_CASE("DC toggle changes outputs but not the parameter count") {
  NetworkConfig on_cfg = mini_config();
  on_cfg.dc_dy_enabled = true;
  NetworkConfig off_cfg = on_cfg;
  off_cfg.dc_dy_enabled = false;
  Model on = build(on_cfg, 23);
  Model off = build(off_cfg, 23);
  CHECK(on.parameter_count() == off.parameter_count());

  Rng rng(24);
  Tensor x = oracle::random_tensor(Shape{1, 1, 4, 12, 12}, rng, 0.0, 1.0);
  const Tensor y_on = forward_nograd(on, x);
  const Tensor y_off = forward_nograd(off, x);
  CHECK(oracle::max_abs_diff(y_on, y_off) > 1e-9);
}

TEST_CASE("static network has strictly fewer parameters, same kernel count") {
  NetworkConfig cfg = mini_config();
  Model dyn = build(cfg, 29);
  cfg.dynamic_enabled = false;
  Model stat = build(cfg, 29);
  CHECK(stat.parameter_count() < dyn.parameter_count());
  int64_t dyn_convs = 0, stat_convs = 0;
  for (auto& [n, t] : dyn.parameters())
    if (n.ends_with(".W")) ++dyn_convs;
  for (auto& [n, t] : stat.parameters())
    if (n.ends_with(".W")) ++stat_convs;
  CHECK(dyn_convs == stat_convs);
}

TEST_CASE("dual-channel input variant") {
  NetworkConfig cfg = mini_config(4, {4, 12, 12});
  cfg.input_channels = 2;
  Model m = build(cfg, 31);
  Rng rng(32);
  Tensor x = oracle::random_tensor(Shape{1, 2, 4, 12, 12}, rng, 0.0, 1.0);
  CHECK(forward_nograd(m, x).shape() == Shape{1, 1, 4, 12, 12});
  CHECK_THROWS_AS(forward_nograd(m, Tensor(Shape{1, 1, 4, 12, 12})), ShapeError);
}

TEST_CASE("full network gradient check on a miniature (sampled parameters)") {
  NetworkConfig cfg;
  cfg.filters = 4;
  cfg.dense_layers_per_block = 2;
  cfg.input_dims = {8, 12, 12};
  Model m = build(cfg, 33);
  Rng rng(34);
  Tensor x = oracle::random_tensor(Shape{1, 1, 8, 12, 12}, rng, 0.1, 1.0);

  std::vector<Tensor> inputs{x};
  auto params = m.parameters();
  for (auto& [name, t] : params) inputs.push_back(t->clone());

  auto res = gradcheck::check_sampled_filtered(
      inputs,
      [&m, &params](Tape& t, const std::vector<Var>& v) {
        BoundModel bm;
        bm.model = &m;
        size_t vi = 1;
        for (size_t li = 0; li < m.layers.size(); ++li) {
          BoundDynConvLayer bl;
          bl.layer = &m.layers[li];
          bl.w = v[vi++];
          bl.b = v[vi++];
          if (m.layers[li].dynamic) {
            std::array<BoundHead, 3> heads;
            for (int h = 0; h < 3; ++h) {
              heads[static_cast<size_t>(h)] = BoundHead{v[vi], v[vi + 1], v[vi + 2], v[vi + 3]};
              vi += 4;
            }
            bl.heads = heads;
          }
          bm.layers.push_back(bl);
        }
        return gradcheck::probe(t, bm.forward(v[0]), 99);
      },
      3, 4321);
  MESSAGE("network FD: ", res.checked, " smooth elements (", res.skipped_nonsmooth,
          " skipped at ReLU kinks), worst rel err ", res.max_rel_err);
  CHECK(res.checked > 3 * res.skipped_nonsmooth);  // kink hits must stay the exception
  CHECK(res.checked > 500);
  CHECK(res.max_rel_err < 1e-3);
}
