#include <doctest.h>

#include <cmath>

#include "pvckit/dynconv.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pvckit;

namespace {

DynConvLayer tiny_layer(bool transpose, uint64_t seed, int64_t cin = 2, int64_t cout = 3,
                        int64_t att_ch = 2) {
  Rng rng(seed);
  return make_conv_layer(cin, cout, {1, 3, 3}, {0, 1, 1}, transpose, true, att_ch, rng);
}

}  // namespace

TEST_CASE("attention head with zeroed weights outputs 0.5 everywhere") {
  Rng rng(1);
  AttentionHead h = AttentionHead::init(2, 3, rng);
  h.fc1_w = Tensor(h.fc1_w.shape());
  h.fc2_w = Tensor(h.fc2_w.shape());
  Tape tape(false);
  BoundHead bh{tape.constant(h.fc1_w), tape.constant(h.fc1_b), tape.constant(h.fc2_w),
               tape.constant(h.fc2_b)};
  Var x = tape.constant(oracle::random_tensor(Shape{2, 2, 2, 3, 3}, rng));
  const Tensor a = attention_forward(bh, 2, x).value();
  CHECK(a.shape() == Shape{2, 3});
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == 0.5);
}

TEST_CASE("attention values lie strictly in (0,1)") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    AttentionHead h = AttentionHead::init(3, 7, rng);
    Tape tape(false);
    BoundHead bh{tape.constant(h.fc1_w), tape.constant(h.fc1_b), tape.constant(h.fc2_w),
                 tape.constant(h.fc2_b)};
    Var x = tape.constant(oracle::random_tensor(Shape{1, 3, 2, 4, 4}, rng, -10.0, 10.0));
    const Tensor a = attention_forward(bh, 3, x).value();
    for (int64_t i = 0; i < a.size(); ++i) {
      CHECK(a.data()[i] > 0.0);
      CHECK(a.data()[i] < 1.0);
    }
  }
}

TEST_CASE("attention head matches a hand-rolled dense oracle") {
  Rng rng(7);
  AttentionHead h = AttentionHead::init(2, 3, rng);  // fc1: 2->6, fc2: 6->3
  Tensor x = oracle::random_tensor(Shape{1, 2, 2, 2, 2}, rng);
  Tape tape(false);
  BoundHead bh{tape.constant(h.fc1_w), tape.constant(h.fc1_b), tape.constant(h.fc2_w),
               tape.constant(h.fc2_b)};
  const Tensor got = attention_forward(bh, 2, tape.constant(x)).value();

  double gap[2];
  for (int64_t c = 0; c < 2; ++c) {
    double acc = 0;
    for (int64_t z = 0; z < 2; ++z)
      for (int64_t y = 0; y < 2; ++y)
        for (int64_t xx = 0; xx < 2; ++xx) acc += x.at({0, c, z, y, xx});
    gap[c] = acc / 8.0;
  }
  double hid[6];
  for (int64_t j = 0; j < 6; ++j) {
    double acc = h.fc1_b.at({j});
    for (int64_t i = 0; i < 2; ++i) acc += gap[i] * h.fc1_w.at({i, j});
    hid[j] = acc > 0 ? acc : 0;
  }
  for (int64_t j = 0; j < 3; ++j) {
    double acc = h.fc2_b.at({j});
    for (int64_t i = 0; i < 6; ++i) acc += hid[i] * h.fc2_w.at({i, j});
    const double want = 1.0 / (1.0 + std::exp(-acc));
    CHECK(got.at({0, j}) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("attention rejects a channel mismatch") {
  Rng rng(2);
  AttentionHead h = AttentionHead::init(2, 3, rng);
  Tape tape(false);
  BoundHead bh{tape.constant(h.fc1_w), tape.constant(h.fc1_b), tape.constant(h.fc2_w),
               tape.constant(h.fc2_b)};
  Var x = tape.constant(Tensor(Shape{1, 3, 2, 2, 2}));
  CHECK_THROWS_AS(attention_forward(bh, 2, x), ShapeError);
}

TEST_CASE("dense_mix: layer 1 passes the raw input through") {
  Rng rng(3);
  Tape tape(false);
  Tensor input = oracle::random_tensor(Shape{1, 1, 2, 4, 4}, rng);
  Var in_var = tape.constant(input);
  DenseAttentionState st = dense_attention_start(in_var);
  auto [mixed, st2] = dense_mix(in_var, st);
  CHECK(oracle::max_abs_diff(mixed.value(), input) == 0.0);
  CHECK(st2.layer == 2);
}

TEST_CASE("dense_mix is idempotent when x_prev equals the features") {
  Rng rng(4);
  Tape tape(false);
  Tensor f = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
  Var fv = tape.constant(f);
  DenseAttentionState st{fv, 2};
  auto [mixed, st2] = dense_mix(fv, st);
  CHECK(oracle::max_abs_diff(mixed.value(), f) == 0.0);
}

TEST_CASE("dense_mix unrolls to the geometric-decay mixture") {
  // raw input c1, layer outputs c1,c2,c3: attention input at layer 4 must be
  // c3/2 + c2/4 + c1/4
  Tape tape(false);
  const Shape s{1, 1, 1, 2, 2};
  auto constant = [&](double v) { return tape.constant(Tensor::full(s, v)); };
  const double c1 = 0.3, c2 = -1.1, c3 = 2.7;
  DenseAttentionState st = dense_attention_start(constant(c1));
  auto r1 = dense_mix(constant(c1), st);       // layer 1: raw input
  auto r2 = dense_mix(constant(c1), r1.second);  // x2in = (c1 + c1)/2 = c1
  auto r3 = dense_mix(constant(c2), r2.second);  // x3in = (c2 + c1)/2
  auto r4 = dense_mix(constant(c3), r3.second);  // x4in = c3/2 + c2/4 + c1/4
  const double want = 0.5 * c3 + 0.25 * c2 + 0.25 * c1;
  for (int64_t i = 0; i < r4.first.value().size(); ++i)
    CHECK(r4.first.value().data()[i] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("dense_mix reconciles spatial and channel extents") {
  Rng rng(5);
  Tape tape(false);
  SUBCASE("centre crop on the down path") {
    Tensor big = oracle::random_tensor(Shape{1, 2, 2, 6, 6}, rng);
    Tensor small = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
    DenseAttentionState st{tape.constant(big), 2};
    auto [mixed, st2] = dense_mix(tape.constant(small), st);
    CHECK(mixed.shape() == small.shape());
    const double want = 0.5 * (small.at({0, 1, 1, 2, 3}) + big.at({0, 1, 1, 3, 4}));
    CHECK(mixed.value().at({0, 1, 1, 2, 3}) == doctest::Approx(want).epsilon(1e-15));
  }
  SUBCASE("zero-pad on the up path") {
    Tensor small = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
    Tensor big = oracle::random_tensor(Shape{1, 2, 2, 6, 6}, rng);
    DenseAttentionState st{tape.constant(small), 2};
    auto [mixed, st2] = dense_mix(tape.constant(big), st);
    CHECK(mixed.shape() == big.shape());
    CHECK(mixed.value().at({0, 0, 0, 0, 0}) ==
          doctest::Approx(0.5 * big.at({0, 0, 0, 0, 0})).epsilon(1e-15));
  }
  SUBCASE("channel replication") {
    Tensor one_ch = oracle::random_tensor(Shape{1, 1, 2, 4, 4}, rng);
    Tensor four_ch = oracle::random_tensor(Shape{1, 4, 2, 4, 4}, rng);
    DenseAttentionState st{tape.constant(one_ch), 2};
    auto [mixed, st2] = dense_mix(tape.constant(four_ch), st);
    CHECK(mixed.shape() == four_ch.shape());
    const double want = 0.5 * (four_ch.at({0, 3, 1, 2, 2}) + one_ch.at({0, 0, 1, 2, 2}));
    CHECK(mixed.value().at({0, 3, 1, 2, 2}) == doctest::Approx(want).epsilon(1e-15));
  }
  SUBCASE("irreconcilable channels throw") {
    Tensor a = oracle::random_tensor(Shape{1, 3, 2, 4, 4}, rng);
    Tensor b = oracle::random_tensor(Shape{1, 4, 2, 4, 4}, rng);
    DenseAttentionState st{tape.constant(a), 2};
    CHECK_THROWS_AS(dense_mix(tape.constant(b), st), ShapeError);
  }
}

TEST_CASE("dynconv with saturated attention equals the static convolution") {
  for (const bool transpose : {false, true}) {
    DynConvLayer layer = tiny_layer(transpose, 17);
    Rng rng(18);
    Tensor x = oracle::random_tensor(Shape{2, 2, 2, 5, 5}, rng);
    Tape tape(false);
    BoundDynConvLayer bound = bind_layer(tape, layer);
    Var xv = tape.constant(x);
    DenseAttentionState st = dense_attention_start(xv);
    DynForwardOptions opts;
    opts.force_attention_one = true;
    const Tensor got = dynconv_forward(bound, xv, xv, st, opts).y.value();

    const kernels::Conv3dSpec spec{layer.pad, layer.stride};
    const Tensor want = transpose ? kernels::conv3d_transpose(x, layer.w, &layer.b, spec)
                                  : kernels::conv3d(x, layer.w, &layer.b, spec);
    CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("dynconv with zeroed heads equals static conv with half the kernel") {
  DynConvLayer layer = tiny_layer(false, 23);
  for (AttentionHead* h : {&layer.spa, &layer.in, &layer.out}) {
    h->fc1_w = Tensor(h->fc1_w.shape());
    h->fc2_w = Tensor(h->fc2_w.shape());
  }
  Rng rng(24);
  Tensor x = oracle::random_tensor(Shape{1, 2, 2, 5, 5}, rng);
  Tape tape(false);
  BoundDynConvLayer bound = bind_layer(tape, layer);
  Var xv = tape.constant(x);
  const Tensor got = dynconv_forward(bound, xv, xv, dense_attention_start(xv), {}).y.value();

  Tensor half_w = layer.w.clone();
  for (int64_t i = 0; i < half_w.size(); ++i) half_w.data()[i] *= 0.5;
  const Tensor want =
      kernels::conv3d(x, half_w, &layer.b, kernels::Conv3dSpec{layer.pad, layer.stride});
  CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
}

TEST_CASE("attention is input-dependent") {
  DynConvLayer layer = tiny_layer(false, 31);
  int distinct = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(400 + seed);
    Tensor xa = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
    Tensor xb = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
    Tape tape(false);
    BoundDynConvLayer bound = bind_layer(tape, layer);
    Var va = tape.constant(xa), vb = tape.constant(xb);
    const Tensor aa = attention_forward((*bound.heads)[0], 2, va).value();
    const Tensor ab = attention_forward((*bound.heads)[0], 2, vb).value();
    if (oracle::max_abs_diff(aa, ab) > 1e-9) ++distinct;
  }
  CHECK(distinct == 20);
}

TEST_CASE("per-batch-item attention: each volume gets its own kernel") {
  DynConvLayer layer = tiny_layer(false, 37);
  Rng rng(38);
  Tensor xa = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
  Tensor xb = oracle::random_tensor(Shape{1, 2, 2, 4, 4}, rng);
  Tensor both(Shape{2, 2, 2, 4, 4});
  std::copy(xa.data(), xa.data() + xa.size(), both.data());
  std::copy(xb.data(), xb.data() + xb.size(), both.data() + xa.size());

  auto run_one = [&](const Tensor& x) {
    Tape tape(false);
    BoundDynConvLayer bound = bind_layer(tape, layer);
    Var xv = tape.constant(x);
    return dynconv_forward(bound, xv, xv, dense_attention_start(xv), {}).y.value().clone();
  };
  const Tensor ya = run_one(xa);
  const Tensor yb = run_one(xb);
  Tape tape(false);
  BoundDynConvLayer bound = bind_layer(tape, layer);
  Var xv = tape.constant(both);
  const Tensor yboth = dynconv_forward(bound, xv, xv, dense_attention_start(xv), {}).y.value();

  Tensor row0 = kernels::crop(yboth, {0, 0, 0, 0, 0}, ya.shape());
  Tensor row1 = kernels::crop(yboth, {1, 0, 0, 0, 0}, ya.shape());
  CHECK(oracle::max_abs_diff(row0, ya) <= 1e-12);
  CHECK(oracle::max_abs_diff(row1, yb) <= 1e-12);
}

TEST_CASE("dynconv end-to-end gradients pass finite differences") {
  for (const bool transpose : {false, true}) {
    DynConvLayer layer = tiny_layer(transpose, 41, 2, 2, 2);
    Rng rng(42);
    Tensor x = oracle::random_tensor(Shape{2, 2, 2, 4, 4}, rng);
    std::vector<Tensor> inputs{x,
                               layer.w,
                               layer.b,
                               layer.spa.fc1_w,
                               layer.spa.fc1_b,
                               layer.spa.fc2_w,
                               layer.spa.fc2_b,
                               layer.in.fc1_w,
                               layer.in.fc1_b,
                               layer.in.fc2_w,
                               layer.in.fc2_b,
                               layer.out.fc1_w,
                               layer.out.fc1_b,
                               layer.out.fc2_w,
                               layer.out.fc2_b};
    DynConvLayer shape_ref = layer;
    auto res =
        gradcheck::check(inputs, [&shape_ref](Tape& t, const std::vector<Var>& v) {
          BoundDynConvLayer bound;
          bound.layer = &shape_ref;
          bound.w = v[1];
          bound.b = v[2];
          bound.heads = std::array<BoundHead, 3>{BoundHead{v[3], v[4], v[5], v[6]},
                                                 BoundHead{v[7], v[8], v[9], v[10]},
                                                 BoundHead{v[11], v[12], v[13], v[14]}};
          DenseAttentionState st = dense_attention_start(v[0]);
          Var y = dynconv_forward(bound, v[0], v[0], st, {}).y;
          return gradcheck::probe(t, y, 77);
        });
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("parameter counts: head sizes 2n/n; dynamic vs static") {
  DynConvLayer layer = tiny_layer(false, 51);
  // a_spa: n = 1*3*3 = 9; heads carry [C,2n],[2n],[2n,n],[n]
  CHECK(layer.spa.fc1_w.shape() == Shape{2, 18});
  CHECK(layer.spa.fc2_w.shape() == Shape{18, 9});
  CHECK(layer.in.fc2_w.shape() == Shape{4, 2});
  CHECK(layer.out.fc2_w.shape() == Shape{6, 3});
  Rng rng(52);
  DynConvLayer static_layer = make_conv_layer(2, 3, {1, 3, 3}, {0, 1, 1}, false, false, 2, rng);
  CHECK(static_layer.parameter_count() == layer.w.size() + layer.b.size());
  CHECK(layer.parameter_count() > static_layer.parameter_count());
}
