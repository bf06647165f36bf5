#include <doctest.h>

#include "pvckit/autodiff.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pvckit;

TEST_CASE("backward of sum is ones") {
  Tape tape;
  Var x = tape.watch(Tensor(Shape{3}, {1, 2, 3}));
  Gradients g = tape.backward(sum(x));
  for (int64_t i = 0; i < 3; ++i) CHECK(g.at(x).data()[i] == 1.0);
}

TEST_CASE("mean of relu at [-1,2]") {
  Tape tape;
  Var x = tape.watch(Tensor(Shape{2}, {-1, 2}));
  Gradients g = tape.backward(mean(relu(x)));
  CHECK(g.at(x).data()[0] == 0.0);
  CHECK(g.at(x).data()[1] == 0.5);
}

TEST_CASE("non-scalar loss is a contract error") {
  Tape tape;
  Var x = tape.watch(Tensor(Shape{2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(relu(x)), ContractError);
}

TEST_CASE("non-contributing leaves receive zeros") {
  Tape tape;
  Var x = tape.watch(Tensor(Shape{2}, {1, 2}));
  Var unused = tape.watch(Tensor(Shape{3}, {1, 2, 3}));
  Gradients g = tape.backward(sum(x));
  CHECK(g.at(unused).shape() == Shape{3});
  for (int64_t i = 0; i < 3; ++i) CHECK(g.at(unused).data()[i] == 0.0);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(21);
  Tensor xv = oracle::random_tensor(Shape{2, 3}, rng);

  auto grads_of = [&](auto&& make_loss) {
    Tape tape;
    Var x = tape.watch(xv.clone());
    Gradients g = tape.backward(make_loss(tape, x));
    return g.at(x).clone();
  };
  Tensor ga = grads_of([](Tape&, Var x) { return sum(relu(x)); });
  Tensor gb = grads_of([](Tape&, Var x) { return mean(mul(x, x)); });
  Tensor gab = grads_of([](Tape&, Var x) { return add(sum(relu(x)), mean(mul(x, x))); });
  for (int64_t i = 0; i < ga.size(); ++i)
    CHECK(gab.data()[i] == doctest::Approx(ga.data()[i] + gb.data()[i]).epsilon(1e-15));
}

TEST_CASE("relu and sigmoid ranges") {
  Rng rng(1);
  Tensor xv = oracle::random_tensor(Shape{64}, rng, -5.0, 5.0);
  Tape tape(false);
  Var x = tape.constant(xv);
  const Tensor r = relu(x).value();
  const Tensor s = sigmoid(x).value();
  for (int64_t i = 0; i < 64; ++i) {
    CHECK(r.data()[i] >= 0.0);
    CHECK(s.data()[i] > 0.0);
    CHECK(s.data()[i] < 1.0);
  }
  CHECK(sigmoid(tape.constant(Tensor::scalar(0.0))).value().value() == 0.5);
}

// shifts inputs away from the relu/abs kinks so central differences are valid
static Tensor kink_safe(Tensor t, double margin = 0.05) {
  for (int64_t i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::fabs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

TEST_CASE("finite differences agree with analytic gradients per op") {
  Rng rng(1234);
  double worst = 0.0;
  auto run = [&](std::vector<Tensor> in, gradcheck::BuildFn f) {
    const auto r = gradcheck::check(std::move(in), f);
    worst = std::max(worst, r.max_rel_err);
    CHECK(r.max_rel_err < 1e-4);
  };

  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng r(1000 + seed);
    const uint64_t ps = 555 + seed;
    Tensor a = oracle::random_tensor(Shape{2, 3}, r);
    Tensor b = oracle::random_tensor(Shape{2, 3}, r, 0.5, 2.0);  // safe divisor

    run({a, b}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, add(v[0], v[1]), ps);
    });
    run({a, b}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, sub(v[0], v[1]), ps);
    });
    run({a, b}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, mul(v[0], v[1]), ps);
    });
    run({a, b}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, div(v[0], v[1]), ps);
    });
    run({kink_safe(a.clone())}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, relu(v[0]), ps);
    });
    run({a}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, sigmoid(v[0]), ps);
    });
    run({kink_safe(a.clone())}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, abs(v[0]), ps);
    });
    run({a}, [](Tape&, const std::vector<Var>& v) { return mean(v[0]); });
    run({a}, [](Tape&, const std::vector<Var>& v) { return sum(v[0]); });
    run({a}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, mul_scalar(add_scalar(v[0], 0.7), -1.3), ps);
    });

    Tensor x5 = oracle::random_tensor(Shape{2, 2, 2, 3, 3}, r);
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, global_avg_pool(v[0]), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, permute(v[0], {0, 1, 3, 2, 4}), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, reshape(v[0], Shape{4, 2, 1, 3, 3}), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, slice(v[0], {0, 1, 0, 1, 0}, Shape{2, 1, 2, 2, 3}), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, pad_zero(v[0], {0, 0, 1, 0, 1}, {0, 0, 0, 2, 1}), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, pad_reflect(v[0], {0, 0, 1, 1, 1}, {0, 0, 1, 1, 1}), ps);
    });
    run({x5}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, repeat_channels(v[0], 3), ps);
    });

    Tensor xa = oracle::random_tensor(Shape{2, 2, 2, 3, 3}, r);
    Tensor xb = oracle::random_tensor(Shape{2, 2, 2, 3, 3}, r);
    run({xa, xb}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, concat({v[0], v[1]}, 1), ps);
    });

    Tensor fx = oracle::random_tensor(Shape{3, 4}, r);
    Tensor fw = oracle::random_tensor(Shape{4, 2}, r);
    Tensor fb = oracle::random_tensor(Shape{2}, r);
    run({fx, fw, fb}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, fully_connected(v[0], v[1], v[2]), ps);
    });
    run({fx, fw}, [ps](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, matmul(v[0], v[1]), ps);
    });
  }
  MESSAGE("worst relative error: ", worst);
}

TEST_CASE("conv3d and transpose gradients against finite differences") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    Rng r(7000 + seed);
    const uint64_t ps = 31 + seed;
    Tensor x = oracle::random_tensor(Shape{2, 2, 3, 4, 4}, r);
    Tensor w = oracle::random_tensor(Shape{2, 2, 1, 3, 3}, r);
    Tensor b = oracle::random_tensor(Shape{2}, r);

    kernels::Conv3dSpec s1{{0, 1, 1}, {1, 1, 1}};
    auto res = gradcheck::check({x, w, b}, [ps, s1](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, conv3d(v[0], v[1], v[2], s1), ps);
    });
    CHECK(res.max_rel_err < 1e-4);

    kernels::Conv3dSpec s2{{0, 1, 0}, {1, 2, 2}};
    res = gradcheck::check({x, w, b}, [ps, s2](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, conv3d(v[0], v[1], v[2], s2), ps);
    });
    CHECK(res.max_rel_err < 1e-4);

    res = gradcheck::check({x, w, b}, [ps, s1](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, conv3d_transpose(v[0], v[1], v[2], s1), ps);
    });
    CHECK(res.max_rel_err < 1e-4);

    res = gradcheck::check({x, w, b}, [ps, s2](Tape& t, const std::vector<Var>& v) {
      return gradcheck::probe(t, conv3d_transpose(v[0], v[1], v[2], s2), ps);
    });
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("kernel_attention gradients and reductions") {
  Rng r(88);
  Tensor w = oracle::random_tensor(Shape{2, 3, 1, 2, 2}, r);
  Tensor a_spa = oracle::random_tensor(Shape{4}, r, 0.1, 0.9);
  Tensor a_in = oracle::random_tensor(Shape{3}, r, 0.1, 0.9);
  Tensor a_out = oracle::random_tensor(Shape{2}, r, 0.1, 0.9);

  SUBCASE("all-ones attention is the identity") {
    Tape t(false);
    Var y = kernel_attention(t.constant(w), t.constant(Tensor::ones(Shape{4})),
                             t.constant(Tensor::ones(Shape{3})), t.constant(Tensor::ones(Shape{2})),
                             false);
    CHECK(oracle::max_abs_diff(y.value(), w) <= 1e-15);
  }
  SUBCASE("all-0.5 halves the kernel") {
    Tape t(false);
    Var y = kernel_attention(t.constant(w), t.constant(Tensor::full(Shape{4}, 0.5)),
                             t.constant(Tensor::full(Shape{3}, 0.5)),
                             t.constant(Tensor::full(Shape{2}, 0.5)), false);
    Tensor half = w.clone();
    for (int64_t i = 0; i < half.size(); ++i) half.data()[i] *= 0.5;
    CHECK(oracle::max_abs_diff(y.value(), half) <= 1e-15);
  }
  SUBCASE("matches the broadcast definition elementwise") {
    Tape t(false);
    Var y = kernel_attention(t.constant(w), t.constant(a_spa), t.constant(a_in),
                             t.constant(a_out), false);
    for (int64_t co = 0; co < 2; ++co)
      for (int64_t ci = 0; ci < 3; ++ci)
        for (int64_t zd = 0; zd < 1; ++zd)
          for (int64_t zh = 0; zh < 2; ++zh)
            for (int64_t zw = 0; zw < 2; ++zw) {
              const int64_t sidx = (zd * 2 + zh) * 2 + zw;
              const double want = w.at({co, ci, zd, zh, zw}) *
                                  (a_spa.at({sidx}) + a_in.at({ci}) + a_out.at({co})) / 3.0;
              CHECK(y.value().at({co, ci, zd, zh, zw}) == doctest::Approx(want).epsilon(1e-14));
            }
  }
  SUBCASE("gradients pass finite differences, both layouts") {
    for (const bool transpose : {false, true}) {
      Tensor wk = oracle::random_tensor(Shape{2, 3, 1, 2, 2}, r);
      Tensor ain = transpose ? oracle::random_tensor(Shape{2}, r, 0.1, 0.9)
                             : oracle::random_tensor(Shape{3}, r, 0.1, 0.9);
      Tensor aout = transpose ? oracle::random_tensor(Shape{3}, r, 0.1, 0.9)
                              : oracle::random_tensor(Shape{2}, r, 0.1, 0.9);
      auto res = gradcheck::check(
          {wk, a_spa, ain, aout}, [transpose](Tape& t, const std::vector<Var>& v) {
            return gradcheck::probe(t, kernel_attention(v[0], v[1], v[2], v[3], transpose), 5);
          });
      CHECK(res.max_rel_err < 1e-4);
    }
  }
}
