#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lumamba/bimamba.hpp"
#include "lumamba/gradcheck.hpp"
#include "lumamba/layers.hpp"
#include "lumamba/model.hpp"
#include "lumamba/ops.hpp"
#include "lumamba/scan.hpp"
#include "test_util.hpp"

using namespace lumamba;
using namespace lumamba::testing;

namespace {

struct ScanCase {
  Array u, delta, a, b, c, skip;
};

ScanCase random_case(std::size_t batch, std::size_t len, std::size_t d, std::size_t n, Rng& rng) {
  ScanCase s{normal_array(Shape{batch, len, d}, rng), random_array(Shape{batch, len, d}, rng, 0.001, 0.5),
             random_array(Shape{d, n}, rng, -4.0, -0.1), normal_array(Shape{batch, len, n}, rng),
             normal_array(Shape{batch, len, n}, rng), normal_array(Shape{d}, rng)};
  return s;
}

// Step-by-step recurrence in double precision, written independently of the library kernels.
Array naive_scan(const ScanCase& s) {
  const std::size_t batch = s.u.dim(0), len = s.u.dim(1), d = s.u.dim(2), n = s.a.dim(1);
  Array y(s.u.shape());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t di = 0; di < d; ++di) {
      std::vector<double> h(n, 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        const double dl = s.delta.at({bi, t, di}), x = s.u.at({bi, t, di});
        double out = s.skip[di] * x;
        for (std::size_t k = 0; k < n; ++k) {
          h[k] = std::exp(dl * s.a.at({di, k})) * h[k] + dl * s.b.at({bi, t, k}) * x;
          out += s.c.at({bi, t, k}) * h[k];
        }
        y.at({bi, t, di}) = static_cast<Real>(out);
      }
    }
  return y;
}

Array run(const ScanCase& s, ScanKernel k) { return scan_forward(s.u, s.delta, s.a, s.b, s.c, s.skip, k); }

}  // namespace

TEST(Scan, SingleStepUnroll) {
  Rng rng(1);
  ScanCase s = random_case(1, 1, 3, 4, rng);
  Array y = run(s, ScanKernel::sequential);
  for (std::size_t d = 0; d < 3; ++d) {
    double expect = s.skip[d] * s.u[d];
    for (std::size_t k = 0; k < 4; ++k) expect += s.c[k] * s.delta[d] * s.b[k] * s.u[d];
    EXPECT_NEAR(y[d], expect, 1e-6);
  }
}

TEST(Scan, ZeroStepLeavesOnlySkip) {
  Rng rng(2);
  ScanCase s = random_case(2, 9, 5, 6, rng);
  s.delta.fill(0);
  for (auto kernel : {ScanKernel::sequential, ScanKernel::associative}) {
    Array y = run(s, kernel);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], s.skip[i % 5] * s.u[i]);
  }
}

TEST(Scan, KernelsMatchNaiveRecurrence) {
  Rng rng(3);
  ScanCase s = random_case(1, 64, 8, 16, rng);
  const Array ref = naive_scan(s);
  EXPECT_LE(max_abs_diff(run(s, ScanKernel::sequential), ref), 1e-5);
  EXPECT_LE(max_abs_diff(run(s, ScanKernel::associative), ref), 1e-5);
}

TEST(Scan, AssociativeMatchesSequentialOverRandomConfigs) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t len = 1 + rng.below(128), d = 1 + rng.below(32), n = 1 + rng.below(32);
    ScanCase s = random_case(1, len, d, n, rng);
    ASSERT_LE(max_abs_diff(run(s, ScanKernel::associative), naive_scan(s)), 1e-5)
        << "S=" << len << " D=" << d << " N=" << n;
  }
}

TEST(Scan, StableOverLongSequences) {
  Rng rng(5);
  ScanCase s = random_case(1, 10000, 4, 8, rng);
  Array states;
  Array y = scan_forward(s.u, s.delta, s.a, s.b, s.c, s.skip, ScanKernel::sequential, &states);
  EXPECT_TRUE(y.all_finite());
  double worst = 0;
  for (Real v : states.data()) worst = std::max(worst, double(std::abs(v)));
  EXPECT_LT(worst, 100.0);
}

TEST(Scan, LinearInInputForFixedSelection) {
  Rng rng(6);
  ScanCase s1 = random_case(2, 30, 6, 8, rng);
  ScanCase s2 = s1;
  s2.u = normal_array(s1.u.shape(), rng);
  ScanCase mix = s1;
  const Real a = 0.7f, b = -1.3f;
  for (std::size_t i = 0; i < mix.u.size(); ++i) mix.u[i] = a * s1.u[i] + b * s2.u[i];
  const Array y1 = run(s1, ScanKernel::sequential), y2 = run(s2, ScanKernel::sequential);
  const Array ym = run(mix, ScanKernel::sequential);
  double worst = 0;
  for (std::size_t i = 0; i < ym.size(); ++i) worst = std::max(worst, double(std::abs(ym[i] - (a * y1[i] + b * y2[i]))));
  EXPECT_LE(worst, 1e-5);
}

TEST(Scan, CountsMultiplications) {
  Rng rng(7);
  ScanCase s = random_case(3, 11, 5, 7, rng);
  ScanStats stats;
  scan_forward(s.u, s.delta, s.a, s.b, s.c, s.skip, ScanKernel::sequential, nullptr, &stats);
  EXPECT_EQ(stats.macs, 3u * 11u * 5u * scan_macs_per_channel(7));
}

TEST(Scan, NonFiniteRejectedWithStep) {
  Rng rng(8);
  ScanCase s = random_case(1, 10, 2, 3, rng);
  s.u.at({0, 6, 1}) = std::numeric_limits<Real>::infinity();
  for (auto kernel : {ScanKernel::sequential, ScanKernel::associative}) {
    try {
      run(s, kernel);
      FAIL() << "expected rejection";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("step 6"), std::string::npos) << e.what();
    }
  }
}

TEST(Scan, ShapeMismatchRejected) {
  Rng rng(9);
  ScanCase s = random_case(1, 4, 2, 3, rng);
  s.c = normal_array(Shape{1, 4, 2}, rng);
  EXPECT_THROW(run(s, ScanKernel::sequential), std::invalid_argument);
}

TEST(BiMamba, GateSaturationSelectsBranch) {
  ParamStore store;
  const std::size_t d = 16;
  add_bimamba_params(store, "blk", d, 4, 2, Rng(10, "init"));
  Rng rng(11);
  const Array x = normal_array(Shape{2, 7, d}, rng);
  auto block_with_bias = [&](Real bias) {
    store.get("blk.gate.b").value.fill(bias);
    store.get("blk.gate.w").value.fill(0);
    Tape t;
    return bimamba_block(t, store, "blk", t.constant(x)).value();
  };
  Tape t;
  Var xn = apply_layer_norm(t, store, "blk.ln", t.constant(x));
  const Array fwd = add(t.constant(x), ssm_branch(t, store, "blk.fwd", xn)).value();
  const Array bwd = add(t.constant(x), reverse(ssm_branch(t, store, "blk.bwd", reverse(xn, 1)), 1)).value();
  EXPECT_EQ(max_abs_diff(block_with_bias(100), fwd), 0.0);
  EXPECT_EQ(max_abs_diff(block_with_bias(-200), bwd), 0.0);
}

TEST(BiMamba, BackboneShapeAndDeterminism) {
  Model model(ModelConfig{}, 12);
  Rng rng(13);
  const Array lat = normal_array(Shape{6, 4, 64}, rng);
  Tape t1, t2;
  Var a = backbone(t1, model.params(), model.config(), t1.constant(lat), 2);
  Var b = backbone(t2, model.params(), model.config(), t2.constant(lat), 2);
  EXPECT_EQ(a.shape(), (Shape{2, 3, 256}));
  EXPECT_EQ(max_abs_diff(a.value(), b.value()), 0.0);
  Tape t3;
  EXPECT_THROW(backbone(t3, model.params(), model.config(), t3.constant(lat), 4), std::invalid_argument);
}

TEST(Head, ShapeZeroInputAndBudget) {
  Model model(ModelConfig{}, 14, {.decoder = false, .head = true});
  Rng rng(15);
  Tape t;
  Var logits = model.classify(t, t.constant(normal_array(Shape{3, 5, 256}, rng)));
  EXPECT_EQ(logits.shape(), (Shape{3, 2}));
  EXPECT_TRUE(logits.value().all_finite());
  Var zero = model.classify(t, t.constant(Array(Shape{2, 5, 256})));
  for (Real v : zero.value().data()) EXPECT_EQ(v, 0.0f);
  EXPECT_LE(model.head_parameter_count(), 536000u);
  EXPECT_LE(model.parameter_count(), 4600000u);
}

#ifdef LUMAMBA_USE_DOUBLE
TEST(Scan, PrimitiveGradientCheck) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ScanCase s = random_case(2, 1 + rng.below(6), 1 + rng.below(4), 1 + rng.below(4), rng);
    Parameter u{"u", s.u, {}}, dl{"dl", s.delta, {}}, a{"a", s.a, {}}, b{"b", s.b, {}}, c{"c", s.c, {}},
        k{"k", s.skip, {}};
    std::vector<Parameter*> ps{&u, &dl, &a, &b, &c, &k};
    const Array w = random_array(s.u.shape(), rng, 0.5, 1.5);
    const double err = grad_check(
        [&](Tape& t) {
          Var y = selective_scan(t.param(u), t.param(dl), t.param(a), t.param(b), t.param(c), t.param(k));
          return sum_all(mul(y, t.constant(w)));
        },
        ps, {.step = 1e-6, .samples_per_param = 8, .seed = seed});
    ASSERT_LE(err, 1e-4) << "seed " << seed;
  }
}

TEST(BiMamba, TwoStackedBlocksGradientCheck) {
  ParamStore store;
  const Rng init(16, "init");
  add_bimamba_params(store, "b0", 16, 4, 2, init);
  add_bimamba_params(store, "b1", 16, 4, 2, init);
  Rng rng(17);
  const Array x = normal_array(Shape{2, 8, 16}, rng);
  auto params = store.all();
  const double err = grad_check(
      [&](Tape& t) {
        Var h = bimamba_block(t, store, "b0", t.constant(x));
        h = bimamba_block(t, store, "b1", h);
        return sum_all(square(h));
      },
      params, {.step = 3e-3, .samples_per_param = 6});
  EXPECT_LE(err, 1e-3);
}

TEST(Model, FullPipelineGradientCheck) {
  Model model(toy_config(), 18, {.decoder = false, .head = true});
  Rng rng(19);
  const Array w = normal_array(Shape{2, 2, 64}, rng);
  const Montage m = first_channels(2);
  const int labels[] = {0, 1};
  auto params = model.params().all();
  const double err = grad_check(
      [&](Tape& t) {
        auto enc = model.encode(t, w, m);
        return cross_entropy(model.classify(t, enc.features), labels);
      },
      params, {.step = 3e-3, .samples_per_param = 4});
  EXPECT_LE(err, 1e-3);
}
#endif
