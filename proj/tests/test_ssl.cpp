#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "lumamba/encoder.hpp"
#include "lumamba/gradcheck.hpp"
#include "lumamba/model.hpp"
#include "lumamba/ops.hpp"
#include "lumamba/ssl.hpp"
#include "test_util.hpp"

using namespace lumamba;
using namespace lumamba::testing;

namespace {

std::vector<double> standardized(std::vector<double> x) {
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  const double s = std::sqrt(var / x.size()) + 1e-8;
  for (double& v : x) v = (v - mu) / s;
  return x;
}

// Weighted squared distance between the empirical and standard normal
// characteristic functions, integrated numerically with the trapezoid rule.
double quadrature_statistic(const std::vector<double>& z) {
  const double lo = -12.0, hi = 12.0;
  const int steps = 24000;
  const double h = (hi - lo) / steps;
  double total = 0;
  for (int i = 0; i <= steps; ++i) {
    const double t = lo + i * h;
    double re = 0, im = 0;
    for (double v : z) {
      re += std::cos(t * v);
      im += std::sin(t * v);
    }
    re = re / z.size() - std::exp(-t * t / 2);
    im /= z.size();
    const double f = (re * re + im * im) * std::exp(-t * t) / std::sqrt(std::numbers::pi);
    total += (i == 0 || i == steps) ? f / 2 : f;
  }
  return total * h;
}

double column_statistic(const std::vector<double>& x) {
  Array a(Shape{x.size(), 1});
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = static_cast<Real>(x[i]);
  Tape t;
  return epps_pulley_columns(t.constant(a)).value()[0];
}

std::vector<double> draw(std::size_t m, Rng& rng, int kind) {
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) {
    switch (kind) {
      case 0: x[i] = rng.normal(); break;
      case 1: x[i] = rng.uniform(-1, 1); break;
      case 2: x[i] = (rng.uniform() < 0.5 ? -3.0 : 3.0) + 0.3 * rng.normal(); break;
      default: x[i] = 2.5; break;
    }
  }
  return x;
}

SslConfig toy_ssl(Regime regime, double lambda) {
  SslConfig c;
  c.regime = regime;
  c.lambda = lambda;
  c.slices = 8;
  return c;
}

}  // namespace

TEST(Mask, ExactCountPerWindow) {
  for (std::size_t s : {2u, 5u, 15u, 20u, 37u}) {
    for (double ratio : {0.3, 0.6, 0.75}) {
      const auto expect = static_cast<std::size_t>(std::lround(ratio * s));
      if (expect == 0 || expect == s) {
        EXPECT_THROW(mask_patches(4, s, ratio, Rng(1)), std::invalid_argument);
        continue;
      }
      MaskPlan plan = mask_patches(6, s, ratio, Rng(s));
      for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(plan.masked_count(b), expect);
      EXPECT_EQ(plan.total_masked(), 6 * expect);
    }
  }
  EXPECT_THROW(mask_patches(1, 1, 0.5, Rng(1)), std::invalid_argument);
  EXPECT_THROW(mask_patches(1, 10, 0.0, Rng(1)), std::invalid_argument);
  EXPECT_THROW(mask_patches(1, 10, 1.0, Rng(1)), std::invalid_argument);
}

TEST(Mask, DeterministicAndVaried) {
  const MaskPlan a = mask_patches(8, 20, 0.6, Rng(3));
  const MaskPlan b = mask_patches(8, 20, 0.6, Rng(3));
  EXPECT_EQ(a.masked, b.masked);
  const MaskPlan c = mask_patches(8, 20, 0.6, Rng(4));
  EXPECT_NE(a.masked, c.masked);
  // Every position is hit eventually.
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    MaskPlan p = mask_patches(1, 20, 0.6, Rng(seed));
    for (std::size_t s = 0; s < 20; ++s) hits[s] += p.at(0, s);
  }
  for (int h : hits) EXPECT_GT(h, 80);
}

TEST(Recon, OffsetByOneGivesOne) {
  Rng rng(5);
  const Array target = normal_array(Shape{6, 3, 16}, rng);
  Array pred = target;
  for (Real& v : pred.data()) v += 1;
  const MaskPlan plan = mask_patches(2, 3, 0.6, Rng(6));
  Tape t;
  EXPECT_EQ(recon_loss(t.constant(pred), target, plan).value()[0], 1.0f);
}

TEST(Recon, IgnoresVisiblePatches) {
  Rng rng(7);
  const Array target = normal_array(Shape{4, 2, 8}, rng);
  MaskPlan plan{1, 4, 0.5, {1, 0, 1, 0}};
  Array pred = target;
  for (std::size_t i = 0; i < 16; ++i) pred[16 + i] += 100;  // visible row 1
  for (std::size_t i = 0; i < 16; ++i) pred[32 + i] += 2;    // masked row 2
  Tape t;
  EXPECT_NEAR(recon_loss(t.constant(pred), target, plan).value()[0], 4.0 * 16 / 32, 1e-6);
  MaskPlan none{1, 4, 0.5, {0, 0, 0, 0}};
  EXPECT_THROW(recon_loss(t.constant(pred), target, none), std::invalid_argument);
  EXPECT_THROW(recon_loss(t.constant(Array(Shape{4, 2, 7})), target, plan), std::invalid_argument);
}

TEST(Views, WithinBoundsOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ViewSet v = sample_views(3, 1280, 64, 960, 320, Rng(seed));
    ASSERT_EQ(v.global_offsets.size(), 2u);
    ASSERT_EQ(v.local_offsets.size(), 4u);
    for (const auto& o : v.global_offsets)
      for (std::size_t x : o) ASSERT_LE(x + 960, 1280u);
    for (const auto& o : v.local_offsets)
      for (std::size_t x : o) ASSERT_LE(x + 320, 1280u);
  }
}

TEST(Views, FullLengthGlobalStartsAtZero) {
  const ViewSet v = sample_views(4, 1280, 64, 1280, 320, Rng(9));
  for (const auto& o : v.global_offsets)
    for (std::size_t x : o) EXPECT_EQ(x, 0u);
}

TEST(Views, DefaultLengthsInPatches) {
  EXPECT_EQ(default_global_length(1280, 64) / 64, 15u);
  EXPECT_EQ(default_local_length(1280, 64) / 64, 5u);
  EXPECT_THROW(sample_views(1, 1280, 64, 320, 960, Rng(1)), std::invalid_argument);
  EXPECT_THROW(sample_views(1, 1280, 64, 1000, 320, Rng(1)), std::invalid_argument);
  EXPECT_THROW(sample_views(1, 1280, 64, 1344, 320, Rng(1)), std::invalid_argument);
}

TEST(Views, CropCopiesSamples) {
  Rng rng(10);
  const Array w = normal_array(Shape{2, 3, 50}, rng);
  const std::size_t offsets[] = {4, 17};
  const Array c = crop(w, offsets, 20);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 20}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(c.at({b, ch, t}), w.at({b, ch, offsets[b] + t}));
}

TEST(Jepa, WorkedExample) {
  // Globals at 0 and 2 on one axis (mean 1), locals at 6 and 1: (25 + 0) / 2 per
  // window; the second window is at the mean.
  Array g(Shape{2, 2, 2}), l(Shape{2, 2, 2});
  g.at({0, 0, 0}) = 0;
  g.at({1, 0, 0}) = 2;
  l.at({0, 0, 0}) = 6;
  l.at({1, 0, 0}) = 1;
  Tape t;
  EXPECT_NEAR(jepa_pred_loss(t.constant(l), t.constant(g)).value()[0], 25.0 / 4, 1e-6);
}

TEST(Jepa, SymmetricInViewOrder) {
  Rng rng(11);
  const Array g = normal_array(Shape{2, 3, 5}, rng), l = normal_array(Shape{4, 3, 5}, rng);
  Array g2(g.shape()), l2(l.shape());
  for (std::size_t i = 0; i < 15; ++i) {
    g2[i] = g[15 + i];
    g2[15 + i] = g[i];
  }
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t i = 0; i < 15; ++i) l2[(3 - v) * 15 + i] = l[v * 15 + i];
  Tape t;
  EXPECT_NEAR(jepa_pred_loss(t.constant(l), t.constant(g)).value()[0],
              jepa_pred_loss(t.constant(l2), t.constant(g2)).value()[0], 1e-5);
  EXPECT_THROW(jepa_pred_loss(t.constant(l), t.constant(Array(Shape{2, 3, 4}))), std::invalid_argument);
}

TEST(EppsPulley, ClosedFormMatchesQuadrature) {
  for (int kind : {0, 1, 2}) {
    Rng rng(12 + kind);
    const auto z = standardized(draw(64, rng, kind));
    EXPECT_NEAR(epps_pulley(z), quadrature_statistic(z), 1e-4) << "kind " << kind;
  }
}

TEST(EppsPulley, ColumnOpStandardizes) {
  Rng rng(15);
  const auto x = draw(64, rng, 1);
  std::vector<double> shifted = x;
  for (double& v : shifted) v = 3 * v - 7;
  EXPECT_NEAR(column_statistic(x), epps_pulley(standardized(x)), 1e-5);
  EXPECT_NEAR(column_statistic(shifted), column_statistic(x), 1e-5);
  const double constant = 1 - 2 * std::sqrt(2.0 / 3) + std::sqrt(0.5);
  EXPECT_NEAR(column_statistic(draw(32, rng, 3)), constant, 1e-6);
}

TEST(EppsPulley, GaussianFarBelowConstant) {
  const double constant = column_statistic(std::vector<double>(1024, 1.0));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    ASSERT_LT(column_statistic(draw(1024, rng, 0)), 0.1 * constant) << "seed " << seed;
  }
}

TEST(EppsPulley, NormalRanksLowest) {
  Rng rng(16);
  const double normal = column_statistic(draw(512, rng, 0));
  for (int kind : {1, 2, 3}) EXPECT_LT(normal, column_statistic(draw(512, rng, kind))) << "kind " << kind;
}

TEST(SigReg, MoreSlicesReduceVariance) {
  Rng rng(17);
  Array emb(Shape{64, 16});
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t f = 0; f < 16; ++f) emb.at({i, f}) = static_cast<Real>(f < 4 ? rng.uniform(-1, 1) : rng.normal());
  auto variance = [&](std::size_t slices) {
    std::vector<double> vals;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Tape t;
      vals.push_back(sigreg(t.constant(emb), slices, Rng(seed, "slices")).value()[0]);
    }
    const double mu = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    double v = 0;
    for (double x : vals) v += (x - mu) * (x - mu);
    return v / vals.size();
  };
  EXPECT_LT(variance(300), variance(60));
  Tape t;
  EXPECT_THROW(sigreg(t.constant(Array(Shape{7, 4})), 10, Rng(1)), std::invalid_argument);
}

TEST(SigReg, DirectionsAreUnit) {
  const Array d = random_directions(12, 30, Rng(18));
  for (std::size_t s = 0; s < 30; ++s) {
    double n = 0;
    for (std::size_t i = 0; i < 12; ++i) n += d.at({i, s}) * d.at({i, s});
    EXPECT_NEAR(n, 1.0, 1e-5);
  }
}

TEST(MixedLoss, Examples) {
  const LossReport a = mixed_loss(0.8, 0.2, 0.3, 0.5);
  EXPECT_DOUBLE_EQ(a.total, 0.8 + 0.5 * 0.5);
  EXPECT_DOUBLE_EQ(mixed_loss(0.8, 0.2, 0.3, 0.0).total, 0.8);
  EXPECT_DOUBLE_EQ(mixed_loss(0.8, 0.2, 0.3, 2.0, Regime::recon).total, 0.8);
  EXPECT_DOUBLE_EQ(mixed_loss(0.8, 0.2, 0.3, 2.0, Regime::lejepa).total, 1.0);
  EXPECT_THROW(mixed_loss(1, 1, 1, -0.1), std::invalid_argument);
  EXPECT_EQ(parse_regime("lejepa"), Regime::lejepa);
  EXPECT_EQ(regime_name(parse_regime("mixed")), "mixed");
  EXPECT_THROW(parse_regime("jepa"), std::invalid_argument);
}

TEST(Objective, ZeroLambdaMatchesReconstructionOnly) {
  Model model(toy_config(), 20);
  Rng rng(21);
  const Array w = normal_array(Shape{2, 3, 64}, rng);
  const Montage m = first_channels(3);
  auto params = model.params().all();
  auto run = [&](Regime regime, double lambda) {
    Tape t;
    SslStep step = ssl_objective(t, model, w, m, toy_ssl(regime, lambda), Rng(22));
    backward(t, step.total, params);
    std::vector<Real> grads;
    for (Parameter* p : params) grads.insert(grads.end(), p->grad.data().begin(), p->grad.data().end());
    return std::pair{step, grads};
  };
  auto [recon, g_recon] = run(Regime::recon, 0.5);
  auto [mixed, g_mixed] = run(Regime::mixed, 0.0);
  EXPECT_EQ(recon.report.total, mixed.report.total);
  EXPECT_EQ(g_recon, g_mixed);
  EXPECT_GT(mixed.report.sigreg, 0.0);
  EXPECT_EQ(mixed.report.total, mixed.report.recon);
}

TEST(Objective, RegimesReportComponents) {
  Model model(toy_config(), 23);
  Rng rng(24);
  const Array w = normal_array(Shape{2, 2, 64}, rng);
  const Montage m = first_channels(2);
  Tape t;
  const SslStep s = ssl_objective(t, model, w, m, toy_ssl(Regime::mixed, 0.5), Rng(25));
  EXPECT_NEAR(s.report.total, s.report.recon + 0.5 * (s.report.jepa_pred + s.report.sigreg), 1e-5);
  Tape t2;
  const SslStep l = ssl_objective(t2, model, w, m, toy_ssl(Regime::lejepa, 0.5), Rng(25));
  EXPECT_EQ(l.report.recon, 0.0);
  EXPECT_NEAR(l.report.total, 0.5 * (s.report.jepa_pred + s.report.sigreg), 1e-5);
  Tape t3;
  EXPECT_THROW(ssl_objective(t3, model, w, m, toy_ssl(Regime::mixed, -1), Rng(25)), std::invalid_argument);
}

#ifdef LUMAMBA_USE_DOUBLE
TEST(EppsPulley, ColumnGradientCheck) {
  Rng rng(26);
  Parameter x{"x", normal_array(Shape{12, 3}, rng), {}};
  x.value.at({3, 1}) += 2;
  Parameter* ps[] = {&x};
  const double err = grad_check([&](Tape& t) { return sum_all(mul(epps_pulley_columns(t.param(x)),
                                                                  t.constant(Array(Shape{3}, std::vector<Real>{1.0, -2.0, 0.5})))); },
                                ps, {.step = 1e-5, .samples_per_param = 36});
  EXPECT_LE(err, 1e-5);
}

TEST(Objective, MixedLossGradientCheck) {
  Model model(toy_config(), 27);
  Rng rng(28);
  const Array w = normal_array(Shape{2, 2, 64}, rng);
  const Montage m = first_channels(2);
  auto params = model.params().all();
  const double err = grad_check(
      [&](Tape& t) { return ssl_objective(t, model, w, m, toy_ssl(Regime::mixed, 0.5), Rng(29)).total; }, params,
      {.step = 1e-3, .samples_per_param = 3});
  EXPECT_LE(err, 1e-3);
}
#endif
