#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradient_f64.hpp"
#include "lumamba/checkpoint.hpp"
#include "lumamba/costmodel.hpp"
#include "lumamba/dataset.hpp"
#include "lumamba/encoder.hpp"
#include "lumamba/model.hpp"
#include "lumamba/ops.hpp"
#include "lumamba/scan.hpp"
#include "lumamba/ssl.hpp"
#include "lumamba/synth.hpp"
#include "lumamba/trainer.hpp"
#include "test_util.hpp"

using namespace lumamba;
using namespace lumamba::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- 1: scan oracle

// Step-by-step recurrence in double precision.
Array naive_scan(const Array& u, const Array& delta, const Array& a, const Array& b, const Array& c, const Array& skip) {
  const std::size_t batch = u.dim(0), len = u.dim(1), d = u.dim(2), n = a.dim(1);
  Array y(u.shape());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t di = 0; di < d; ++di) {
      std::vector<double> h(n, 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        const double dl = delta.at({bi, t, di}), x = u.at({bi, t, di});
        double out = skip[di] * x;
        for (std::size_t k = 0; k < n; ++k) {
          h[k] = std::exp(dl * a.at({di, k})) * h[k] + dl * b.at({bi, t, k}) * x;
          out += c.at({bi, t, k}) * h[k];
        }
        y.at({bi, t, di}) = static_cast<Real>(out);
      }
    }
  return y;
}

Outcome scan_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t len = 1 + rng.below(128), d = 1 + rng.below(32), n = 1 + rng.below(32);
    const Array u = normal_array(Shape{1, len, d}, rng), delta = random_array(Shape{1, len, d}, rng, 0.001, 0.5),
                a = random_array(Shape{d, n}, rng, -4.0, -0.1), b = normal_array(Shape{1, len, n}, rng),
                c = normal_array(Shape{1, len, n}, rng), skip = normal_array(Shape{d}, rng);
    const Array ref = naive_scan(u, delta, a, b, c, skip);
    worst = std::max(worst, max_abs_diff(scan_forward(u, delta, a, b, c, skip, ScanKernel::associative), ref));
    worst = std::max(worst, max_abs_diff(scan_forward(u, delta, a, b, c, skip, ScanKernel::sequential), ref));
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-5 && elapsed < 10.0,
          "100 configs, max |diff| " + num(worst) + " (<= 1e-5), " + num(elapsed, 3) + " s (< 10 s)"};
}

// ---- 2: gradients

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const auto errors = acceptance::pipeline_gradient_errors();
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 120.0;
  std::string detail;
  for (const auto& [name, err] : errors) {
    ok = ok && err <= 1e-3;
    detail += name + " " + num(err, 3) + ", ";
  }
  return {ok, "relative error " + detail + "(<= 1e-3), " + num(elapsed, 3) + " s (< 120 s)"};
}

// ---- 3: topology

Outcome topology_invariance() {
  Model model(ModelConfig{}, 102);
  const ModelConfig& cfg = model.config();
  const std::size_t params_before = model.parameter_count();
  Rng rng(103);

  double unify_diff = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Montage m = montage_template(20);
    const Array w = normal_array(Shape{2, 20, 256}, rng);
    const auto perm = shuffled(20, rng);
    Tape t1, t2;
    Unified a = unify(t1, model.params(), cfg, embed(t1, model.params(), cfg, tokenize(w, cfg.patch), m));
    Unified b = unify(t2, model.params(), cfg,
                      embed(t2, model.params(), cfg, tokenize(permute_channels(w, perm), cfg.patch), m.permuted(perm)));
    unify_diff = std::max(unify_diff, max_abs_diff(a.latents.value(), b.latents.value()));
  }

  std::set<Shape> latent_shapes, feature_shapes;
  for (int c : {16, 20, 26}) {
    Tape t;
    auto enc = model.encode(t, normal_array(Shape{2, static_cast<std::size_t>(c), 640}, rng), montage_template(c));
    latent_shapes.insert(enc.latents.shape());
    feature_shapes.insert(enc.features.shape());
  }
  const bool shapes_ok = latent_shapes.size() == 1 && feature_shapes.size() == 1 && model.parameter_count() == params_before;

  const Montage m = montage_template(26);
  const auto perm = shuffled(26, rng);
  Tape t;
  Var lat = t.constant(normal_array(Shape{4, cfg.queries, cfg.embed}, rng));
  const Array a = decode(t, model.params(), cfg, lat, m).patches.value();
  const Array b = decode(t, model.params(), cfg, lat, m.permuted(perm)).patches.value();
  double decode_diff = 0;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 26; ++c)
      for (std::size_t p = 0; p < cfg.patch; ++p)
        decode_diff = std::max(decode_diff, double(std::abs(b.at({r, c, p}) - a.at({r, perm[c], p}))));

  return {unify_diff <= 1e-5 && shapes_ok && decode_diff <= 1e-5,
          "unify permutation diff " + num(unify_diff) + ", decode equivariance diff " + num(decode_diff) +
              " (<= 1e-5), latent shapes identical for 16/20/26: " + (shapes_ok ? "yes" : "no")};
}

// ---- 4: JEPA

double jepa_value(const std::vector<Real>& locals, const std::vector<Real>& globals, Shape ls, Shape gs) {
  Tape t;
  return jepa_pred_loss(t.constant(Array(std::move(ls), locals)), t.constant(Array(std::move(gs), globals))).value()[0];
}

Outcome jepa_contract() {
  const double worked = jepa_value({3, 4}, {0, 0}, Shape{1, 1, 2}, Shape{1, 1, 2});
  // Two globals averaging to (1, 2); both locals equal that mean.
  const double at_mean = jepa_value({1, 2, 1, 2}, {0, 1, 2, 3}, Shape{2, 1, 2}, Shape{2, 1, 2});
  // One local off the mean by (3, 4), the other on it: (25 + 0) / 2.
  const double half = jepa_value({4, 6, 1, 2}, {0, 1, 2, 3}, Shape{2, 1, 2}, Shape{2, 1, 2});
  Rng rng(104);
  bool positive = true;
  for (int i = 0; i < 20; ++i) {
    Array l = normal_array(Shape{4, 3, 5}, rng), g = normal_array(Shape{2, 3, 5}, rng);
    Tape t;
    positive = positive && jepa_pred_loss(t.constant(l), t.constant(g)).value()[0] > 0;
  }
  return {worked == 25.0 && at_mean == 0.0 && half == 12.5 && positive,
          "[3,4] vs 0 -> " + num(worked, 8) + " (25), locals at global mean -> " + num(at_mean) +
              " (0), mixed case -> " + num(half, 8) + " (12.5), random cases positive: " + (positive ? "yes" : "no")};
}

// ---- 5: SigReg

// Trapezoid rule for the weighted squared distance between the empirical and the
// standard normal characteristic functions, weight exp(-t^2)/sqrt(pi).
double epps_pulley_quadrature(const std::vector<double>& z) {
  const double lim = 12.0;
  const int steps = 48000;
  const double h = 2 * lim / steps;
  double acc = 0;
  for (int i = 0; i <= steps; ++i) {
    const double t = -lim + i * h;
    double re = 0, im = 0;
    for (double v : z) {
      re += std::cos(t * v);
      im += std::sin(t * v);
    }
    re /= z.size();
    im /= z.size();
    const double cf = std::exp(-0.5 * t * t);
    const double f = ((re - cf) * (re - cf) + im * im) * std::exp(-t * t) / std::sqrt(std::numbers::pi);
    acc += (i == 0 || i == steps) ? 0.5 * f : f;
  }
  return acc * h;
}

double column_statistic(const Array& samples) {
  Tape t;
  return epps_pulley_columns(t.constant(samples)).value()[0];
}

Outcome sigreg_calibration() {
  Rng rng(105);
  double worst = 0;
  for (int kind = 0; kind < 4; ++kind) {
    std::vector<double> z(64);
    for (double& v : z) {
      switch (kind) {
        case 0: v = rng.normal(); break;
        case 1: v = rng.uniform(-1.7, 1.7); break;
        case 2: v = (rng.uniform() < 0.5 ? -1.0 : 1.0) + 0.2 * rng.normal(); break;
        default: v = std::exp(rng.normal()) - 1.6; break;
      }
    }
    const double closed = epps_pulley(z), quad = epps_pulley_quadrature(z);
    worst = std::max(worst, std::abs(closed - quad) / std::abs(quad));
  }
  const double constant = column_statistic(Array(Shape{1024, 1}, std::vector<Real>(1024, Real(2.5))));
  double gauss_worst = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng g(seed, "gauss");
    gauss_worst = std::max(gauss_worst, column_statistic(normal_array(Shape{1024, 1}, g)));
  }
  return {worst <= 1e-4 && gauss_worst < 0.1 * constant,
          "closed form vs quadrature rel. error " + num(worst, 3) + " (<= 1e-4); worst Gaussian " + num(gauss_worst, 3) +
              " vs constant " + num(constant, 4) + " (< 0.1x over 50 seeds)"};
}

// ---- 6, 7: learning and transfer

struct Corpus {
  WindowSet pretrain;                      // 20 channels
  std::map<std::size_t, WindowSet> tasks;  // labeled, by channel count
};

Corpus make_corpus() {
  Corpus c;
  SynthConfig pre;
  pre.montages = {20};
  pre.subjects = 15;
  pre.seconds = 60;
  const auto recs = synth_dataset(pre, 100);
  c.pretrain = make_window_set(recs);
  SynthConfig task;
  task.montages = {16, 20, 26};
  task.subjects = 12;
  task.seconds = 20;
  const auto labeled = synth_dataset(task, 200);
  for (int m : task.montages) {
    std::vector<Recording> part;
    for (const Recording& r : labeled)
      if (r.channels() == static_cast<std::size_t>(m)) part.push_back(r);
    c.tasks[m] = make_window_set(part);
  }
  return c;
}

Checkpoint pretrained(const Corpus& corpus, const std::string& regime, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.regime = regime;
  cfg.lambda = 0.5;
  cfg.slices = 60;
  cfg.epochs = 1;
  cfg.seed = seed;
  return pretrain(cfg, ModelConfig{}, corpus.pretrain).checkpoint();
}

MetricReport transfer(const Checkpoint& init, const WindowSet& task, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.regime = "finetune";
  cfg.epochs = 15;
  cfg.seed = seed;
  const SubjectSplit split = split_by_subject(task, 0.25, Rng(seed, "split"));
  ModelConfig mc = checkpoint_model_config(init);
  mc.classes = task.class_count();
  TrainResult r = finetune(cfg, mc, init, split.train);
  return evaluate(r.model, split.test);
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / v.size();
}

struct LearningRuns {
  std::vector<double> bacc20, auroc20, bacc16, bacc26, recon_bacc16;
  double minutes_criterion6 = 0;
  double pretrain_minutes = 0;
};

LearningRuns learning_runs(const Corpus& corpus) {
  LearningRuns runs;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto t0 = Clock::now();
    const Checkpoint mixed = pretrained(corpus, "mixed", seed);
    runs.pretrain_minutes += seconds_since(t0) / 60;
    const MetricReport r20 = transfer(mixed, corpus.tasks.at(20), seed);
    runs.minutes_criterion6 += seconds_since(t0) / 60;
    runs.bacc20.push_back(r20.balanced_accuracy);
    runs.auroc20.push_back(r20.auroc.value_or(0.0));
    runs.bacc16.push_back(transfer(mixed, corpus.tasks.at(16), seed).balanced_accuracy);
    runs.bacc26.push_back(transfer(mixed, corpus.tasks.at(26), seed).balanced_accuracy);
    const Checkpoint recon = pretrained(corpus, "recon", seed);
    runs.recon_bacc16.push_back(transfer(recon, corpus.tasks.at(16), seed).balanced_accuracy);
    std::cout << "  seed " << seed << ": bacc20 " << num(runs.bacc20.back()) << " auroc20 " << num(runs.auroc20.back())
              << " bacc16 " << num(runs.bacc16.back()) << " bacc26 " << num(runs.bacc26.back()) << " recon bacc16 "
              << num(runs.recon_bacc16.back()) << std::endl;
  }
  return runs;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + num(x, 3);
  return s;
}

Outcome end_to_end(const Corpus& corpus, const LearningRuns& r) {
  const double bacc = mean_of(r.bacc20), auroc = mean_of(r.auroc20);
  const double data_minutes = corpus.pretrain.size() * 5.0 / 60.0;
  return {bacc >= 0.95 && auroc >= 0.98 && data_minutes >= 30.0 && r.minutes_criterion6 < 30.0,
          "mean balanced accuracy " + num(bacc) + " (>= 0.95), mean AUROC " + num(auroc) + " (>= 0.98) [seeds " +
              list(r.bacc20) + " / " + list(r.auroc20) + "], " + num(data_minutes, 3) +
              " min of pre-training data (>= 30), " + num(r.minutes_criterion6, 3) + " min (< 30)"};
}

Outcome cross_montage(const LearningRuns& r) {
  const double b16 = mean_of(r.bacc16), b26 = mean_of(r.bacc26);
  int wins = 0;
  for (std::size_t i = 0; i < r.bacc16.size(); ++i) wins += r.bacc16[i] >= r.recon_bacc16[i];
  return {b16 >= 0.90 && b26 >= 0.90 && wins >= 2,
          "mean balanced accuracy 16ch " + num(b16) + ", 26ch " + num(b26) + " (>= 0.90); mixed >= recon on 16ch in " +
              std::to_string(wins) + "/3 seeds (>= 2) [mixed " + list(r.bacc16) + ", recon " + list(r.recon_bacc16) +
              "]"};
}

// ---- 8: regime reduction

Outcome regime_reduction() {
  Model model(ModelConfig{}, 106);
  Rng rng(107);
  const Array windows = normal_array(Shape{4, 20, 1280}, rng);
  const Montage m = montage_template(20);
  auto params = model.params().all();
  auto run = [&](Regime regime, double lambda) {
    SslConfig cfg;
    cfg.regime = regime;
    cfg.lambda = lambda;
    Tape t;
    SslStep step = ssl_objective(t, model, windows, m, cfg, Rng(108));
    backward(t, step.total, params);
    std::vector<Real> grads;
    for (Parameter* p : params) grads.insert(grads.end(), p->grad.data().begin(), p->grad.data().end());
    return std::pair{step.report.total, grads};
  };
  const auto [recon, g_recon] = run(Regime::recon, 0.5);
  const auto [mixed, g_mixed] = run(Regime::mixed, 0.0);
  const bool same = recon == mixed && g_recon == g_mixed;
  return {same, "lambda=0 mixed " + num(mixed, 9) + " vs recon-only " + num(recon, 9) + ", " +
                    std::to_string(g_recon.size()) + " gradient entries " + (same ? "bit-identical" : "differ")};
}

// ---- 9: scaling

Outcome scaling_laws() {
  const auto t0 = Clock::now();
  const ArchSpec ssm = lumamba_spec(ModelConfig{}, 20);
  const ArchSpec flat = attention_flattened_spec(ssm);
  const auto sweep = log_sweep(64, 65536);
  const double s1 = loglog_slope(ssm, sweep), s2 = loglog_slope(flat, sweep);
  double ratio = 0;
  for (std::size_t s : sweep) ratio = std::max(ratio, count_flops(flat, s).total / count_flops(ssm, s).total);
  const double elapsed = seconds_since(t0);
  return {std::abs(s1 - 1.0) <= 0.1 && std::abs(s2 - 2.0) <= 0.1 && ratio > 100 && elapsed < 5.0,
          "slopes ssm-unified " + num(s1) + " (1 +- 0.1), attention-flattened " + num(s2) +
              " (2 +- 0.1); max FLOPs ratio " + num(ratio) + " (> 100), " + num(elapsed, 3) + " s (< 5 s)"};
}

// ---- 10, 11: CLI

struct CliRun {
  int status = 0;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = lumamba::cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = file_bytes(e.path());
  return files;
}

Outcome reproducibility(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string w = work.string();
  const std::vector<std::vector<std::string>> verbs{
      {"synth", "--montage", "16,20", "--subjects", "3", "--seconds", "10", "--fs", "200", "--seed", "7", "--out",
       w + "/raw"},
      {"preprocess", "--in", w + "/raw", "--out", w + "/pre"},
      {"pretrain", "--data", w + "/pre", "--montage", "20", "--batch-size", "2", "--max-steps", "2", "--slices", "16",
       "--seed", "3", "--log", w + "/pretrain.csv", "--out", w + "/pre.ckpt"},
      {"finetune", "--init", w + "/pre.ckpt", "--data", w + "/pre", "--montage", "16", "--epochs", "1",
       "--batch-size", "2", "--max-steps", "2", "--test-fraction", "0.34", "--seed", "4", "--out", w + "/ft.ckpt"},
      {"eval", "--init", w + "/pre.ckpt", "--data", w + "/pre", "--montage", "16", "--epochs", "1", "--batch-size",
       "2", "--max-steps", "2", "--test-fraction", "0.34", "--seeds", "0,1", "--out", w + "/metrics.csv"},
      {"flops", "--sweep", "64:4096", "--out", w + "/curves.csv"},
  };
  std::vector<std::string> bad;
  for (const auto& args : verbs) {
    const CliRun first = cli(args);
    const auto files_first = snapshot(work);
    const CliRun second = cli(args);
    const auto files_second = snapshot(work);
    if (first.status != 0 || second.status != 0 || first.out != second.out || files_first != files_second)
      bad.push_back(args[0] + (first.status != 0 ? " (exit " + std::to_string(first.status) + ": " + first.err + ")" : ""));
  }

  // Checkpoint round trip through bytes and a file.
  TrainConfig cfg;
  cfg.regime = "mixed";
  cfg.batch_size = 2;
  cfg.max_steps = 2;
  cfg.slices = 16;
  const WindowSet data = load_window_set(work / "pre", 20);
  TrainResult r = pretrain(cfg, ModelConfig{}, data);
  const Checkpoint ckpt = r.checkpoint();
  save_checkpoint(ckpt, work / "round.ckpt");
  const Checkpoint back = load_checkpoint(work / "round.ckpt");
  bool round_trip = encode_checkpoint(back) == encode_checkpoint(ckpt);
  Model restored = restore_model(back);
  const Array batch = data.gather(std::vector<std::size_t>{0, 1});
  Tape t1, t2;
  const Array f1 = r.model.encode(t1, batch, data.montage).features.value();
  const Array f2 = restored.encode(t2, batch, data.montage).features.value();
  round_trip = round_trip && std::equal(f1.data().begin(), f1.data().end(), f2.data().begin(), f2.data().end());

  std::string failed;
  for (const auto& b : bad) failed += (failed.empty() ? "" : ", ") + b;
  return {bad.empty() && round_trip,
          std::to_string(verbs.size() - bad.size()) + "/" + std::to_string(verbs.size()) +
              " verbs byte-identical across reruns" + (failed.empty() ? "" : " [differs: " + failed + "]") +
              "; checkpoint round trip " + (round_trip ? "bit-exact" : "differs")};
}

Outcome parameter_budget(const fs::path& work) {
  const CliRun run = cli({"flops", "--sweep", "64:128", "--out", (work / "budget.csv").string()});
  auto field = [&](const std::string& key) -> long long {
    const auto at = run.out.find(key + "=");
    return at == std::string::npos ? -1 : std::stoll(run.out.substr(at + key.size() + 1));
  };
  const long long total = field("parameters.total"), head = field("parameters.head");
  return {run.status == 0 && total > 0 && head > 0 && total <= 4600000 && head <= 536000,
          "CLI reports " + std::to_string(total) + " parameters (<= 4.6M), head " + std::to_string(head) +
              " (<= 536K)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "lumamba_acceptance").string();
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const std::map<int, std::string> titles{
      {1, "scan oracle equivalence"}, {2, "gradient integrity"},    {3, "topology invariance"},
      {4, "JEPA loss contract"},      {5, "SigReg calibration"},    {6, "end-to-end learning"},
      {7, "cross-montage transfer"},  {8, "regime reduction"},      {9, "scaling laws"},
      {10, "reproducibility"},        {11, "parameter budget"},
  };
  int failures = 0;
  auto report = [&](int c, const Outcome& o) {
    std::cout << "criterion " << c << " " << (o.pass ? "PASS" : "FAIL") << "  " << titles.at(c) << ": " << o.detail
              << std::endl;
    failures += !o.pass;
  };
  auto guarded = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      report(c, f());
    } catch (const std::exception& e) {
      report(c, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, scan_oracle);
  guarded(2, gradient_integrity);
  guarded(3, topology_invariance);
  guarded(4, jepa_contract);
  guarded(5, sigreg_calibration);
  if (wanted(6) || wanted(7)) {
    try {
      const Corpus corpus = make_corpus();
      const LearningRuns runs = learning_runs(corpus);
      if (wanted(6)) report(6, end_to_end(corpus, runs));
      if (wanted(7)) report(7, cross_montage(runs));
    } catch (const std::exception& e) {
      if (wanted(6)) report(6, {false, std::string("error: ") + e.what()});
      if (wanted(7)) report(7, {false, std::string("error: ") + e.what()});
    }
  }
  guarded(8, regime_reduction);
  guarded(9, scaling_laws);
  guarded(10, [&] { return reproducibility(fs::path(work) / "repro"); });
  guarded(11, [&] { return parameter_budget(fs::path(work)); });
  fs::remove_all(work);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
