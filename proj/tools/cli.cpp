#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "lumamba/checkpoint.hpp"
#include "lumamba/costmodel.hpp"
#include "lumamba/dataset.hpp"
#include "lumamba/keyvalue.hpp"
#include "lumamba/preprocess.hpp"
#include "lumamba/recording.hpp"
#include "lumamba/synth.hpp"
#include "lumamba/trainer.hpp"

namespace lumamba::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v, 4) : std::string("n/a"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// Values from a key = value file fill every option not given on the command line.
void apply_config_file(CLI::App* verb, const std::string& path) {
  std::map<std::string, std::string> entries;
  try {
    entries = read_key_values(path);
  } catch (const std::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  for (const auto& [key, value] : entries) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = name == "config" || name == "help" ? nullptr : verb->get_option_no_throw("--" + name);
    if (!opt) throw UsageError("config " + path + ": unknown key '" + key + "' for " + verb->get_name());
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw UsageError("config " + path + ": " + e.what());
    }
  }
}

struct Verb {
  CLI::App* app = nullptr;
  std::string config;
  std::function<void(std::ostream&, std::ostream&)> action;
};

CLI::App* add_verb(CLI::App& root, const std::string& name, const std::string& about, Verb& verb) {
  verb.app = root.add_subcommand(name, about);
  verb.app->option_defaults()->always_capture_default();
  verb.app->add_option("--config", verb.config, "key = value file; command-line flags take precedence");
  return verb.app;
}

void add_model_flags(CLI::App* app, ModelConfig& m, bool with_classes) {
  const std::string g = "Model";
  app->add_option("--patch", m.patch, "samples per patch")->group(g);
  app->add_option("--embed", m.embed, "token width E")->group(g);
  app->add_option("--queries", m.queries, "learned queries Q")->group(g);
  app->add_option("--conv-channels", m.conv_channels, "first temporal conv channels")->group(g);
  app->add_option("--conv-kernel", m.conv_kernel, "temporal conv kernel")->group(g);
  app->add_option("--temporal-dim", m.temporal_dim, "temporal feature width")->group(g);
  app->add_option("--spectral-dim", m.spectral_dim, "spectral feature width")->group(g);
  app->add_option("--positional-dim", m.positional_dim, "electrode embedding width")->group(g);
  app->add_option("--positional-hidden", m.positional_hidden, "electrode MLP hidden width")->group(g);
  app->add_option("--ffn-hidden", m.ffn_hidden, "unification FFN hidden width")->group(g);
  app->add_option("--state", m.state, "SSM state size N")->group(g);
  app->add_option("--expand", m.expand, "SSM expansion factor")->group(g);
  app->add_option("--blocks", m.blocks, "BiMamba blocks")->group(g);
  if (with_classes) app->add_option("--classes", m.classes, "classifier outputs")->group(g);
}

void add_data_flags(CLI::App* app, std::string& dir, std::size_t& montage, double& seconds) {
  app->add_option("--data", dir, "directory of .lum recordings")->required();
  app->add_option("--montage", montage, "keep recordings with this many channels (0 keeps all)");
  app->add_option("--seconds", seconds, "window length in seconds");
}

void add_finetune_flags(CLI::App* app, TrainConfig& t, double& test_fraction) {
  const std::string g = "Training";
  app->add_option("--epochs", t.epochs, "passes over the training split")->group(g);
  app->add_option("--batch-size", t.batch_size, "windows per step")->group(g);
  app->add_option("--learning-rate", t.learning_rate, "peak AdamW learning rate")->group(g);
  app->add_option("--weight-decay", t.weight_decay, "AdamW decoupled weight decay")->group(g);
  app->add_option("--max-steps", t.max_steps, "stop after this many steps (0: no limit)")->group(g);
  app->add_option("--clip-norm", t.clip_norm, "global gradient norm limit")->group(g);
  app->add_option("--warmup-fraction", t.warmup_fraction, "linear warmup share of the schedule")->group(g);
  app->add_option("--epoch-cap", t.epoch_cap, "warn above this many epochs")->group(g);
  app->add_option("--frozen", t.frozen, "parameter name prefixes left untouched")->delimiter(',')->group(g);
  app->add_option("--test-fraction", test_fraction, "share of subjects held out for testing")->group(g);
}

TrainHooks make_hooks(std::ostream& err, std::vector<StepLog>* steps) {
  TrainHooks hooks;
  hooks.on_warning = [&err](const std::string& w) { err << "warning: " << w << "\n"; };
  if (steps) hooks.on_step = [steps](const StepLog& s) { steps->push_back(s); };
  return hooks;
}

std::string step_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream os;
  os << "step,epoch,recon,jepa_pred,sigreg,total,lr,grad_norm\n";
  for (const StepLog& s : log)
    os << s.step << ',' << s.epoch << ',' << fixed(s.loss.recon, 8) << ',' << fixed(s.loss.jepa_pred, 8) << ','
       << fixed(s.loss.sigreg, 8) << ',' << fixed(s.loss.total, 8) << ',' << fixed(s.lr, 10) << ','
       << fixed(s.grad_norm, 8) << '\n';
  return os.str();
}

void print_epochs(std::ostream& out, const std::vector<StepLog>& log) {
  std::size_t i = 0;
  while (i < log.size()) {
    const std::size_t epoch = log[i].epoch;
    double recon = 0, jepa = 0, sig = 0, total = 0;
    std::size_t n = 0;
    for (; i < log.size() && log[i].epoch == epoch; ++i, ++n) {
      recon += log[i].loss.recon;
      jepa += log[i].loss.jepa_pred;
      sig += log[i].loss.sigreg;
      total += log[i].loss.total;
    }
    out << "epoch " << epoch << ": steps=" << n << " total=" << fixed(total / n) << " recon=" << fixed(recon / n)
        << " jepa_pred=" << fixed(jepa / n) << " sigreg=" << fixed(sig / n) << "\n";
  }
}

void print_metrics(std::ostream& out, const std::string& label, const MetricReport& m) {
  out << label << "balanced_accuracy=" << fixed(m.balanced_accuracy, 4) << " auroc=" << fixed(m.auroc)
      << " aupr=" << fixed(m.aupr) << "\n";
}

WindowSet load_labeled(const std::string& dir, std::size_t montage, double seconds) {
  WindowSet set = load_window_set(dir, montage, seconds);
  if (set.size() == 0) throw std::runtime_error("no windows in " + dir);
  if (!set.labeled()) throw std::runtime_error(dir + ": recordings are unlabeled");
  return set;
}

std::pair<std::size_t, std::size_t> parse_sweep(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--sweep expects lo:hi, got '" + text + "'");
  try {
    std::size_t used = 0;
    const std::string lo_s = text.substr(0, colon), hi_s = text.substr(colon + 1);
    const unsigned long long lo = std::stoull(lo_s, &used);
    if (used != lo_s.size()) throw std::invalid_argument(lo_s);
    const unsigned long long hi = std::stoull(hi_s, &used);
    if (used != hi_s.size()) throw std::invalid_argument(hi_s);
    if (lo < 1 || hi < lo) throw std::invalid_argument(text);
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("--sweep expects lo:hi with 1 <= lo <= hi, got '" + text + "'");
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App root{"Channel-agnostic EEG state space model: data, training and cost tools", "lumamba"};
  root.require_subcommand(1, 1);
  std::vector<Verb> verbs(6);

  // synth
  SynthConfig synth_cfg;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  {
    CLI::App* app = add_verb(root, "synth", "Generate a labeled synthetic multi-montage dataset", verbs[0]);
    app->add_option("--montage", synth_cfg.montages, "montage sizes (16, 20, 26)")->delimiter(',');
    app->add_option("--classes", synth_cfg.classes, "classes, one band each");
    app->add_option("--subjects", synth_cfg.subjects, "subjects per montage");
    app->add_option("--seconds", synth_cfg.seconds, "recording length in seconds");
    app->add_option("--fs", synth_cfg.fs, "sampling rate in Hz");
    app->add_option("--amplitude", synth_cfg.rhythm_amplitude, "class rhythm amplitude");
    app->add_option("--line-noise", synth_cfg.line_noise, "50 Hz interference amplitude");
    app->add_option("--seed", synth_seed, "random seed");
    app->add_option("--out", synth_out, "output directory")->required();
    verbs[0].action = [&](std::ostream& o, std::ostream&) {
      const auto recs = synth_dataset(synth_cfg, synth_seed);
      fs::create_directories(synth_out);
      for (const Recording& rec : recs) {
        const std::string name = "m" + std::to_string(rec.channels()) + "_" + rec.subject + "_c" +
                                 std::to_string(rec.label.value_or(0)) + ".lum";
        write_recording(rec, fs::path(synth_out) / name);
      }
      o << "wrote " << recs.size() << " recordings to " << synth_out << "\n";
    };
  }

  // preprocess
  std::string pre_in, pre_out;
  std::uint64_t pre_seed = 0;
  {
    CLI::App* app = add_verb(root, "preprocess", "Band-pass, notch and resample recordings to 256 Hz", verbs[1]);
    app->add_option("--in", pre_in, "directory of .lum recordings")->required();
    app->add_option("--seed", pre_seed, "random seed (unused; preprocessing is deterministic)");
    app->add_option("--out", pre_out, "output directory")->required();
    verbs[1].action = [&](std::ostream& o, std::ostream&) {
      const auto files = list_recordings(pre_in);
      if (files.empty()) throw std::runtime_error("no .lum recordings in " + pre_in);
      fs::create_directories(pre_out);
      for (const auto& f : files) write_recording(preprocess(read_recording(f)), fs::path(pre_out) / f.filename());
      o << "preprocessed " << files.size() << " recordings into " << pre_out << "\n";
    };
  }

  // pretrain
  TrainConfig pt;
  ModelConfig pt_model;
  std::string pt_data, pt_out, pt_log;
  double pt_seconds = 5.0;
  {
    CLI::App* app = add_verb(root, "pretrain", "Self-supervised pre-training", verbs[2]);
    add_data_flags(app, pt_data, pt.montage, pt_seconds);
    const std::string g = "Training";
    app->add_option("--regime", pt.regime, "recon | lejepa | mixed")->group(g);
    app->add_option("--epochs", pt.epochs, "passes over the data")->group(g);
    app->add_option("--batch-size", pt.batch_size, "windows per step")->group(g);
    app->add_option("--learning-rate", pt.learning_rate, "peak AdamW learning rate")->group(g);
    app->add_option("--weight-decay", pt.weight_decay, "AdamW decoupled weight decay")->group(g);
    app->add_option("--lambda", pt.lambda, "weight of the joint-embedding terms")->group(g);
    app->add_option("--slices", pt.slices, "random projections for SigReg")->group(g);
    app->add_option("--mask-ratio", pt.mask_ratio, "share of masked patches")->group(g);
    app->add_option("--max-steps", pt.max_steps, "stop after this many steps (0: no limit)")->group(g);
    app->add_option("--clip-norm", pt.clip_norm, "global gradient norm limit")->group(g);
    app->add_option("--warmup-fraction", pt.warmup_fraction, "linear warmup share of the schedule")->group(g);
    add_model_flags(app, pt_model, false);
    app->add_option("--seed", pt.seed, "random seed");
    app->add_option("--log", pt_log, "per-step loss CSV (optional)");
    app->add_option("--out", pt_out, "checkpoint path")->required();
    verbs[2].action = [&](std::ostream& o, std::ostream& e) {
      pt.dataset = pt_data;
      const WindowSet data = load_window_set(pt_data, pt.montage, pt_seconds);
      if (data.size() == 0) throw std::runtime_error("no windows in " + pt_data);
      o << "windows=" << data.size() << " channels=" << data.montage.channels() << "\n";
      std::vector<StepLog> steps;
      TrainResult r = pretrain(pt, pt_model, data, make_hooks(e, &steps));
      print_epochs(o, r.log);
      save_checkpoint(r.checkpoint(), pt_out);
      if (!pt_log.empty()) write_text(pt_log, step_log_csv(r.log));
      o << "parameters=" << r.model.parameter_count() << "\ncheckpoint=" << pt_out << "\n";
    };
  }

  // finetune
  TrainConfig ft;
  ft.regime = "finetune";
  ft.epochs = 15;
  std::string ft_init, ft_data, ft_out, ft_log;
  double ft_seconds = 5.0, ft_test = 0.25;
  {
    CLI::App* app = add_verb(root, "finetune", "Attach a classifier head and train on labeled windows", verbs[3]);
    app->add_option("--init", ft_init, "pre-trained checkpoint")->required();
    add_data_flags(app, ft_data, ft.montage, ft_seconds);
    add_finetune_flags(app, ft, ft_test);
    app->add_option("--seed", ft.seed, "random seed (head init, split, data order)");
    app->add_option("--log", ft_log, "per-step loss CSV (optional)");
    app->add_option("--out", ft_out, "checkpoint path")->required();
    verbs[3].action = [&](std::ostream& o, std::ostream& e) {
      ft.dataset = ft_data;
      const Checkpoint init = load_checkpoint(ft_init);
      const WindowSet all = load_labeled(ft_data, ft.montage, ft_seconds);
      ModelConfig mc = checkpoint_model_config(init);
      mc.classes = all.class_count();
      WindowSet train = all, test;
      if (ft_test > 0) {
        SubjectSplit split = split_by_subject(all, ft_test, Rng(ft.seed, "split"));
        train = std::move(split.train);
        test = std::move(split.test);
      }
      o << "train_windows=" << train.size() << " test_windows=" << test.size()
        << " channels=" << all.montage.channels() << "\n";
      TrainResult r = finetune(ft, mc, init, train, make_hooks(e, nullptr));
      print_epochs(o, r.log);
      if (test.size() > 0) print_metrics(o, "test: ", evaluate(r.model, test));
      save_checkpoint(r.checkpoint(), ft_out);
      if (!ft_log.empty()) write_text(ft_log, step_log_csv(r.log));
      o << "parameters=" << r.model.parameter_count() << " head_parameters=" << r.model.head_parameter_count()
        << "\ncheckpoint=" << ft_out << "\n";
    };
  }

  // eval
  TrainConfig ev;
  ev.regime = "finetune";
  ev.epochs = 15;
  std::vector<std::uint64_t> ev_seeds{0, 1, 2};
  std::string ev_init, ev_data, ev_out;
  double ev_seconds = 5.0, ev_test = 0.25;
  {
    CLI::App* app = add_verb(root, "eval",
                             "Metrics over seeds: fine-tune a pre-trained checkpoint on held-out-subject splits, "
                             "or score a fine-tuned one",
                             verbs[4]);
    app->add_option("--init", ev_init, "pre-trained or fine-tuned checkpoint")->required();
    add_data_flags(app, ev_data, ev.montage, ev_seconds);
    add_finetune_flags(app, ev, ev_test);
    app->add_option("--seeds", ev_seeds, "seeds, one run each")->delimiter(',');
    app->add_option("--out", ev_out, "metrics CSV path")->required();
    verbs[4].action = [&](std::ostream& o, std::ostream& e) {
      ev.dataset = ev_data;
      const Checkpoint ckpt = load_checkpoint(ev_init);
      const WindowSet all = load_labeled(ev_data, ev.montage, ev_seconds);
      std::vector<MetricReport> runs;
      if (checkpoint_parts(ckpt).head) {
        Model model = restore_model(ckpt);
        runs.push_back(evaluate(model, all));
        print_metrics(o, "all windows: ", runs.back());
      } else {
        if (ev_seeds.empty()) throw UsageError("--seeds is empty");
        if (!(ev_test > 0)) throw UsageError("--test-fraction must be positive");
        ModelConfig mc = checkpoint_model_config(ckpt);
        mc.classes = all.class_count();
        for (std::uint64_t seed : ev_seeds) {
          TrainConfig c = ev;
          c.seed = seed;
          const SubjectSplit split = split_by_subject(all, ev_test, Rng(seed, "split"));
          TrainResult r = finetune(c, mc, ckpt, split.train, make_hooks(e, nullptr));
          runs.push_back(evaluate(r.model, split.test));
          print_metrics(o, "seed " + std::to_string(seed) + ": ", runs.back());
        }
      }
      const std::string csv = metrics_csv(summarize(runs));
      write_text(ev_out, csv);
      o << csv;
    };
  }

  // flops
  ModelConfig fl_model;
  std::string fl_sweep = "64:65536", fl_out;
  std::size_t fl_channels = 20;
  double fl_budget_gib = kDefaultMemoryBudget / (1024.0 * 1024 * 1024);
  std::uint64_t fl_seed = 0;
  {
    CLI::App* app = add_verb(root, "flops", "Analytic FLOPs and memory sweep, plus parameter counts", verbs[5]);
    app->add_option("--sweep", fl_sweep, "S range lo:hi, swept over powers of two");
    app->add_option("--channels", fl_channels, "channels C");
    app->add_option("--budget-gib", fl_budget_gib, "memory budget for the crossing column");
    add_model_flags(app, fl_model, true);
    app->add_option("--seed", fl_seed, "random seed (parameter init for counting)");
    app->add_option("--out", fl_out, "CSV path")->required();
    verbs[5].action = [&](std::ostream& o, std::ostream&) {
      const auto [lo, hi] = parse_sweep(fl_sweep);
      const auto sweep = log_sweep(lo, hi);
      if (sweep.empty()) throw UsageError("--sweep " + fl_sweep + " contains no power of two");
      const ArchSpec ssm = lumamba_spec(fl_model, fl_channels);
      const std::vector<ArchSpec> specs{ssm, attention_per_token_spec(ssm), attention_flattened_spec(ssm)};
      write_text(fl_out, scaling_sweep_csv(specs, sweep, fl_budget_gib * 1024.0 * 1024 * 1024));

      const Model classifier(fl_model, fl_seed, {.decoder = false, .head = true});
      const Model pretraining(fl_model, fl_seed, {.decoder = true, .head = false});
      o << "parameters.total=" << classifier.parameter_count() << "\n"
        << "parameters.head=" << classifier.head_parameter_count() << "\n"
        << "parameters.pretraining=" << pretraining.parameter_count() << "\n";
      for (const ArchSpec& s : specs) {
        o << "spec " << s.name << " (" << family_name(s.family) << "): parameters=" << s.parameters;
        if (sweep.size() >= 2) o << " loglog_slope=" << fixed(loglog_slope(s, sweep), 4);
        o << "\n";
      }
      o << "csv=" << fl_out << " rows=" << specs.size() * sweep.size() << "\n";
    };
  }

  std::vector<std::string> argv_store{"lumamba"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  Verb* chosen = nullptr;
  try {
    root.parse(static_cast<int>(argv.size()), argv.data());
    for (Verb& v : verbs)
      if (v.app->parsed()) chosen = &v;
    if (!chosen->config.empty()) apply_config_file(chosen->app, chosen->config);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return root.exit(e, out, err);
    err << "error: " << e.what() << "\n\n";
    const auto subs = root.get_subcommands();
    err << (subs.empty() ? root.help() : subs.front()->help());
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->app->help();
    return kExitUsage;
  }

  out << "# lumamba " << chosen->app->get_name() << "\n" << chosen->app->config_to_str(true, false);
  try {
    chosen->action(out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->app->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace lumamba::cli
