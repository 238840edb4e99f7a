#include "lumamba/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "lumamba/keyvalue.hpp"
#include "lumamba/ops.hpp"

namespace lumamba {
namespace {

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T v{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || end != value.data() + value.size()) {
    throw std::invalid_argument("train config: bad value '" + std::string(value) + "' for " + std::string(key));
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

void warn(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.on_warning) {
    hooks.on_warning(msg);
  } else {
    std::cerr << "warning: " << msg << "\n";
  }
}

bool is_frozen(const TrainConfig& c, const std::string& name) {
  return std::any_of(c.frozen.begin(), c.frozen.end(), [&](const std::string& p) { return name.starts_with(p); });
}

void check_finite(std::size_t step, const char* component, double v) {
  if (!std::isfinite(v)) throw TrainingError(step, component);
}

std::map<std::string, std::string> train_echo(const TrainConfig& c, std::size_t steps) {
  std::map<std::string, std::string> echo;
  for (const auto& [k, v] : parse_key_values(c.describe())) echo["train." + k] = v;
  echo["train.completed_steps"] = std::to_string(steps);
  return echo;
}

// Runs the optimization loop. loss_fn(tape, rows, step) builds the loss on one batch.
template <class LossFn>
std::vector<StepLog> optimize(const TrainConfig& c, Model& model, AdamW& opt, std::size_t n, bool drop_last,
                              LossFn&& loss_fn, const TrainHooks& hooks) {
  const std::size_t per_epoch = drop_last ? n / c.batch_size : (n + c.batch_size - 1) / c.batch_size;
  if (per_epoch == 0) {
    throw std::invalid_argument("train: " + std::to_string(n) + " windows do not fill one batch of " +
                                std::to_string(c.batch_size));
  }
  std::size_t total = per_epoch * c.epochs;
  if (c.max_steps > 0) total = std::min(total, c.max_steps);
  auto all = model.params().all();
  std::vector<Parameter*> trainable;
  for (Parameter* p : all)
    if (!is_frozen(c, p->name)) trainable.push_back(p);

  const Rng data_order = Rng(c.seed, "run").stream("data");
  std::vector<StepLog> log;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs && step < total; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng r = data_order.stream(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
    for (std::size_t b = 0; b < per_epoch && step < total; ++b, ++step) {
      const std::size_t begin = b * c.batch_size, end = std::min(n, begin + c.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Tape tape;
      Var loss;
      LossReport report;
      try {
        std::tie(loss, report) = loss_fn(tape, rows, step);
      } catch (const std::runtime_error& e) {
        throw TrainingError(step, std::string("forward pass (") + e.what() + ")");
      }
      check_finite(step, "recon", report.recon);
      check_finite(step, "jepa_pred", report.jepa_pred);
      check_finite(step, "sigreg", report.sigreg);
      check_finite(step, "total", report.total);
      backward(tape, loss, all);
      const double norm = clip_grad_norm(trainable, c.clip_norm);
      check_finite(step, "gradient", norm);
      const double lr = cosine_lr(c.learning_rate, step, total, c.warmup_fraction);
      opt.step(trainable, lr);
      StepLog entry{step, epoch, report, lr, norm};
      if (hooks.on_step) hooks.on_step(entry);
      log.push_back(entry);
    }
  }
  return log;
}

}  // namespace

TrainingError::TrainingError(std::size_t step, std::string component)
    : std::runtime_error("non-finite " + component + " at step " + std::to_string(step)),
      step_(step),
      component_(std::move(component)) {}

void TrainConfig::validate() const {
  if (regime != "finetune") parse_regime(regime);
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (weight_decay < 0) throw std::invalid_argument("train config: weight_decay must be non-negative");
  if (lambda < 0) throw std::invalid_argument("train config: lambda must be non-negative");
  if (slices < 1) throw std::invalid_argument("train config: slices must be at least 1");
  if (!(clip_norm > 0)) throw std::invalid_argument("train config: clip_norm must be positive");
  if (warmup_fraction < 0 || warmup_fraction >= 1) throw std::invalid_argument("train config: warmup_fraction must lie in [0, 1)");
}

bool TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "regime") regime = value;
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "slices") slices = parse_number<std::size_t>(key, value);
  else if (key == "mask_ratio") mask_ratio = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "dataset") dataset = value;
  else if (key == "montage") montage = parse_number<std::size_t>(key, value);
  else if (key == "max_steps") max_steps = parse_number<std::size_t>(key, value);
  else if (key == "clip_norm") clip_norm = parse_number<double>(key, value);
  else if (key == "warmup_fraction") warmup_fraction = parse_number<double>(key, value);
  else if (key == "epoch_cap") epoch_cap = parse_number<std::size_t>(key, value);
  else if (key == "frozen") {
    frozen.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      if (auto part = rest.substr(0, comma); !part.empty()) frozen.emplace_back(part);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
  } else {
    return false;
  }
  return true;
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "regime = " << regime << "\nepochs = " << epochs << "\nbatch_size = " << batch_size
     << "\nlearning_rate = " << format_double(learning_rate) << "\nweight_decay = " << format_double(weight_decay)
     << "\nlambda = " << format_double(lambda) << "\nslices = " << slices
     << "\nmask_ratio = " << format_double(mask_ratio) << "\nseed = " << seed << "\ndataset = " << dataset
     << "\nmontage = " << montage << "\nmax_steps = " << max_steps << "\nclip_norm = " << format_double(clip_norm)
     << "\nwarmup_fraction = " << format_double(warmup_fraction) << "\nepoch_cap = " << epoch_cap
     << "\nfrozen = " << join(frozen) << "\n";
  return os.str();
}

TrainResult pretrain(const TrainConfig& config, const ModelConfig& model_config, const WindowSet& data,
                     const TrainHooks& hooks) {
  config.validate();
  if (config.regime == "finetune") throw std::invalid_argument("pretrain: regime must be recon, lejepa or mixed");
  TrainResult result{Model(model_config, config.seed), AdamW({.weight_decay = config.weight_decay}), {}, {}};
  SslConfig ssl;
  ssl.regime = parse_regime(config.regime);
  ssl.lambda = config.lambda;
  ssl.slices = config.slices;
  ssl.mask_ratio = config.mask_ratio;
  const Rng objective_rng = Rng(config.seed, "run").stream("ssl");
  Model& model = result.model;
  result.log = optimize(
      config, model, result.optimizer, data.size(), true,
      [&](Tape& tape, std::span<const std::size_t> rows, std::size_t step) {
        SslStep s = ssl_objective(tape, model, data.gather(rows), data.montage, ssl, objective_rng.stream(step));
        return std::pair{s.total, s.report};
      },
      hooks);
  result.echo = train_echo(config, result.log.size());
  return result;
}

TrainResult finetune(const TrainConfig& config, ModelConfig model_config, const Checkpoint& init, const WindowSet& train,
                     const TrainHooks& hooks) {
  config.validate();
  if (!train.labeled()) throw std::invalid_argument("finetune: dataset has no labels");
  if (config.epochs > config.epoch_cap) {
    warn(hooks, "finetune epochs " + std::to_string(config.epochs) + " exceed the cap of " +
                    std::to_string(config.epoch_cap) + "; continuing");
  }
  model_config.classes = std::max<std::size_t>(model_config.classes, train.class_count());
  TrainResult result{Model(model_config, config.seed, {.decoder = false, .head = true}),
                     AdamW({.weight_decay = config.weight_decay}), {}, {}};
  Model& model = result.model;

  std::ostringstream problems;
  bool bad = false;
  for (Parameter* p : model.params().all()) {
    if (p->name.starts_with("head.")) continue;
    const Array* a = init.find(p->name);
    if (a == nullptr) {
      problems << "\n  " << p->name << ": missing from checkpoint";
      bad = true;
    } else if (a->shape() != p->value.shape()) {
      problems << "\n  " << p->name << ": checkpoint " << shape_string(a->shape()) << " vs model "
               << shape_string(p->value.shape());
      bad = true;
    }
  }
  for (const auto& [name, a] : init.tensors) {
    if (name.starts_with("adam.") || name.starts_with("decoder.") || name.starts_with("head.") ||
        name == "encoder.mask_token") {
      continue;
    }
    if (model.params().find(name) == nullptr) {
      problems << "\n  " << name << ": not part of the model";
      bad = true;
    }
  }
  if (bad) throw std::invalid_argument("finetune: checkpoint incompatible with model dimensions:" + problems.str());
  for (Parameter* p : model.params().all())
    if (!p->name.starts_with("head.")) p->value = *init.find(p->name);

  result.log = optimize(
      config, model, result.optimizer, train.size(), false,
      [&](Tape& tape, std::span<const std::size_t> rows, std::size_t) {
        std::vector<int> labels;
        for (std::size_t r : rows) labels.push_back(train.labels[r]);
        auto enc = model.encode(tape, train.gather(rows), train.montage);
        Var loss = cross_entropy(model.classify(tape, enc.features), labels);
        LossReport report;
        report.total = loss.value()[0];
        return std::pair{loss, report};
      },
      hooks);
  result.echo = train_echo(config, result.log.size());
  return result;
}

std::vector<double> predict_proba(Model& model, const WindowSet& data, std::size_t batch_size) {
  const std::size_t k = model.config().classes;
  std::vector<double> out;
  out.reserve(data.size() * k);
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    rows.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + batch_size); ++i) rows.push_back(i);
    Tape tape;
    auto enc = model.encode(tape, data.gather(rows), data.montage);
    const Array& logits = model.classify(tape, enc.features).value();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Real* z = logits.data().data() + r * k;
      const double top = *std::max_element(z, z + k);
      double sum = 0;
      for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - top);
      for (std::size_t c = 0; c < k; ++c) out.push_back(std::exp(z[c] - top) / sum);
    }
  }
  return out;
}

MetricReport evaluate(Model& model, const WindowSet& data, std::size_t batch_size) {
  if (!data.labeled()) throw std::invalid_argument("evaluate: dataset has no labels");
  return compute_metrics(data.labels, predict_proba(model, data, batch_size), model.config().classes);
}

}  // namespace lumamba
