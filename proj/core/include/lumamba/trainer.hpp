#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lumamba/checkpoint.hpp"
#include "lumamba/dataset.hpp"
#include "lumamba/metrics.hpp"
#include "lumamba/model.hpp"
#include "lumamba/optim.hpp"
#include "lumamba/ssl.hpp"

namespace lumamba {

struct TrainConfig {
  std::string regime = "mixed";  // recon | lejepa | mixed | finetune
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double lambda = 0.5;
  std::size_t slices = 60;
  double mask_ratio = 0.6;
  std::uint64_t seed = 0;
  std::string dataset;
  std::size_t montage = 0;  // keep recordings with this many channels; 0 keeps all
  std::size_t max_steps = 0;  // 0: epochs * batches per epoch
  double clip_norm = 1.0;
  double warmup_fraction = 0.05;
  std::size_t epoch_cap = 30;  // fine-tuning beyond this warns
  std::vector<std::string> frozen;  // parameter name prefixes left untouched by the optimizer

  // Throws std::invalid_argument for inconsistent values.
  void validate() const;
  // Assigns one field by its describe() name; returns false for unknown keys.
  bool set(std::string_view key, std::string_view value);
  std::string describe() const;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossReport loss;  // fine-tuning reports cross-entropy as total
  double lr = 0;
  double grad_norm = 0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const std::string&)> on_warning;  // defaults to stderr
};

// Raised when a loss component or the gradient stops being finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, std::string component);
  std::size_t step() const { return step_; }
  const std::string& component() const { return component_; }

 private:
  std::size_t step_;
  std::string component_;
};

struct TrainResult {
  Model model;
  AdamW optimizer;
  std::vector<StepLog> log;
  std::map<std::string, std::string> echo;  // training config and counters
  Checkpoint checkpoint() const { return capture(model, &optimizer, echo); }
};

// Self-supervised pre-training of a fresh model with decoder.
TrainResult pretrain(const TrainConfig& config, const ModelConfig& model_config, const WindowSet& data,
                     const TrainHooks& hooks = {});

// Drops the decoder and mask token of `init`, attaches a fresh classifier head and
// trains everything else with cross-entropy. model_config gives the expected
// dimensions; incompatible checkpoints are rejected with the offending tensors.
TrainResult finetune(const TrainConfig& config, ModelConfig model_config, const Checkpoint& init, const WindowSet& train,
                     const TrainHooks& hooks = {});

// Class probabilities, N x K row-major.
std::vector<double> predict_proba(Model& model, const WindowSet& data, std::size_t batch_size = 16);
MetricReport evaluate(Model& model, const WindowSet& data, std::size_t batch_size = 16);

}  // namespace lumamba
