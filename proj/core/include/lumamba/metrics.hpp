#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lumamba {

// Mean per-class recall over classes present in `labels`.
double balanced_accuracy(std::span<const int> labels, std::span<const int> predicted);
// Probability that a random positive scores above a random negative, ties counting
// one half, from average ranks. Absent if either class is missing.
std::optional<double> auroc(std::span<const int> positive, std::span<const double> scores);
// Average precision: sum over distinct thresholds of (recall step) * precision.
std::optional<double> average_precision(std::span<const int> positive, std::span<const double> scores);

struct MetricReport {
  double balanced_accuracy = 0;
  std::optional<double> auroc;
  std::optional<double> aupr;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

// probabilities: N x K row-major. Binary tasks score class 1; more classes use
// the macro average of one-vs-rest curves.
MetricReport compute_metrics(std::span<const int> labels, std::span<const double> probabilities, std::size_t classes);

struct MetricSummary {
  std::string metric;
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation; 0 for one run
  std::vector<std::optional<double>> values;
};

// One row each for balanced accuracy, AUROC and AUPR over runs.
std::vector<MetricSummary> summarize(std::span<const MetricReport> runs);
// Header metric,mean,std,seed0,seed1,... with empty cells for absent values.
std::string metrics_csv(std::span<const MetricSummary> rows);

}  // namespace lumamba
