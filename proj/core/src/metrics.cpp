#include "lumamba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lumamba {
namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("metrics: " + std::to_string(a) + " labels vs " + std::to_string(b) + " scores");
  if (a == 0) throw std::invalid_argument("metrics: empty input");
}

// Indices sorted by descending score.
std::vector<std::size_t> by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::optional<double> macro(const std::vector<std::optional<double>>& v) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(6);
  os << *v;
  return os.str();
}

}  // namespace

double balanced_accuracy(std::span<const int> labels, std::span<const int> predicted) {
  check_sizes(labels.size(), predicted.size());
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> hit(k, 0.0), count(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    count[labels[i]] += 1;
    if (predicted[i] == labels[i]) hit[labels[i]] += 1;
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    sum += hit[c] / count[c];
    ++present;
  }
  return sum / present;
}

std::optional<double> auroc(std::span<const int> positive, std::span<const double> scores) {
  check_sizes(positive.size(), scores.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (positive[i]) {
      pos += 1;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

std::optional<double> average_precision(std::span<const int> positive, std::span<const double> scores) {
  check_sizes(positive.size(), scores.size());
  const double total_pos = static_cast<double>(std::count_if(positive.begin(), positive.end(), [](int v) { return v != 0; }));
  if (total_pos == 0 || total_pos == static_cast<double>(positive.size())) return std::nullopt;
  const auto order = by_score(scores);
  double tp = 0, fp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    // Tied scores share one threshold.
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricReport compute_metrics(std::span<const int> labels, std::span<const double> probabilities, std::size_t classes) {
  if (classes < 2) throw std::invalid_argument("metrics: need at least two classes");
  check_sizes(labels.size() * classes, probabilities.size());
  const std::size_t n = labels.size();
  MetricReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::vector<int> predicted(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument("metrics: label " + std::to_string(labels[i]) + " out of range");
    }
    const double* row = probabilities.data() + i * classes;
    predicted[i] = static_cast<int>(std::max_element(row, row + classes) - row);
    ++r.confusion[labels[i]][predicted[i]];
  }
  r.balanced_accuracy = balanced_accuracy(labels, predicted);
  std::vector<std::optional<double>> rocs, prs;
  for (std::size_t c = (classes == 2 ? 1 : 0); c < classes; ++c) {
    std::vector<int> pos(n);
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = labels[i] == static_cast<int>(c);
      score[i] = probabilities[i * classes + c];
    }
    rocs.push_back(auroc(pos, score));
    prs.push_back(average_precision(pos, score));
  }
  r.auroc = macro(rocs);
  r.aupr = macro(prs);
  return r;
}

std::vector<MetricSummary> summarize(std::span<const MetricReport> runs) {
  std::vector<MetricSummary> rows{{"balanced_accuracy", {}, {}, {}}, {"auroc", {}, {}, {}}, {"aupr", {}, {}, {}}};
  for (const MetricReport& r : runs) {
    rows[0].values.emplace_back(r.balanced_accuracy);
    rows[1].values.push_back(r.auroc);
    rows[2].values.push_back(r.aupr);
  }
  for (MetricSummary& row : rows) {
    std::vector<double> v;
    for (const auto& x : row.values)
      if (x) v.push_back(*x);
    if (v.empty()) continue;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    row.mean = mean;
    row.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return rows;
}

std::string metrics_csv(std::span<const MetricSummary> rows) {
  std::size_t runs = 0;
  for (const auto& r : rows) runs = std::max(runs, r.values.size());
  std::ostringstream os;
  os << "metric,mean,std";
  for (std::size_t i = 0; i < runs; ++i) os << ",seed" << i;
  os << "\n";
  for (const auto& r : rows) {
    os << r.metric << "," << cell(r.mean) << "," << cell(r.std);
    for (std::size_t i = 0; i < runs; ++i) os << "," << (i < r.values.size() ? cell(r.values[i]) : "");
    os << "\n";
  }
  return os.str();
}

}  // namespace lumamba
