#include "lumamba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lumamba/preprocess.hpp"

namespace lumamba {

WindowSet WindowSet::subset(std::span<const std::size_t> rows) const {
  WindowSet out;
  out.montage = montage;
  out.windows = gather(rows);
  for (std::size_t r : rows) {
    if (labeled()) out.labels.push_back(labels[r]);
    out.subjects.push_back(subjects[r]);
  }
  return out;
}

Array WindowSet::gather(std::span<const std::size_t> rows) const {
  const std::size_t c = windows.dim(1), t = windows.dim(2), stride = c * t;
  Array out(Shape{rows.size(), c, t});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw std::out_of_range("WindowSet: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(windows.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::vector<std::string> WindowSet::subject_ids() const {
  std::set<std::string> ids(subjects.begin(), subjects.end());
  return {ids.begin(), ids.end()};
}

std::size_t WindowSet::class_count() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

WindowSet make_window_set(std::span<const Recording> recordings, double seconds) {
  if (recordings.empty()) throw std::invalid_argument("dataset: no recordings");
  WindowSet set;
  set.montage = recordings.front().montage;
  const bool labeled = std::all_of(recordings.begin(), recordings.end(), [](const Recording& r) { return r.label.has_value(); });
  std::vector<WindowBatch> batches;
  std::size_t total = 0;
  for (const Recording& rec : recordings) {
    if (!(rec.montage == set.montage)) {
      throw std::invalid_argument("dataset: recordings use different montages (" + std::to_string(rec.channels()) +
                                  " vs " + std::to_string(set.montage.channels()) + " channels)");
    }
    batches.push_back(rec.fs == kTargetRate ? make_windows(rec, seconds) : make_windows(preprocess(rec), seconds));
    total += batches.back().count();
  }
  if (total == 0) throw std::invalid_argument("dataset: recordings are shorter than one window");
  const std::size_t c = set.montage.channels(), tw = window_samples(seconds);
  set.windows = Array(Shape{total, c, tw});
  std::size_t at = 0;
  for (const WindowBatch& b : batches) {
    if (b.count() == 0) continue;
    std::copy(b.windows.data().begin(), b.windows.data().end(), set.windows.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += b.windows.size();
    for (std::size_t i = 0; i < b.count(); ++i) {
      set.subjects.push_back(b.subject);
      if (labeled) set.labels.push_back(b.labels[i]);
    }
  }
  zscore_windows(set.windows);
  return set;
}

WindowSet load_window_set(const std::filesystem::path& dir, std::size_t channels, double seconds) {
  std::vector<Recording> recs;
  for (const auto& path : list_recordings(dir)) {
    Recording rec = read_recording(path);
    if (channels == 0 || rec.channels() == channels) recs.push_back(std::move(rec));
  }
  if (recs.empty()) {
    throw std::invalid_argument("dataset: no recordings" +
                                (channels ? " with " + std::to_string(channels) + " channels" : std::string()) + " in " +
                                dir.string());
  }
  return make_window_set(recs, seconds);
}

SubjectSplit split_by_subject(const WindowSet& set, double test_fraction, const Rng& rng) {
  std::vector<std::string> ids = set.subject_ids();
  if (ids.size() < 2) throw std::invalid_argument("split: need at least two subjects");
  Rng r = rng;
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[r.below(i)]);
  auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
  const std::set<std::string> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < set.size(); ++i) (held.count(set.subjects[i]) ? test : train).push_back(i);
  return {set.subset(train), set.subset(test)};
}

}  // namespace lumamba
