#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lumamba/array.hpp"
#include "lumamba/montage.hpp"
#include "lumamba/recording.hpp"
#include "lumamba/rng.hpp"

namespace lumamba {

// Windows of one montage, ready for training.
struct WindowSet {
  Montage montage;
  Array windows;                      // N x C x T
  std::vector<int> labels;            // one per window, or empty when unlabeled
  std::vector<std::string> subjects;  // one per window

  std::size_t size() const { return windows.empty() ? 0 : windows.dim(0); }
  bool labeled() const { return !labels.empty(); }
  WindowSet subset(std::span<const std::size_t> rows) const;
  // rows -> (n, C, T)
  Array gather(std::span<const std::size_t> rows) const;
  std::vector<std::string> subject_ids() const;  // sorted, unique
  std::size_t class_count() const;               // 1 + max label
};

// Cuts and z-scores windows from recordings that share one montage. Recordings
// not at 256 Hz are run through preprocess() first. Labels are kept only if every
// recording is labeled.
WindowSet make_window_set(std::span<const Recording> recordings, double seconds = 5.0);

// Reads every recording of a directory, keeping those with `channels` channels
// (0 keeps all; they must then share one montage).
WindowSet load_window_set(const std::filesystem::path& dir, std::size_t channels = 0, double seconds = 5.0);

struct SubjectSplit {
  WindowSet train;
  WindowSet test;
};

// Holds out round(test_fraction * subjects) subjects (at least one, never all).
SubjectSplit split_by_subject(const WindowSet& set, double test_fraction, const Rng& rng);

}  // namespace lumamba
