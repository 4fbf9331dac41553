#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pars/signal.hpp"

namespace pars {

// A homogeneous collection of fixed-length multi-channel windows, the unit of
// dataset persistence. Samples are stored as little-endian float32 on disk;
// label byte 255 marks an unlabeled window; subject ids are at most 31 bytes.
struct WindowStore {
  int64_t n_channels = 1;
  int64_t window_len = 0;
  double sample_rate_hz = 0.0;
  int n_classes = 0;  // 0 for unlabeled corpora
  std::vector<MultiChannelWindow> windows;

  void validate() const;
};

void write_store(const std::string& path, const WindowStore& store);
WindowStore read_store(const std::string& path);

// Subject-level split assignment. Window-level splitting is deliberately not
// offered: evaluation must always be on held-out subjects.
struct SplitManifest {
  std::vector<std::string> train, val, test;
};

// Deterministic subject partition: shuffle the sorted unique subject list,
// give each split floor(fraction * n) subjects, hand remainders to the
// largest fractions. fractions has 1 to 3 entries (train, val, test order)
// and must sum to 1.
SplitManifest split_by_subject(const std::vector<std::string>& subjects,
                               const std::vector<double>& fractions, uint64_t seed);

// Replace the train set by a uniform subset of n subjects; val and test are
// untouched. Prefix-of-permutation construction, so under one seed the
// subsets are nested as n grows.
SplitManifest subsample_subjects(const SplitManifest& manifest, int64_t n, uint64_t seed);

void write_split(const std::string& path, const SplitManifest& manifest);
SplitManifest read_split(const std::string& path);

// Unique subject ids in order of first appearance.
std::vector<std::string> subjects_of(const WindowStore& store);

std::vector<const MultiChannelWindow*> windows_for_subjects(
    const WindowStore& store, const std::vector<std::string>& subjects);

}  // namespace pars
