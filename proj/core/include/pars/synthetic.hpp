#pragma once

#include <cstdint>

#include "pars/rng.hpp"
#include "pars/window_store.hpp"

namespace pars {

// Unlabeled pretraining corpus: each channel holds a linear sine chirp whose
// endpoint frequencies are drawn from [1, 40] Hz, plus white noise at roughly
// 10 dB SNR. The instantaneous frequency moves monotonically through the
// window, so temporal order is recoverable from content and pretext tasks
// built on position have signal to learn from.
struct ChirpConfig {
  int64_t count = 256;
  int64_t window_len = 3000;
  double sample_rate_hz = 500.0;
  int64_t n_channels = 1;
  int64_t n_subjects = 8;
  double snr_db = 10.0;
  double min_hz = 1.0;
  double max_hz = 40.0;

  void validate() const;
};

WindowStore gen_chirp_corpus(const ChirpConfig& cfg, uint64_t seed);

// Labeled corpus with two stacked class cues: narrow-band activity centered
// at a class-specific frequency, and short high-frequency bursts arriving at
// a class-specific rate. All channels share the class signal and differ by
// independent noise. Labels are balanced and subjects are rotated so every
// subject carries every class.
struct ClassCorpusConfig {
  int n_classes = 3;
  int64_t count_per_class = 40;
  int64_t window_len = 1000;
  double sample_rate_hz = 100.0;
  int64_t n_channels = 2;
  int64_t n_subjects = 12;
  double noise_std = 0.5;

  void validate() const;
};

WindowStore gen_classification_corpus(const ClassCorpusConfig& cfg, uint64_t seed);

// Class band layout, exposed so bandpower baselines can be built against the
// generator: class k occupies [center - width/2, center + width/2].
double class_band_center_hz(int k);
double class_band_width_hz();

// Mean squared magnitude of the DFT bins falling inside [low_hz, high_hz],
// normalized by window length. The simple feature that should separate the
// classification corpus nearly perfectly.
double bandpower(const Sequence& seq, double low_hz, double high_hz);

// argmax over per-class bandpower in the class bands, averaged across
// channels. Reference classifier for corpus sanity checks.
int bandpower_classify(const MultiChannelWindow& w, int n_classes);

}  // namespace pars
