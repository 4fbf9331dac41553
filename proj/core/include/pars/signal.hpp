#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pars/rng.hpp"

namespace pars {

// A single-channel sampled signal.
struct Sequence {
  std::vector<double> samples;
  double sample_rate_hz = 0.0;
  std::string channel_id;

  int64_t length() const { return static_cast<int64_t>(samples.size()); }
  // Enforces T >= 1, positive rate, finite samples.
  void validate() const;
};

// A fixed-length multi-channel window, optionally labeled. Label 255 is the
// unlabeled sentinel (mirrors the on-disk store encoding).
inline constexpr int kUnlabeled = 255;

struct MultiChannelWindow {
  std::vector<Sequence> channels;  // all share length and sample rate
  int label = kUnlabeled;
  std::string subject_id;

  int64_t n_channels() const { return static_cast<int64_t>(channels.size()); }
  int64_t length() const { return channels.empty() ? 0 : channels.front().length(); }
  double sample_rate_hz() const { return channels.empty() ? 0.0 : channels.front().sample_rate_hz; }
  void validate() const;
};

// N patches of fixed size M cut from one source sequence, each with its start
// time in samples and a flag marking whether its positional embedding will be
// replaced by the learnable mask token.
struct PatchSet {
  std::vector<std::vector<double>> patches;  // N x M
  std::vector<int64_t> start_times;          // in samples
  std::vector<uint8_t> pe_masked;
  int64_t source_length = 0;

  int64_t n() const { return static_cast<int64_t>(patches.size()); }
  int64_t patch_len() const { return patches.empty() ? 0 : static_cast<int64_t>(patches.front().size()); }
  int64_t n_masked() const;
  std::vector<int64_t> masked_indices() const;  // in token order
};

// --- preprocessing ---------------------------------------------------------

// Linear-phase FIR bandpass (windowed sinc, Hamming), applied with group
// delay compensation so the output is time-aligned with the input. The tap
// count is chosen so the transition band is at most 0.3 Hz wide at the low
// edge (narrower when the band edges demand it), which puts low_hz/2 and
// min(1.5*high_hz, Nyquist) at least 20 dB down.
Sequence bandpass_filter(const Sequence& seq, double low_hz, double high_hz);

// Second-order IIR notch (Q = 30). Exact null at mains_hz, passband ripple
// under 1 dB outside +/-2 Hz of the notch.
Sequence notch_filter(const Sequence& seq, double mains_hz);

// Band-limited resampling via a normalized windowed-sinc kernel; the kernel
// cutoff drops below the source Nyquist when decimating (anti-alias).
// Output length = round(T * target_hz / sample_rate_hz).
Sequence resample(const Sequence& seq, double target_hz);

struct NormalizeResult {
  Sequence sequence;
  // Set when the input variance fell below the 1e-5 floor (flatline input);
  // the floor is used in place of the variance so the output stays finite.
  bool variance_floored = false;
};

// Per-sequence zero mean, unit variance (population convention).
NormalizeResult instance_normalize(const Sequence& seq);

// --- patch sampling --------------------------------------------------------

// n start times drawn independently and uniformly from [0, T-m] (overlap and
// duplicates permitted), then round(gamma_pos*n) patches chosen uniformly at
// random for PE masking. Deterministic given the generator state.
PatchSet sample_patches_random(const Sequence& seq, int64_t n, int64_t m,
                               double gamma_pos, Rng& rng);

// Start times 0, stride, 2*stride, ... while start + m <= T. No PE masking.
PatchSet sample_patches_fixed(const Sequence& seq, int64_t m, int64_t stride);

// Marks round(gamma_pos * N) patches, chosen uniformly without replacement,
// as PE-masked (used to re-mask fixed-grid patch sets during pretraining).
void assign_pe_mask(PatchSet& ps, double gamma_pos, Rng& rng);

// In-place random permutation of patch order (patches, start times and mask
// flags move together).
void shuffle_patches(PatchSet& ps, Rng& rng);

// Uniform random crop to len samples; identity when the sequence is already
// exactly len long.
Sequence random_crop(const Sequence& seq, int64_t len, Rng& rng);

// --- filter design internals, exposed for verification ---------------------

std::vector<double> design_bandpass_fir(double sample_rate_hz, double low_hz,
                                        double high_hz);

struct BiquadCoeffs {
  double b0, b1, b2, a1, a2;  // normalized so a0 = 1
};
BiquadCoeffs design_notch_biquad(double sample_rate_hz, double notch_hz,
                                 double q = 30.0);

}  // namespace pars
