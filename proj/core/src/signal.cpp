#include "pars/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pars/error.hpp"

namespace pars {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

int64_t round_count(double x) { return std::llround(x); }

}  // namespace

void Sequence::validate() const {
  if (samples.empty()) throw InvalidInput("sequence: empty");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("sequence: sample rate must be positive");
  for (double v : samples)
    if (!std::isfinite(v)) throw InvalidInput("sequence: non-finite sample");
}

void MultiChannelWindow::validate() const {
  if (channels.empty()) throw InvalidInput("window: needs at least one channel");
  int64_t t = channels.front().length();
  double fs = channels.front().sample_rate_hz;
  for (const Sequence& c : channels) {
    c.validate();
    if (c.length() != t || c.sample_rate_hz != fs)
      throw InvalidInput("window: channels must share length and sample rate");
  }
}

int64_t PatchSet::n_masked() const {
  int64_t c = 0;
  for (uint8_t m : pe_masked) c += (m != 0);
  return c;
}

std::vector<int64_t> PatchSet::masked_indices() const {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < n(); ++i)
    if (pe_masked[static_cast<size_t>(i)]) idx.push_back(i);
  return idx;
}

// --- FIR bandpass -----------------------------------------------------------

std::vector<double> design_bandpass_fir(double fs, double low, double high) {
  double nyquist = fs / 2.0;
  if (!(0.0 < low && low < high && high < nyquist))
    throw InvalidInput("bandpass: need 0 < low < high < Nyquist");

  // Transition width: 0.3 Hz by default, narrowed when the low edge or the
  // gap to Nyquist would otherwise swallow the required stopband points.
  double width = std::min({0.3, low, 2.0 * (nyquist - high)});
  // Hamming window transition width ~= 3.3 / n_taps (normalized frequency).
  int64_t n_taps = static_cast<int64_t>(std::ceil(3.3 * fs / width));
  if (n_taps % 2 == 0) ++n_taps;  // odd length, type I linear phase

  std::vector<double> taps(static_cast<size_t>(n_taps));
  double center = static_cast<double>(n_taps - 1) / 2.0;
  for (int64_t i = 0; i < n_taps; ++i) {
    double t = static_cast<double>(i) - center;
    double ideal = (2.0 * high / fs) * sinc(2.0 * high * t / fs) -
                   (2.0 * low / fs) * sinc(2.0 * low * t / fs);
    double w = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                      static_cast<double>(n_taps - 1));
    taps[static_cast<size_t>(i)] = ideal * w;
  }
  return taps;
}

namespace {

// Zero-padded convolution with the output shifted by the filter's group
// delay, so y[t] lines up with x[t].
Sequence apply_fir_aligned(const Sequence& seq, const std::vector<double>& taps) {
  int64_t t_len = seq.length();
  int64_t n_taps = static_cast<int64_t>(taps.size());
  int64_t delay = (n_taps - 1) / 2;
  Sequence out;
  out.sample_rate_hz = seq.sample_rate_hz;
  out.channel_id = seq.channel_id;
  out.samples.assign(static_cast<size_t>(t_len), 0.0);
  for (int64_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    int64_t src_hi = t + delay;  // tap 0 multiplies x[t + delay]
    int64_t k_lo = std::max<int64_t>(0, src_hi - (t_len - 1));
    int64_t k_hi = std::min<int64_t>(n_taps - 1, src_hi);
    for (int64_t k = k_lo; k <= k_hi; ++k)
      acc += taps[static_cast<size_t>(k)] * seq.samples[static_cast<size_t>(src_hi - k)];
    out.samples[static_cast<size_t>(t)] = acc;
  }
  return out;
}

}  // namespace

Sequence bandpass_filter(const Sequence& seq, double low_hz, double high_hz) {
  seq.validate();
  std::vector<double> taps = design_bandpass_fir(seq.sample_rate_hz, low_hz, high_hz);
  return apply_fir_aligned(seq, taps);
}

// --- IIR notch ---------------------------------------------------------------

BiquadCoeffs design_notch_biquad(double fs, double f0, double q) {
  if (!(0.0 < f0 && f0 < fs / 2.0))
    throw InvalidInput("notch: frequency must lie below Nyquist");
  double w0 = 2.0 * kPi * f0 / fs;
  double alpha = std::sin(w0) / (2.0 * q);
  double a0 = 1.0 + alpha;
  BiquadCoeffs c{};
  c.b0 = 1.0 / a0;
  c.b1 = -2.0 * std::cos(w0) / a0;
  c.b2 = 1.0 / a0;
  c.a1 = -2.0 * std::cos(w0) / a0;
  c.a2 = (1.0 - alpha) / a0;
  return c;
}

Sequence notch_filter(const Sequence& seq, double mains_hz) {
  seq.validate();
  BiquadCoeffs c = design_notch_biquad(seq.sample_rate_hz, mains_hz);
  Sequence out;
  out.sample_rate_hz = seq.sample_rate_hz;
  out.channel_id = seq.channel_id;
  out.samples.resize(seq.samples.size());
  // Direct form II transposed, zero initial state.
  double s1 = 0.0, s2 = 0.0;
  for (size_t i = 0; i < seq.samples.size(); ++i) {
    double x = seq.samples[i];
    double y = c.b0 * x + s1;
    s1 = c.b1 * x - c.a1 * y + s2;
    s2 = c.b2 * x - c.a2 * y;
    out.samples[i] = y;
  }
  return out;
}

// --- resampling --------------------------------------------------------------

Sequence resample(const Sequence& seq, double target_hz) {
  seq.validate();
  if (!(target_hz > 0.0)) throw InvalidInput("resample: target rate must be positive");
  double src_hz = seq.sample_rate_hz;
  int64_t t_in = seq.length();
  int64_t t_out = round_count(static_cast<double>(t_in) * target_hz / src_hz);

  Sequence out;
  out.sample_rate_hz = target_hz;
  out.channel_id = seq.channel_id;
  if (target_hz == src_hz) {
    out.samples = seq.samples;
    return out;
  }
  out.samples.assign(static_cast<size_t>(t_out), 0.0);

  double ratio = target_hz / src_hz;
  double scale = std::min(1.0, ratio);  // kernel cutoff, cycles per input sample * 2
  int64_t half = static_cast<int64_t>(std::ceil(32.0 / scale));
  for (int64_t n = 0; n < t_out; ++n) {
    double t = static_cast<double>(n) / ratio;  // position in input samples
    int64_t k_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(t)) - half);
    int64_t k_hi = std::min<int64_t>(t_in - 1, static_cast<int64_t>(std::floor(t)) + half);
    double acc = 0.0, norm = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k) {
      double x = static_cast<double>(k) - t;
      double w = 0.5 * (1.0 + std::cos(kPi * x * scale / 32.0));  // Hann over the kernel span
      double v = scale * sinc(scale * x) * w;
      acc += v * seq.samples[static_cast<size_t>(k)];
      norm += v;
    }
    // Kernel-sum normalization keeps a constant signal constant at the edges.
    out.samples[static_cast<size_t>(n)] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

// --- normalization -----------------------------------------------------------

NormalizeResult instance_normalize(const Sequence& seq) {
  seq.validate();
  int64_t t_len = seq.length();
  if (t_len < 2) throw InvalidInput("instance_normalize: needs at least 2 samples");
  double mean = 0.0;
  for (double v : seq.samples) mean += v;
  mean /= static_cast<double>(t_len);
  double var = 0.0;
  for (double v : seq.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(t_len);

  constexpr double kVarianceFloor = 1e-5;
  NormalizeResult res;
  res.variance_floored = var < kVarianceFloor;
  double inv_std = 1.0 / std::sqrt(std::max(var, kVarianceFloor));
  res.sequence.sample_rate_hz = seq.sample_rate_hz;
  res.sequence.channel_id = seq.channel_id;
  res.sequence.samples.resize(seq.samples.size());
  for (size_t i = 0; i < seq.samples.size(); ++i)
    res.sequence.samples[i] = (seq.samples[i] - mean) * inv_std;
  return res;
}

// --- patch sampling ----------------------------------------------------------

namespace {

void copy_patch(const Sequence& seq, int64_t start, int64_t m,
                std::vector<double>& dst) {
  dst.assign(seq.samples.begin() + start, seq.samples.begin() + start + m);
}

}  // namespace

PatchSet sample_patches_random(const Sequence& seq, int64_t n, int64_t m,
                               double gamma_pos, Rng& rng) {
  seq.validate();
  if (m > seq.length()) throw InvalidInput("sample_patches_random: patch longer than sequence");
  if (m < 1 || n < 1) throw InvalidInput("sample_patches_random: n and m must be positive");
  if (gamma_pos < 0.0 || gamma_pos > 1.0)
    throw InvalidInput("sample_patches_random: gamma_pos outside [0, 1]");

  PatchSet ps;
  ps.source_length = seq.length();
  ps.patches.resize(static_cast<size_t>(n));
  ps.start_times.resize(static_cast<size_t>(n));
  ps.pe_masked.assign(static_cast<size_t>(n), 0);
  int64_t max_start = seq.length() - m;
  for (int64_t i = 0; i < n; ++i) {
    int64_t s = rng.uniform_int(0, max_start);
    ps.start_times[static_cast<size_t>(i)] = s;
    copy_patch(seq, s, m, ps.patches[static_cast<size_t>(i)]);
  }
  assign_pe_mask(ps, gamma_pos, rng);
  return ps;
}

PatchSet sample_patches_fixed(const Sequence& seq, int64_t m, int64_t stride) {
  seq.validate();
  if (m > seq.length()) throw InvalidInput("sample_patches_fixed: patch longer than sequence");
  if (m < 1 || stride < 1) throw InvalidInput("sample_patches_fixed: m and stride must be positive");

  PatchSet ps;
  ps.source_length = seq.length();
  for (int64_t start = 0; start + m <= seq.length(); start += stride) {
    ps.start_times.push_back(start);
    ps.patches.emplace_back();
    copy_patch(seq, start, m, ps.patches.back());
  }
  ps.pe_masked.assign(ps.patches.size(), 0);
  return ps;
}

void assign_pe_mask(PatchSet& ps, double gamma_pos, Rng& rng) {
  if (gamma_pos < 0.0 || gamma_pos > 1.0)
    throw InvalidInput("assign_pe_mask: gamma_pos outside [0, 1]");
  std::fill(ps.pe_masked.begin(), ps.pe_masked.end(), 0);
  int64_t n_m = round_count(gamma_pos * static_cast<double>(ps.n()));
  for (int64_t i : rng.sample_without_replacement(ps.n(), n_m))
    ps.pe_masked[static_cast<size_t>(i)] = 1;
}

void shuffle_patches(PatchSet& ps, Rng& rng) {
  std::vector<int64_t> perm(static_cast<size_t>(ps.n()));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int64_t>(i);
  rng.shuffle(perm);
  PatchSet tmp;
  tmp.source_length = ps.source_length;
  tmp.patches.resize(perm.size());
  tmp.start_times.resize(perm.size());
  tmp.pe_masked.resize(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    size_t j = static_cast<size_t>(perm[i]);
    tmp.patches[i] = std::move(ps.patches[j]);
    tmp.start_times[i] = ps.start_times[j];
    tmp.pe_masked[i] = ps.pe_masked[j];
  }
  ps = std::move(tmp);
}

Sequence random_crop(const Sequence& seq, int64_t len, Rng& rng) {
  seq.validate();
  if (len > seq.length()) throw InvalidInput("random_crop: crop longer than sequence");
  if (len == seq.length()) return seq;
  int64_t start = rng.uniform_int(0, seq.length() - len);
  Sequence out;
  out.sample_rate_hz = seq.sample_rate_hz;
  out.channel_id = seq.channel_id;
  out.samples.assign(seq.samples.begin() + start, seq.samples.begin() + start + len);
  return out;
}

}  // namespace pars
