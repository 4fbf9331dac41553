#include "pars/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pars/error.hpp"

namespace pars {

namespace {

std::string subject_name(int64_t idx) {
  std::string n = std::to_string(idx);
  return "s" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

constexpr double kBurstCarrierHz = 45.0;
constexpr double kBurstWidthSec = 0.05;

}  // namespace

void ChirpConfig::validate() const {
  if (count < 1) throw InvalidInput("chirp corpus: count must be >= 1");
  if (window_len < 2) throw InvalidInput("chirp corpus: window_len must be >= 2");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("chirp corpus: sample rate must be positive");
  if (n_channels < 1) throw InvalidInput("chirp corpus: n_channels must be >= 1");
  if (n_subjects < 1) throw InvalidInput("chirp corpus: n_subjects must be >= 1");
  if (!(min_hz > 0.0) || !(max_hz > min_hz))
    throw InvalidInput("chirp corpus: need 0 < min_hz < max_hz");
  if (max_hz >= sample_rate_hz / 2.0)
    throw InvalidInput("chirp corpus: max_hz must stay below Nyquist");
}

WindowStore gen_chirp_corpus(const ChirpConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  double signal_power = 0.5;  // sine of unit amplitude
  double noise_std = std::sqrt(signal_power / std::pow(10.0, cfg.snr_db / 10.0));
  double t_total = static_cast<double>(cfg.window_len) / cfg.sample_rate_hz;

  WindowStore store;
  store.n_channels = cfg.n_channels;
  store.window_len = cfg.window_len;
  store.sample_rate_hz = cfg.sample_rate_hz;
  store.n_classes = 0;
  store.windows.reserve(static_cast<size_t>(cfg.count));

  for (int64_t w = 0; w < cfg.count; ++w) {
    MultiChannelWindow win;
    win.subject_id = subject_name(w % cfg.n_subjects);
    win.channels.resize(static_cast<size_t>(cfg.n_channels));
    for (Sequence& ch : win.channels) {
      double f0 = rng.uniform_real(cfg.min_hz, cfg.max_hz);
      double f1 = rng.uniform_real(cfg.min_hz, cfg.max_hz);
      double phase0 = rng.uniform_real(0.0, 2.0 * std::numbers::pi);
      ch.sample_rate_hz = cfg.sample_rate_hz;
      ch.samples.resize(static_cast<size_t>(cfg.window_len));
      for (int64_t i = 0; i < cfg.window_len; ++i) {
        double t = static_cast<double>(i) / cfg.sample_rate_hz;
        // Linear sweep f0 -> f1; phase is the integral of the instantaneous
        // frequency.
        double phase = 2.0 * std::numbers::pi *
                       (f0 * t + (f1 - f0) * t * t / (2.0 * t_total));
        ch.samples[static_cast<size_t>(i)] =
            std::sin(phase + phase0) + noise_std * rng.normal();
      }
    }
    store.windows.push_back(std::move(win));
  }
  return store;
}

double class_band_center_hz(int k) { return 6.0 + 10.0 * static_cast<double>(k); }
double class_band_width_hz() { return 4.0; }

void ClassCorpusConfig::validate() const {
  if (n_classes < 2 || n_classes > 254)
    throw InvalidInput("class corpus: n_classes must be in [2, 254]");
  if (count_per_class < 1) throw InvalidInput("class corpus: count_per_class must be >= 1");
  if (window_len < 16) throw InvalidInput("class corpus: window_len must be >= 16");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("class corpus: sample rate must be positive");
  if (n_channels < 1) throw InvalidInput("class corpus: n_channels must be >= 1");
  if (n_subjects < 1) throw InvalidInput("class corpus: n_subjects must be >= 1");
  if (!(noise_std >= 0.0)) throw InvalidInput("class corpus: noise_std must be >= 0");
  double top = class_band_center_hz(n_classes - 1) + class_band_width_hz() / 2.0;
  if (top >= sample_rate_hz / 2.0)
    throw InvalidInput("class corpus: highest class band exceeds Nyquist; raise the sample rate");
}

WindowStore gen_classification_corpus(const ClassCorpusConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  WindowStore store;
  store.n_channels = cfg.n_channels;
  store.window_len = cfg.window_len;
  store.sample_rate_hz = cfg.sample_rate_hz;
  store.n_classes = cfg.n_classes;
  store.windows.reserve(static_cast<size_t>(cfg.count_per_class * cfg.n_classes));

  double t_total = static_cast<double>(cfg.window_len) / cfg.sample_rate_hz;
  constexpr int kTones = 8;

  for (int64_t i = 0; i < cfg.count_per_class; ++i) {
    for (int k = 0; k < cfg.n_classes; ++k) {
      // Narrow-band activity in the class band: a sum of random tones, power
      // 1/2 in total.
      std::vector<double> tone_hz(kTones), tone_phase(kTones);
      double lo = class_band_center_hz(k) - class_band_width_hz() / 2.0;
      double hi = class_band_center_hz(k) + class_band_width_hz() / 2.0;
      for (int j = 0; j < kTones; ++j) {
        tone_hz[static_cast<size_t>(j)] = rng.uniform_real(lo, hi);
        tone_phase[static_cast<size_t>(j)] = rng.uniform_real(0.0, 2.0 * std::numbers::pi);
      }
      double tone_amp = 1.0 / std::sqrt(static_cast<double>(kTones));

      // Short bursts at a class-specific rate; the carrier is shared so the
      // rate (not the burst spectrum) is what separates classes.
      int n_bursts = 1 + 2 * k;
      std::vector<double> burst_at(static_cast<size_t>(n_bursts));
      for (double& b : burst_at) b = rng.uniform_real(0.1 * t_total, 0.9 * t_total);

      std::vector<double> shared(static_cast<size_t>(cfg.window_len));
      for (int64_t s = 0; s < cfg.window_len; ++s) {
        double t = static_cast<double>(s) / cfg.sample_rate_hz;
        double v = 0.0;
        for (int j = 0; j < kTones; ++j)
          v += tone_amp * std::sin(2.0 * std::numbers::pi * tone_hz[static_cast<size_t>(j)] * t +
                                   tone_phase[static_cast<size_t>(j)]);
        for (double b : burst_at) {
          double d = (t - b) / kBurstWidthSec;
          v += std::exp(-0.5 * d * d) *
               std::sin(2.0 * std::numbers::pi * kBurstCarrierHz * (t - b));
        }
        shared[static_cast<size_t>(s)] = v;
      }

      MultiChannelWindow win;
      win.label = k;
      // Rotate the (example, class) grid over subjects so every subject
      // carries every class even when n_subjects is a multiple of n_classes.
      win.subject_id = subject_name((i + k) % cfg.n_subjects);
      win.channels.resize(static_cast<size_t>(cfg.n_channels));
      for (Sequence& ch : win.channels) {
        ch.sample_rate_hz = cfg.sample_rate_hz;
        ch.samples.resize(static_cast<size_t>(cfg.window_len));
        for (int64_t s = 0; s < cfg.window_len; ++s)
          ch.samples[static_cast<size_t>(s)] =
              shared[static_cast<size_t>(s)] + cfg.noise_std * rng.normal();
      }
      store.windows.push_back(std::move(win));
    }
  }
  return store;
}

double bandpower(const Sequence& seq, double low_hz, double high_hz) {
  if (!(low_hz >= 0.0) || !(high_hz > low_hz))
    throw InvalidInput("bandpower: need 0 <= low_hz < high_hz");
  int64_t t_len = seq.length();
  if (t_len < 2) throw InvalidInput("bandpower: sequence too short");
  double bin_hz = seq.sample_rate_hz / static_cast<double>(t_len);
  int64_t b_lo = static_cast<int64_t>(std::ceil(low_hz / bin_hz));
  int64_t b_hi = static_cast<int64_t>(std::floor(high_hz / bin_hz));
  b_hi = std::min(b_hi, t_len / 2);
  if (b_lo > b_hi) return 0.0;

  double acc = 0.0;
  for (int64_t b = b_lo; b <= b_hi; ++b) {
    double re = 0.0, im = 0.0;
    double w = 2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(t_len);
    for (int64_t s = 0; s < t_len; ++s) {
      double x = seq.samples[static_cast<size_t>(s)];
      re += x * std::cos(w * static_cast<double>(s));
      im -= x * std::sin(w * static_cast<double>(s));
    }
    acc += (re * re + im * im) / (static_cast<double>(t_len) * static_cast<double>(t_len));
  }
  return acc / static_cast<double>(b_hi - b_lo + 1);
}

int bandpower_classify(const MultiChannelWindow& w, int n_classes) {
  if (n_classes < 2) throw InvalidInput("bandpower_classify: need >= 2 classes");
  int best = 0;
  double best_power = -1.0;
  for (int k = 0; k < n_classes; ++k) {
    double lo = class_band_center_hz(k) - class_band_width_hz() / 2.0;
    double hi = class_band_center_hz(k) + class_band_width_hz() / 2.0;
    double p = 0.0;
    for (const Sequence& ch : w.channels) p += bandpower(ch, lo, hi);
    p /= static_cast<double>(w.n_channels());
    if (p > best_power) {
      best_power = p;
      best = k;
    }
  }
  return best;
}

}  // namespace pars
