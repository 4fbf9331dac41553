#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "pars/error.hpp"
#include "pars/signal.hpp"

using namespace pars;
using testutil::fir_response;
using testutil::make_seq;
using testutil::noise_seq;
using testutil::pearson;
using testutil::rms;
using testutil::sine_seq;

namespace {

// |H(hz)| of a biquad section, evaluated on the unit circle.
double biquad_response(const BiquadCoeffs& c, double hz, double rate_hz) {
  std::complex<double> z = std::polar(1.0, -2.0 * M_PI * hz / rate_hz);
  std::complex<double> num = c.b0 + c.b1 * z + c.b2 * z * z;
  std::complex<double> den = 1.0 + c.a1 * z + c.a2 * z * z;
  return std::abs(num / den);
}

}  // namespace

TEST_CASE("bandpass passes the band and rejects signals outside it") {
  const double fs = 200.0;
  const int64_t t_len = 6000;
  auto taps = design_bandpass_fir(fs, 0.3, 75.0);
  const size_t delay = (taps.size() - 1) / 2;
  REQUIRE(t_len > static_cast<int64_t>(2 * delay + 1000));
  const size_t lo = delay, hi = static_cast<size_t>(t_len) - delay;

  SUBCASE("a Nyquist-rate tone is attenuated below a tenth") {
    Sequence in = sine_seq(100.0, fs, t_len, 1.0, M_PI / 2.0);  // cos phase: +1,-1,+1,...
    Sequence out = bandpass_filter(in, 0.3, 75.0);
    REQUIRE(out.length() == t_len);
    CHECK(rms(out.samples, lo, hi) < 0.1 * rms(in.samples, lo, hi));
  }

  SUBCASE("a constant offset is attenuated below a tenth of its amplitude") {
    Sequence in = make_seq(std::vector<double>(static_cast<size_t>(t_len), 1.0), fs);
    Sequence out = bandpass_filter(in, 0.3, 75.0);
    CHECK(rms(out.samples, lo, hi) < 0.1);
  }

  SUBCASE("an in-band tone keeps its power within five percent") {
    Sequence in = sine_seq(10.0, fs, t_len);
    Sequence out = bandpass_filter(in, 0.3, 75.0);
    double ratio = rms(out.samples, lo, hi) / rms(in.samples, lo, hi);
    CHECK(ratio > 0.95);
    CHECK(ratio < 1.05);
  }
}

TEST_CASE("bandpass tap response meets the stopband and passband points") {
  const double fs = 200.0;
  auto taps = design_bandpass_fir(fs, 0.3, 75.0);
  // 20 dB down at half the low edge and at min(1.5 * high, Nyquist).
  CHECK(fir_response(taps, 0.15, fs) < 0.1);
  CHECK(fir_response(taps, 100.0, fs) < 0.1);
  // Flat through the middle of the band.
  for (double hz : {1.0, 10.0, 40.0, 70.0}) {
    CHECK(fir_response(taps, hz, fs) > 0.95);
    CHECK(fir_response(taps, hz, fs) < 1.05);
  }
}

TEST_CASE("bandpass rejects invalid band edges") {
  Sequence in = sine_seq(10.0, 200.0, 256);
  CHECK_THROWS_AS(bandpass_filter(in, 75.0, 0.3), InvalidInput);
  CHECK_THROWS_AS(bandpass_filter(in, 0.0, 75.0), InvalidInput);
  CHECK_THROWS_AS(bandpass_filter(in, 0.3, 100.0), InvalidInput);  // at Nyquist
  CHECK_THROWS_AS(design_bandpass_fir(200.0, -1.0, 75.0), InvalidInput);
}

TEST_CASE("notch kills the mains line and passes its neighborhood") {
  const double fs = 200.0;
  const int64_t t_len = 4000;
  const size_t settle = 1000;  // past the biquad ring-in

  SUBCASE("mains tone attenuated below a tenth") {
    Sequence in = sine_seq(60.0, fs, t_len);
    Sequence out = notch_filter(in, 60.0);
    CHECK(rms(out.samples, settle) < 0.1 * rms(in.samples, settle));
  }

  SUBCASE("a distant tone passes within five percent") {
    Sequence in = sine_seq(10.0, fs, t_len);
    Sequence out = notch_filter(in, 60.0);
    double ratio = rms(out.samples, settle) / rms(in.samples, settle);
    CHECK(ratio > 0.95);
    CHECK(ratio < 1.05);
  }

  SUBCASE("zero in, zero out") {
    Sequence in = make_seq(std::vector<double>(512, 0.0), fs);
    Sequence out = notch_filter(in, 60.0);
    for (double v : out.samples) CHECK(v == 0.0);
  }

  SUBCASE("mains at or above Nyquist is rejected") {
    Sequence in = sine_seq(10.0, fs, 256);
    CHECK_THROWS_AS(notch_filter(in, 100.0), InvalidInput);
    CHECK_THROWS_AS(notch_filter(in, 130.0), InvalidInput);
  }
}

TEST_CASE("notch biquad matches the cookbook design and response bounds") {
  struct Case {
    double fs, f0;
  };
  for (Case c : {Case{200.0, 60.0}, Case{250.0, 50.0}}) {
    BiquadCoeffs got = design_notch_biquad(c.fs, c.f0, 30.0);
    // Independent evaluation of the standard constrained-zero notch design.
    double w0 = 2.0 * M_PI * c.f0 / c.fs;
    double alpha = std::sin(w0) / (2.0 * 30.0);
    double a0 = 1.0 + alpha;
    CHECK(got.b0 == doctest::Approx(1.0 / a0).epsilon(1e-12));
    CHECK(got.b1 == doctest::Approx(-2.0 * std::cos(w0) / a0).epsilon(1e-12));
    CHECK(got.b2 == doctest::Approx(1.0 / a0).epsilon(1e-12));
    CHECK(got.a1 == doctest::Approx(-2.0 * std::cos(w0) / a0).epsilon(1e-12));
    CHECK(got.a2 == doctest::Approx((1.0 - alpha) / a0).epsilon(1e-12));

    // Exact null at the notch, under 1 dB ripple outside +/-2 Hz.
    CHECK(biquad_response(got, c.f0, c.fs) < 1e-12);
    double db1 = std::pow(10.0, -1.0 / 20.0);
    CHECK(biquad_response(got, c.f0 - 2.0, c.fs) > db1);
    CHECK(biquad_response(got, c.f0 + 2.0, c.fs) > db1);
    CHECK(biquad_response(got, 10.0, c.fs) > 0.95);
  }
}

TEST_CASE("both filters are linear maps") {
  Rng rng(11);
  Sequence x = noise_seq(400, 200.0, rng);
  Sequence y = noise_seq(400, 200.0, rng);
  const double a = 1.7, b = -0.6;
  Sequence mix = x;
  for (size_t i = 0; i < mix.samples.size(); ++i)
    mix.samples[i] = a * x.samples[i] + b * y.samples[i];

  auto check_linear = [&](auto&& filt) {
    Sequence fm = filt(mix);
    Sequence fx = filt(x);
    Sequence fy = filt(y);
    double max_val = 0.0, max_diff = 0.0;
    for (size_t i = 0; i < fm.samples.size(); ++i) {
      double want = a * fx.samples[i] + b * fy.samples[i];
      max_val = std::max(max_val, std::abs(want));
      max_diff = std::max(max_diff, std::abs(fm.samples[i] - want));
    }
    CHECK(max_diff <= 1e-9 * std::max(1.0, max_val));
  };
  check_linear([](const Sequence& s) { return bandpass_filter(s, 0.3, 75.0); });
  check_linear([](const Sequence& s) { return notch_filter(s, 60.0); });
}

TEST_CASE("resample length, identity, and waveform fidelity") {
  SUBCASE("160 Hz length 640 becomes 200 Hz length 800") {
    Rng rng(3);
    Sequence in = noise_seq(640, 160.0, rng);
    Sequence out = resample(in, 200.0);
    CHECK(out.length() == 800);
    CHECK(out.sample_rate_hz == 200.0);
  }

  SUBCASE("matching target rate returns identical samples") {
    Rng rng(4);
    Sequence in = noise_seq(500, 200.0, rng);
    Sequence out = resample(in, 200.0);
    CHECK(out.samples == in.samples);
  }

  SUBCASE("a 5 Hz sine downsampled 200 to 100 Hz tracks the analytic sine") {
    Sequence in = sine_seq(5.0, 200.0, 1000);
    Sequence out = resample(in, 100.0);
    REQUIRE(out.length() == 500);
    std::vector<double> want(500);
    for (int64_t i = 0; i < 500; ++i)
      want[static_cast<size_t>(i)] = std::sin(2.0 * M_PI * 5.0 * static_cast<double>(i) / 100.0);
    CHECK(pearson(out.samples, want) >= 0.999);
  }

  SUBCASE("a constant signal stays constant through rate conversion") {
    Sequence in = make_seq(std::vector<double>(300, 2.5), 200.0);
    Sequence out = resample(in, 150.0);
    for (double v : out.samples) CHECK(v == doctest::Approx(2.5).epsilon(1e-6));
  }

  SUBCASE("non-positive target rate is rejected") {
    Sequence in = sine_seq(5.0, 200.0, 100);
    CHECK_THROWS_AS(resample(in, 0.0), InvalidInput);
  }
}

TEST_CASE("instance normalization hits zero mean unit variance") {
  SUBCASE("three-point ramp") {
    auto r = instance_normalize(make_seq({1.0, 2.0, 3.0}, 100.0));
    CHECK_FALSE(r.variance_floored);
    const auto& v = r.sequence.samples;
    double mean = (v[0] + v[1] + v[2]) / 3.0;
    double var = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 3.0 - mean * mean;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    CHECK(v[0] == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-9));
    CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v[2] == doctest::Approx(std::sqrt(1.5)).epsilon(1e-9));
  }

  SUBCASE("idempotent within tolerance") {
    Rng rng(7);
    Sequence in = noise_seq(256, 100.0, rng, 3.0);
    auto once = instance_normalize(in);
    auto twice = instance_normalize(once.sequence);
    for (size_t i = 0; i < in.samples.size(); ++i)
      CHECK(std::abs(twice.sequence.samples[i] - once.sequence.samples[i]) < 1e-6);
  }

  SUBCASE("flatline input floors the variance and flags it") {
    auto r = instance_normalize(make_seq({5.0, 5.0, 5.0}, 100.0));
    CHECK(r.variance_floored);
    for (double v : r.sequence.samples) CHECK(v == 0.0);
  }

  SUBCASE("single-sample input is rejected") {
    CHECK_THROWS_AS(instance_normalize(make_seq({1.0}, 100.0)), InvalidInput);
  }
}

TEST_CASE("random patch sampling: counts, bounds, fidelity, determinism") {
  Rng rng(21);
  Sequence seq = noise_seq(6000, 200.0, rng);

  SUBCASE("forty patches with eighty percent masked") {
    Rng r(5);
    PatchSet ps = sample_patches_random(seq, 40, 200, 0.8, r);
    CHECK(ps.n() == 40);
    CHECK(ps.patch_len() == 200);
    CHECK(ps.n_masked() == 32);
    CHECK(ps.source_length == 6000);
    for (int64_t t : ps.start_times) {
      CHECK(t >= 0);
      CHECK(t <= 5800);
    }
    // Every patch is an exact slice of the source.
    for (int64_t i = 0; i < ps.n(); ++i)
      for (int64_t j = 0; j < ps.patch_len(); ++j)
        CHECK(ps.patches[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
              seq.samples[static_cast<size_t>(ps.start_times[static_cast<size_t>(i)] + j)]);
  }

  SUBCASE("mask ratio one masks everything") {
    Rng r(6);
    PatchSet ps = sample_patches_random(seq, 8, 200, 1.0, r);
    CHECK(ps.n_masked() == 8);
  }

  SUBCASE("equal seeds agree, distinct seeds differ") {
    Rng r1(123), r2(123);
    PatchSet a = sample_patches_random(seq, 16, 200, 0.5, r1);
    PatchSet b = sample_patches_random(seq, 16, 200, 0.5, r2);
    CHECK(a.start_times == b.start_times);
    CHECK(a.pe_masked == b.pe_masked);

    std::set<std::vector<int64_t>> seen;
    for (uint64_t seed = 0; seed < 100; ++seed) {
      Rng r(seed);
      seen.insert(sample_patches_random(seq, 16, 200, 0.5, r).start_times);
    }
    CHECK(seen.size() == 100);
  }

  SUBCASE("patch longer than the sequence is rejected") {
    Rng r(7);
    CHECK_THROWS_AS(sample_patches_random(seq, 4, 6001, 0.5, r), InvalidInput);
  }
}

TEST_CASE("random patch starts are uniform over the feasible range") {
  Rng rng(30);
  Sequence seq = noise_seq(20, 100.0, rng);  // 11 possible starts for m = 10
  Rng draw(31);
  PatchSet ps = sample_patches_random(seq, 10000, 10, 0.0, draw);
  std::vector<int64_t> counts(11, 0);
  for (int64_t t : ps.start_times) {
    REQUIRE(t >= 0);
    REQUIRE(t <= 10);
    ++counts[static_cast<size_t>(t)];
  }
  const double expected = 10000.0 / 11.0;
  const double sigma = std::sqrt(10000.0 * (1.0 / 11.0) * (10.0 / 11.0));
  for (int64_t c : counts) CHECK(std::abs(static_cast<double>(c) - expected) <= 5.0 * sigma);
}

TEST_CASE("fixed-grid patching walks the stride") {
  Rng rng(40);
  Sequence seq = noise_seq(6000, 200.0, rng);

  SUBCASE("non-overlapping stride yields thirty patches") {
    PatchSet ps = sample_patches_fixed(seq, 200, 200);
    REQUIRE(ps.n() == 30);
    for (int64_t i = 0; i < 30; ++i) CHECK(ps.start_times[static_cast<size_t>(i)] == i * 200);
    CHECK(ps.n_masked() == 0);
  }

  SUBCASE("half stride yields fifty-nine") {
    CHECK(sample_patches_fixed(seq, 200, 100).n() == 59);
  }

  SUBCASE("patch equal to the whole sequence yields one") {
    PatchSet ps = sample_patches_fixed(seq, 6000, 200);
    REQUIRE(ps.n() == 1);
    CHECK(ps.start_times[0] == 0);
  }

  SUBCASE("patches are exact slices") {
    PatchSet ps = sample_patches_fixed(seq, 250, 125);
    for (int64_t i = 0; i < ps.n(); ++i)
      for (int64_t j = 0; j < 250; ++j)
        CHECK(ps.patches[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
              seq.samples[static_cast<size_t>(ps.start_times[static_cast<size_t>(i)] + j)]);
  }

  SUBCASE("oversized patch rejected") {
    CHECK_THROWS_AS(sample_patches_fixed(seq, 6001, 200), InvalidInput);
  }
}

TEST_CASE("mask assignment and shuffling preserve patch identity") {
  Rng rng(50);
  Sequence seq = noise_seq(3000, 100.0, rng);
  PatchSet ps = sample_patches_fixed(seq, 100, 100);
  REQUIRE(ps.n() == 30);

  Rng mask_rng(51);
  assign_pe_mask(ps, 0.8, mask_rng);
  CHECK(ps.n_masked() == 24);

  auto key = [](const PatchSet& p, int64_t i) {
    return std::make_pair(p.start_times[static_cast<size_t>(i)],
                          static_cast<int>(p.pe_masked[static_cast<size_t>(i)]));
  };
  std::vector<std::pair<int64_t, int>> before;
  for (int64_t i = 0; i < ps.n(); ++i) before.push_back(key(ps, i));
  std::sort(before.begin(), before.end());

  Rng shuffle_rng(52);
  shuffle_patches(ps, shuffle_rng);
  std::vector<std::pair<int64_t, int>> after;
  for (int64_t i = 0; i < ps.n(); ++i) after.push_back(key(ps, i));
  std::sort(after.begin(), after.end());
  CHECK(before == after);
  // Patch payloads still track their start times after the shuffle.
  for (int64_t i = 0; i < ps.n(); ++i)
    CHECK(ps.patches[static_cast<size_t>(i)][0] ==
          seq.samples[static_cast<size_t>(ps.start_times[static_cast<size_t>(i)])]);
}

TEST_CASE("random crop is a contiguous slice and identity at full length") {
  std::vector<double> ramp(300);
  for (size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  Sequence seq = make_seq(ramp, 100.0);

  SUBCASE("full-length crop is the identity") {
    Rng r(60);
    Sequence out = random_crop(seq, 300, r);
    CHECK(out.samples == seq.samples);
  }

  SUBCASE("shorter crops are consecutive runs at varying offsets") {
    Rng r(61);
    std::set<double> first_values;
    for (int k = 0; k < 50; ++k) {
      Sequence out = random_crop(seq, 50, r);
      REQUIRE(out.length() == 50);
      double start = out.samples[0];
      CHECK(start >= 0.0);
      CHECK(start <= 250.0);
      for (int64_t j = 0; j < 50; ++j)
        CHECK(out.samples[static_cast<size_t>(j)] == start + static_cast<double>(j));
      first_values.insert(start);
    }
    CHECK(first_values.size() > 1);
  }

  SUBCASE("crop longer than input rejected") {
    Rng r(62);
    CHECK_THROWS_AS(random_crop(seq, 301, r), InvalidInput);
  }
}
