#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svs/pitch.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <filesystem>

using namespace svs;
using namespace svs::testutil;

namespace {

double semitone_err(double f, double ref) { return 12.0 * std::log2(f / ref); }

AudioClip white_noise(double dur, uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  const Index n = static_cast<Index>(dur * kSampleRate);
  Vecf x(n);
  for (Index i = 0; i < n; ++i) x(i) = static_cast<float>(amp * (2.0 * rng.uniform() - 1.0));
  return AudioClip{std::move(x), kSampleRate};
}

}  // namespace

TEST_CASE("pure 440 Hz sine: voiced everywhere, f0 within 0.2 semitones") {
  AudioClip sine = make_sine(440.0, 1.0, 0.5);  // -6 dBFS
  PitchContour c = estimate_f0(sine);
  REQUIRE(c.frames() > 100);
  Index voiced_count = 0;
  for (Index t = 0; t < c.frames(); ++t) {
    if (!c.voiced[static_cast<size_t>(t)]) continue;
    ++voiced_count;
    CHECK(std::abs(semitone_err(c.f0_hz(t), 440.0)) < 0.2);
  }
  CHECK(voiced_count == c.frames());  // interior frames all voiced
}

TEST_CASE("digital silence: all frames unvoiced with f0 = 0") {
  AudioClip silence{Vecf::Zero(24000), kSampleRate};
  PitchContour c = estimate_f0(silence);
  for (Index t = 0; t < c.frames(); ++t) {
    CHECK(!c.voiced[static_cast<size_t>(t)]);
    CHECK(c.f0_hz(t) == 0.0);
  }
}

TEST_CASE("white noise: over 90% of frames unvoiced") {
  AudioClip noise = white_noise(1.0, 11);
  PitchContour c = estimate_f0(noise);
  Index unvoiced = 0;
  for (bool v : c.voiced)
    if (!v) ++unvoiced;
  CHECK(static_cast<double>(unvoiced) > 0.9 * static_cast<double>(c.frames()));
}

TEST_CASE("octave stability on sawtooths across the vocal range") {
  for (double f0 : {110.0, 220.0, 440.0, 880.0}) {
    AudioClip saw = make_saw(f0, 0.6, 0.4);
    PitchContour c = estimate_f0(saw);
    for (Index t = 0; t < c.frames(); ++t) {
      if (!c.voiced[static_cast<size_t>(t)]) continue;
      CHECK(std::abs(semitone_err(c.f0_hz(t), f0)) < 7.0);
    }
  }
}

TEST_CASE("hz_to_midi closed forms") {
  CHECK(hz_to_midi(440.0) == 69.0);
  CHECK(hz_to_midi(220.0) == doctest::Approx(57.0).epsilon(1e-12));
  CHECK(hz_to_midi(261.6256) == doctest::Approx(60.0).epsilon(1e-3));
  CHECK_THROWS_AS(hz_to_midi(0.0), Error);
  CHECK_THROWS_AS(hz_to_midi(-5.0), Error);
}

TEST_CASE("quantize_contour: constant 440 Hz gives token 69") {
  PitchContour c;
  c.f0_hz = Vecd::Constant(10, 440.0);
  c.voiced.assign(10, true);
  PitchTokenSeq q = quantize_contour(c, 2);
  REQUIRE(q.tokens.size() == 5);
  for (int t : q.tokens) CHECK(t == 69);
}

TEST_CASE("quantize_contour: all unvoiced gives REST") {
  PitchContour c;
  c.f0_hz = Vecd::Zero(8);
  c.voiced.assign(8, false);
  for (int t : quantize_contour(c, 2).tokens) CHECK(t == kRestToken);
}

TEST_CASE("quantize_contour rounds 449 Hz (69.35 st) to 69") {
  PitchContour c;
  c.f0_hz = Vecd::Constant(4, 449.0);
  c.voiced.assign(4, true);
  CHECK(hz_to_midi(449.0) == doctest::Approx(69.35).epsilon(1e-2));
  for (int t : quantize_contour(c, 2).tokens) CHECK(t == 69);
}

TEST_CASE("voiced_mask majority rule with ties unvoiced") {
  PitchContour c;
  c.f0_hz = Vecd::Constant(6, 200.0);
  c.voiced = {true, false, true, false, true, false};  // alternating
  for (Index i = 0; i < 6; ++i)
    if (!c.voiced[static_cast<size_t>(i)]) c.f0_hz(i) = 0.0;
  auto mask2 = voiced_mask(c, 2);
  for (bool b : mask2) CHECK(!b);  // a tie is not a majority

  c.voiced = {true, true, false, false, false, true};
  for (Index i = 0; i < 6; ++i) c.f0_hz(i) = c.voiced[static_cast<size_t>(i)] ? 200.0 : 0.0;
  auto mask3 = voiced_mask(c, 3);
  REQUIRE(mask3.size() == 2);
  CHECK(mask3[0]);
  CHECK(!mask3[1]);
}

TEST_CASE("all voiced gives an all-true mask, and mask agrees with tokens") {
  PitchContour c;
  c.f0_hz = Vecd::Constant(9, 330.0);
  c.voiced.assign(9, true);
  auto mask = voiced_mask(c, 2);
  auto tokens = quantize_contour(c, 2).tokens;
  REQUIRE(mask.size() == tokens.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    CHECK(mask[i]);
    CHECK((tokens[i] != kRestToken) == mask[i]);
  }
}

TEST_CASE("transposition property: +k semitones shifts every voiced token by k") {
  for (int k = -5; k <= 5; ++k) {
    const double base = 261.63;
    AudioClip a = make_saw(base, 0.6, 0.4);
    AudioClip b = make_saw(base * std::pow(2.0, k / 12.0), 0.6, 0.4);
    auto qa = quantize_contour(estimate_f0(a), 2);
    auto qb = quantize_contour(estimate_f0(b), 2);
    REQUIRE(qa.tokens.size() == qb.tokens.size());
    for (size_t i = 0; i < qa.tokens.size(); ++i) {
      if (qa.tokens[i] == kRestToken || qb.tokens[i] == kRestToken) continue;
      CHECK(qb.tokens[i] - qa.tokens[i] == k);
    }
  }
}

TEST_CASE("contour cache round-trips") {
  AudioClip saw = make_saw(330.0, 0.5, 0.4);
  PitchContour c = estimate_f0(saw);
  const auto p = (std::filesystem::temp_directory_path() / "svs_t_f0.f0c").string();
  save_contour(p, c);
  PitchContour back = load_contour(p);
  std::remove(p.c_str());
  REQUIRE(back.frames() == c.frames());
  for (Index t = 0; t < c.frames(); ++t) {
    CHECK(back.voiced[static_cast<size_t>(t)] == c.voiced[static_cast<size_t>(t)]);
    CHECK(back.f0_hz(t) == doctest::Approx(c.f0_hz(t)).epsilon(1e-6));
  }
}
