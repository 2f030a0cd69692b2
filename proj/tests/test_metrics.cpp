#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svs/metrics.hpp"
#include "test_util.hpp"

using namespace svs;
using namespace svs::testutil;

TEST_CASE("mcd of identical clips is zero and the metric is symmetric") {
  AudioClip a = make_saw(261.63, 0.5);
  AudioClip b = make_saw(392.0, 0.5);
  CHECK(mcd(a, a) == 0.0);
  CHECK(mcd(a, b) == doctest::Approx(mcd(b, a)).epsilon(1e-12));
  CHECK(mcd(a, b) > 0.0);
}

TEST_CASE("golden constant: one coefficient off by 1 in one frame") {
  Matd ref = Matd::Zero(1, 13);
  Matd syn = Matd::Zero(1, 13);
  syn(0, 4) = 1.0;
  CHECK(mcd_from_cepstra(ref, syn) == doctest::Approx(6.1419).epsilon(1e-3 / 6.1419));
}

TEST_CASE("gain changes land in c0 only, so MCD ignores them") {
  AudioClip a = make_saw(261.63, 0.5, 0.3);
  AudioClip twice = a;
  twice.samples *= 2.0f;
  CHECK(mcd(a, twice) == doctest::Approx(0.0).epsilon(1e-6));

  // DCT linearity: a constant log offset is orthogonal to c1..c13
  Matd ca = mel_cepstra(a), cb = mel_cepstra(twice);
  CHECK((ca - cb).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("f0_rmse closed forms") {
  PitchContour ref, syn;
  ref.f0_hz = Vecd::Constant(4, 100.0);
  ref.voiced.assign(4, true);
  syn = ref;
  auto same = f0_rmse(ref, syn);
  CHECK(same.hz == 0.0);
  CHECK(same.cents == 0.0);
  CHECK(same.voiced_overlap_ratio == 1.0);

  // a single overlapping frame at 100 vs 104 Hz
  PitchContour r1, s1;
  r1.f0_hz = Vecd::Zero(3);
  r1.voiced = {false, true, false};
  r1.f0_hz(1) = 100.0;
  s1.f0_hz = Vecd::Zero(3);
  s1.voiced = {false, true, true};
  s1.f0_hz(1) = 104.0;
  s1.f0_hz(2) = 200.0;
  auto one = f0_rmse(r1, s1);
  CHECK(one.hz == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(one.voiced_overlap_ratio == doctest::Approx(0.5));

  // disjoint voicing
  PitchContour r2, s2;
  r2.f0_hz = Vecd::Constant(2, 100.0);
  r2.voiced = {true, false};
  r2.f0_hz(1) = 0.0;
  s2.f0_hz = Vecd::Constant(2, 100.0);
  s2.voiced = {false, true};
  s2.f0_hz(0) = 0.0;
  CHECK_THROWS_AS(f0_rmse(r2, s2), Error);
}

TEST_CASE("f0_rmse in cents is transposition invariant") {
  Rng rng(3);
  PitchContour ref, syn;
  ref.f0_hz = Vecd(16);
  syn.f0_hz = Vecd(16);
  ref.voiced.assign(16, true);
  syn.voiced.assign(16, true);
  for (Index i = 0; i < 16; ++i) {
    ref.f0_hz(i) = 200.0 + 100.0 * rng.uniform();
    syn.f0_hz(i) = ref.f0_hz(i) * (1.0 + 0.02 * rng.normal());
  }
  const double base = f0_rmse(ref, syn).cents;
  PitchContour ref_t = ref, syn_t = syn;
  ref_t.f0_hz *= 1.5;
  syn_t.f0_hz *= 1.5;
  CHECK(f0_rmse(ref_t, syn_t).cents == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("pers counts within-syllable edit distance") {
  PhonemeInventory inv = builtin_inventory();
  const int k = inv.index_of("k"), a = inv.index_of("a"), t = inv.index_of("t");
  Score score;
  score.notes.push_back({0.0, 0.1, 60, {k, a, t}});

  // perfect segments: k at frame 0, a frames 1..8, t at frame 9
  std::vector<AlignSegment> perfect = {{k, 0, 0}, {a, 1, 8}, {t, 9, 9}};
  CHECK(pers(perfect, score) == 0.0);

  // missing the trailing consonant: one edit out of three symbols
  std::vector<AlignSegment> partial = {{k, 0, 0}, {a, 1, 8}};
  CHECK(pers(partial, score) == doctest::Approx(100.0 / 3).epsilon(1e-6));

  Score empty;
  CHECK_THROWS_AS(pers(perfect, empty), Error);
}

TEST_CASE("pers is zero only for exact matches and merges repeated segments") {
  PhonemeInventory inv = builtin_inventory();
  const int a = inv.index_of("a"), e = inv.index_of("e");
  Score score;
  score.notes.push_back({0.0, 0.1, 60, {a}});
  score.notes.push_back({0.1, 0.1, 62, {e}});

  // two separate over-threshold runs of the same symbol inside one note
  std::vector<AlignSegment> segs = {{a, 0, 3}, {a, 5, 9}, {e, 10, 19}};
  CHECK(pers(segs, score) == 0.0);

  std::vector<AlignSegment> wrong = {{e, 0, 9}, {e, 10, 19}};
  CHECK(pers(wrong, score) == doctest::Approx(50.0));
}

TEST_CASE("eval report aggregates clip-count-weighted means") {
  EvalReport report;
  report.clips.push_back({"a", 4.0, 10.0, 100.0, 20.0, 0.9});
  report.clips.push_back({"b", 6.0, 20.0, 200.0, 40.0, 0.7});
  const ClipEval agg = report.aggregate();
  CHECK(agg.mcd_db == doctest::Approx(5.0));
  CHECK(agg.f0_rmse_hz == doctest::Approx(15.0));
  CHECK(agg.pers_percent == doctest::Approx(30.0));
  CHECK(agg.voiced_overlap_ratio == doctest::Approx(0.8));
}
