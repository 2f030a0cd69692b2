#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svs/pitch.hpp"
#include "svs/score.hpp"

#include <filesystem>
#include <set>

using namespace svs;

namespace {

// dedupe + drop blank, the CTC collapse rule
std::vector<int> collapse(const std::vector<int>& frames) {
  std::vector<int> out;
  int prev = -1;
  for (int id : frames) {
    if (id != prev && id != kBlankId) out.push_back(id);
    prev = id;
  }
  return out;
}

Score random_score(Rng& rng, const PhonemeInventory& inv, int n_notes) {
  std::vector<int> vowels, consonants;
  for (int i = 1; i < inv.size(); ++i) (inv.is_vowel(i) ? vowels : consonants).push_back(i);
  Score score;
  double cursor = 0.1;
  int prev_last = -1;
  for (int n = 0; n < n_notes; ++n) {
    Note note;
    note.duration = 0.05 + 0.01 * static_cast<double>(rng.uniform_int(0, 40));
    note.midi = static_cast<int>(rng.uniform_int(48, 84));
    const int v = vowels[static_cast<size_t>(rng.uniform_int(0, (int)vowels.size() - 1))];
    const double r = rng.uniform();
    auto c = [&] {
      return consonants[static_cast<size_t>(rng.uniform_int(0, (int)consonants.size() - 1))];
    };
    if (r < 0.3)
      note.phonemes = {v};
    else if (r < 0.6)
      note.phonemes = {c(), v};
    else if (r < 0.85)
      note.phonemes = {c(), v, c()};
    else
      note.phonemes = {v, c(), v};  // two vowels around a cluster
    // keep durations feasible for the phoneme count
    const double needed = 0.01 * static_cast<double>(note.phonemes.size());
    note.duration = std::max(note.duration, needed + 0.02);
    if (rng.uniform() < 0.3) cursor += 0.01 * static_cast<double>(rng.uniform_int(1, 30));
    // a zero-gap boundary between identical phonemes is not CTC-representable
    if (note.phonemes.front() == prev_last) cursor += 0.01;
    cursor = std::round(cursor * 100.0) / 100.0;
    note.onset = cursor;
    score.notes.push_back(note);
    cursor += note.duration;
    prev_last = note.phonemes.back();
  }
  return score;
}

}  // namespace

TEST_CASE("the 100 ms [k,a,t] note expands to the 10-frame edge pattern") {
  PhonemeInventory inv = builtin_inventory();
  const int k = inv.index_of("k"), a = inv.index_of("a"), t = inv.index_of("t");
  Score score;
  score.notes.push_back({0.0, 0.1, 60, {k, a, t}});
  FrameLabels labels = expand_score(score, inv);
  REQUIRE(labels.phoneme_ids.size() == 10);
  const std::vector<int> expect = {k, a, a, a, a, a, a, a, a, t};
  CHECK(labels.phoneme_ids == expect);
  for (int tok : labels.pitch_tokens) CHECK(tok == 60);
}

TEST_CASE("vowel-only 50 ms note fills all frames") {
  PhonemeInventory inv = builtin_inventory();
  const int a = inv.index_of("a");
  Score score;
  score.notes.push_back({0.0, 0.05, 64, {a}});
  FrameLabels labels = expand_score(score, inv);
  CHECK(labels.phoneme_ids == std::vector<int>(5, a));
}

TEST_CASE("a 20 ms note cannot hold three phonemes") {
  PhonemeInventory inv = builtin_inventory();
  Score score;
  score.notes.push_back(
      {0.0, 0.02, 60, {inv.index_of("s"), inv.index_of("t"), inv.index_of("a")}});
  CHECK_THROWS_AS(expand_score(score, inv), Error);
  try {
    expand_score(score, inv);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoteTooShort);
  }
}

TEST_CASE("syllable without a vowel is invalid") {
  PhonemeInventory inv = builtin_inventory();
  Score score;
  score.notes.push_back({0.0, 0.2, 60, {inv.index_of("s"), inv.index_of("t")}});
  CHECK_THROWS_AS(score.validate(inv), Error);
}

TEST_CASE("targets concatenate syllables without blanks") {
  PhonemeInventory inv = builtin_inventory();
  const int k = inv.index_of("k"), a = inv.index_of("a"), t = inv.index_of("t");
  Score score;
  score.notes.push_back({0.0, 0.2, 60, {k, a}});
  score.notes.push_back({0.2, 0.2, 62, {t, a}});
  CHECK(targets_from_score(score).ids == std::vector<int>{k, a, t, a});

  Score empty;
  CHECK_THROWS_AS(targets_from_score(empty), Error);

  // repeated syllables stay repeated (CTC handles the repeat)
  Score rep;
  rep.notes.push_back({0.0, 0.1, 60, {a}});
  rep.notes.push_back({0.1, 0.1, 60, {a}});
  CHECK(targets_from_score(rep).ids == std::vector<int>{a, a});
}

TEST_CASE("property: collapsing expanded labels reproduces the CTC targets") {
  PhonemeInventory inv = builtin_inventory();
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    Score score = random_score(rng, inv, 1 + static_cast<int>(rng.uniform_int(0, 5)));
    FrameLabels labels = expand_score(score, inv);
    CHECK(collapse(labels.phoneme_ids) == targets_from_score(score).ids);
  }
}

TEST_CASE("property: translation by a grid multiple shifts labels exactly") {
  PhonemeInventory inv = builtin_inventory();
  Rng rng(321);
  for (int trial = 0; trial < 50; ++trial) {
    Score score = random_score(rng, inv, 3);
    const double delta = 0.01 * static_cast<double>(rng.uniform_int(1, 80));
    Score shifted = score;
    for (Note& n : shifted.notes) n.onset += delta;
    FrameLabels a = expand_score(score, inv);
    FrameLabels b = expand_score(shifted, inv);
    const Index shift = round_frames(delta * kLabelFrameRate);
    REQUIRE(b.phoneme_ids.size() == a.phoneme_ids.size() + static_cast<size_t>(shift));
    for (size_t t = 0; t < a.phoneme_ids.size(); ++t) {
      CHECK(b.phoneme_ids[t + static_cast<size_t>(shift)] == a.phoneme_ids[t]);
      CHECK(b.pitch_tokens[t + static_cast<size_t>(shift)] == a.pitch_tokens[t]);
    }
  }
}

TEST_CASE("synthetic corpus is deterministic per seed") {
  PhonemeInventory inv = builtin_inventory();
  CorpusSpec spec;
  spec.n_clips = 2;
  spec.seed = 7;
  spec.min_len = 2.5;
  spec.max_len = 4.0;
  auto a = synth_clips(spec, inv);
  auto b = synth_clips(spec, inv);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].audio.samples.size() == b[i].audio.samples.size());
    CHECK((a[i].audio.samples - b[i].audio.samples).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("synthetic clips stay inside the configured duration range") {
  PhonemeInventory inv = builtin_inventory();
  CorpusSpec spec;
  spec.n_clips = 6;
  spec.seed = 9;
  auto clips = synth_clips(spec, inv);
  for (const auto& clip : clips) {
    CHECK(clip.audio.duration() >= 2.5);
    CHECK(clip.audio.duration() <= 12.0);
  }
}

TEST_CASE("generated A4 notes measure within 0.1 semitone of 440 Hz") {
  PhonemeInventory inv = builtin_inventory({"a", "e", "i", "o", "u"});
  CorpusSpec spec;
  spec.n_clips = 1;
  spec.seed = 3;
  spec.midi_lo = spec.midi_hi = 69;
  spec.min_len = 2.5;
  spec.max_len = 3.0;
  auto clips = synth_clips(spec, inv);
  PitchContour c = estimate_f0(clips[0].audio);
  // measure over the interior of each note
  int measured = 0;
  for (const Note& note : clips[0].score.notes) {
    const Index t0 = static_cast<Index>((note.onset + 0.05) * 200.0);
    const Index t1 = static_cast<Index>((note.onset + note.duration - 0.05) * 200.0);
    for (Index t = t0; t < std::min<Index>(t1, c.frames()); ++t) {
      if (!c.voiced[static_cast<size_t>(t)]) continue;
      CHECK(std::abs(12.0 * std::log2(c.f0_hz(t) / 440.0)) < 0.1);
      ++measured;
    }
  }
  CHECK(measured > 50);
}

TEST_CASE("corpus round-trips through the manifest loader") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "svs_t_corpus").string();
  fs::remove_all(dir);
  CorpusSpec spec;
  spec.n_clips = 2;
  spec.seed = 5;
  spec.min_len = 2.5;
  spec.max_len = 3.5;
  write_corpus(spec, dir);

  Dataset ds = load_manifest(dir + "/manifest.jsonl", dir + "/inventory.txt");
  REQUIRE(ds.entries.size() == 2);
  for (const auto& entry : ds.entries) {
    CHECK(entry.supervised_eligible());
    CHECK(entry.phonemes == targets_from_score(*entry.score).ids);
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest loader rejects unknown symbols and missing files") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "svs_t_badmanifest").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  builtin_inventory().save(dir + "/inventory.txt");
  {
    std::ofstream wav(dir + "/x.wav");
    wav << "placeholder";
  }
  {
    std::ofstream m(dir + "/manifest.jsonl");
    m << R"({"id":"x","audio":"x.wav","phonemes":"q a"})" << "\n";
  }
  CHECK_THROWS_AS(load_manifest(dir + "/manifest.jsonl", dir + "/inventory.txt"), Error);
  {
    std::ofstream m(dir + "/manifest.jsonl");
    m << R"({"id":"x","audio":"missing.wav","phonemes":"a"})" << "\n";
  }
  try {
    load_manifest(dir + "/manifest.jsonl", dir + "/inventory.txt");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::MissingFile);
  }
  fs::remove_all(dir);
}
