#include "svs/score.hpp"

#include "svs/pitch.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace svs {

using nlohmann::json;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// inventory
// ---------------------------------------------------------------------------

int PhonemeInventory::index_of(const std::string& symbol) const {
  for (size_t i = 0; i < symbols.size(); ++i)
    if (symbols[i] == symbol) return static_cast<int>(i);
  return -1;
}

PhonemeInventory PhonemeInventory::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Err::MissingFile, "cannot open inventory " + path);
  PhonemeInventory inv;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream is(line);
    std::string symbol, cls;
    if (!(is >> symbol)) continue;
    if (inv.symbols.empty()) {
      require(symbol == "<blank>", Err::SchemaViolation,
              path + ":" + std::to_string(line_no) + ": first entry must be <blank>");
      inv.symbols.push_back(symbol);
      inv.classes.push_back(PhonemeClass::Blank);
      continue;
    }
    require(static_cast<bool>(is >> cls) && (cls == "vowel" || cls == "consonant"),
            Err::SchemaViolation,
            path + ":" + std::to_string(line_no) + ": expected '<symbol> vowel|consonant'");
    require(inv.index_of(symbol) < 0, Err::SchemaViolation,
            path + ":" + std::to_string(line_no) + ": duplicate symbol " + symbol);
    inv.symbols.push_back(symbol);
    inv.classes.push_back(cls == "vowel" ? PhonemeClass::Vowel : PhonemeClass::Consonant);
  }
  require(inv.size() >= 2, Err::SchemaViolation, path + ": inventory needs <blank> plus symbols");
  return inv;
}

void PhonemeInventory::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f << "# phoneme inventory\n<blank>\n";
  for (size_t i = 1; i < symbols.size(); ++i)
    f << symbols[i] << ' '
      << (classes[i] == PhonemeClass::Vowel ? "vowel" : "consonant") << '\n';
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

void Score::validate(const PhonemeInventory& inv) const {
  require(!notes.empty(), Err::EmptyScore, "score has no notes");
  double prev_end = -1e9;
  for (size_t n = 0; n < notes.size(); ++n) {
    const Note& note = notes[n];
    const std::string at = "note " + std::to_string(n);
    require(note.duration > 0.0, Err::SchemaViolation, at + ": duration must be positive");
    require(note.onset >= prev_end - 1e-9, Err::SchemaViolation, at + ": overlaps previous note");
    require(note.midi >= 36 && note.midi <= 96, Err::SchemaViolation,
            at + ": midi " + std::to_string(note.midi) + " outside [36, 96]");
    require(!note.phonemes.empty(), Err::InvalidSyllable, at + ": empty syllable");
    bool has_vowel = false;
    for (int id : note.phonemes) {
      require(id > 0 && id < inv.size(), Err::SchemaViolation,
              at + ": phoneme id " + std::to_string(id) + " outside inventory");
      has_vowel = has_vowel || inv.is_vowel(id);
    }
    require(has_vowel, Err::InvalidSyllable, at + ": syllable has no vowel");
    prev_end = note.onset + note.duration;
  }
}

Score Score::load(const std::string& path, const PhonemeInventory& inv) {
  std::ifstream f(path);
  require(f.good(), Err::MissingFile, "cannot open score " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail(Err::SchemaViolation, path + ": " + e.what());
  }
  require(j.is_object() && j.contains("notes") && j["notes"].is_array(), Err::SchemaViolation,
          path + ": expected {\"notes\": [...]}");
  for (const auto& [key, _] : j.items())
    require(key == "notes", Err::SchemaViolation, path + ": unknown key '" + key + "'");
  Score score;
  for (const auto& jn : j["notes"]) {
    for (const auto& [key, _] : jn.items())
      require(key == "onset" || key == "dur" || key == "midi" || key == "phonemes",
              Err::SchemaViolation, path + ": unknown note key '" + key + "'");
    require(jn.contains("onset") && jn.contains("dur") && jn.contains("midi") &&
                jn.contains("phonemes"),
            Err::SchemaViolation, path + ": note needs onset/dur/midi/phonemes");
    Note note;
    note.onset = jn["onset"].get<double>();
    note.duration = jn["dur"].get<double>();
    note.midi = jn["midi"].get<int>();
    for (const auto& sym : jn["phonemes"]) {
      const int id = inv.index_of(sym.get<std::string>());
      require(id > 0, Err::SchemaViolation,
              path + ": phoneme '" + sym.get<std::string>() + "' not in inventory");
      note.phonemes.push_back(id);
    }
    score.notes.push_back(std::move(note));
  }
  score.validate(inv);
  return score;
}

void Score::save(const std::string& path, const PhonemeInventory& inv) const {
  json notes_json = json::array();
  for (const Note& note : notes) {
    json syms = json::array();
    for (int id : note.phonemes) syms.push_back(inv.symbols[static_cast<size_t>(id)]);
    notes_json.push_back(
        {{"onset", note.onset}, {"dur", note.duration}, {"midi", note.midi}, {"phonemes", syms}});
  }
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f << json{{"notes", notes_json}}.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// frame expansion
// ---------------------------------------------------------------------------

namespace {

// per-frame phoneme ids inside one note: consonants pin to the edges with one
// 10 ms frame each, vowels share the remainder (earlier vowels get the slack)
std::vector<int> layout_note(const Note& note, Index span, const PhonemeInventory& inv,
                             size_t note_index) {
  Index consonants = 0, vowels = 0;
  for (int id : note.phonemes) (inv.is_vowel(id) ? vowels : consonants)++;
  require(span >= consonants + vowels, Err::NoteTooShort,
          "note " + std::to_string(note_index) + ": " + std::to_string(span) +
              " frames cannot fit " + std::to_string(consonants + vowels) + " phonemes");
  const Index vowel_total = span - consonants;
  const Index base = vowel_total / vowels;
  Index extra = vowel_total % vowels;
  std::vector<int> out;
  out.reserve(static_cast<size_t>(span));
  for (int id : note.phonemes) {
    Index len = 1;
    if (inv.is_vowel(id)) {
      len = base + (extra > 0 ? 1 : 0);
      if (extra > 0) --extra;
    }
    for (Index i = 0; i < len; ++i) out.push_back(id);
  }
  return out;
}

}  // namespace

FrameLabels expand_score(const Score& score, const PhonemeInventory& inv, double frame_rate_ds) {
  score.validate(inv);
  FrameLabels labels;
  Index cursor = 0;
  for (size_t n = 0; n < score.notes.size(); ++n) {
    const Note& note = score.notes[n];
    const Index start = std::max(cursor, round_frames(note.onset * frame_rate_ds));
    const Index span = round_frames(note.duration * frame_rate_ds);
    const std::vector<int> frames = layout_note(note, span, inv, n);
    while (cursor < start) {
      labels.phoneme_ids.push_back(kBlankId);
      labels.pitch_tokens.push_back(kRestToken);
      ++cursor;
    }
    for (int id : frames) {
      labels.phoneme_ids.push_back(id);
      labels.pitch_tokens.push_back(note.midi);
      ++cursor;
    }
  }
  return labels;
}

PhonemeTargets targets_from_score(const Score& score) {
  require(!score.notes.empty(), Err::EmptyScore, "targets_from_score: score has no notes");
  PhonemeTargets targets;
  for (const Note& note : score.notes)
    targets.ids.insert(targets.ids.end(), note.phonemes.begin(), note.phonemes.end());
  return targets;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

Dataset load_manifest(const std::string& manifest_path, const std::string& inventory_path) {
  Dataset ds;
  ds.inventory = PhonemeInventory::load(inventory_path);
  std::ifstream f(manifest_path);
  require(f.good(), Err::MissingFile, "cannot open manifest " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();

  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = manifest_path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(Err::SchemaViolation, at + ": " + e.what());
    }
    for (const auto& [key, _] : j.items())
      require(key == "id" || key == "audio" || key == "phonemes" || key == "score",
              Err::SchemaViolation, at + ": unknown key '" + key + "'");
    require(j.contains("id") && j.contains("audio") && j.contains("phonemes"),
            Err::SchemaViolation, at + ": entry needs id/audio/phonemes");

    ManifestEntry entry;
    entry.id = j["id"].get<std::string>();
    entry.audio_path = (root / j["audio"].get<std::string>()).string();
    require(fs::exists(entry.audio_path), Err::MissingFile, at + ": " + entry.audio_path);

    std::istringstream syms(j["phonemes"].get<std::string>());
    std::string sym;
    while (syms >> sym) {
      const int id = ds.inventory.index_of(sym);
      require(id > 0, Err::SchemaViolation, at + ": phoneme '" + sym + "' not in inventory");
      entry.phonemes.push_back(id);
    }
    require(!entry.phonemes.empty(), Err::SchemaViolation, at + ": empty phoneme sequence");

    if (j.contains("score")) {
      entry.score_path = (root / j["score"].get<std::string>()).string();
      require(fs::exists(*entry.score_path), Err::MissingFile, at + ": " + *entry.score_path);
      entry.score = Score::load(*entry.score_path, ds.inventory);
    }
    ds.entries.push_back(std::move(entry));
  }
  require(!ds.entries.empty(), Err::SchemaViolation, manifest_path + ": no entries");
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

namespace {

struct Formants {
  double f1, f2;
};

const std::map<std::string, Formants> kVowelFormants = {
    {"a", {700.0, 1220.0}}, {"e", {530.0, 1840.0}}, {"i", {300.0, 2250.0}},
    {"o", {500.0, 880.0}},  {"u", {320.0, 800.0}},
};

const std::vector<std::string> kBuiltinOrder = {"a", "e", "i", "o", "u", "k", "s", "t"};

// RBJ constant-peak-gain bandpass
void bandpass_inplace(Vecd& x, double freq, double q) {
  const double w0 = 2.0 * 3.14159265358979323846 * freq / kSampleRate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double b0 = alpha, b2 = -alpha;
  const double a0 = 1.0 + alpha, a1 = -2.0 * std::cos(w0), a2 = 1.0 - alpha;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const double xn = x(i);
    const double yn = (b0 * xn + b2 * x2 - a1 * y1 - a2 * y2) / a0;
    x2 = x1;
    x1 = xn;
    y2 = y1;
    y1 = yn;
    x(i) = yn;
  }
}

void apply_fades(Vecd& x, Index fade) {
  const Index f = std::min(fade, x.size() / 2);
  for (Index i = 0; i < f; ++i) {
    const double w = static_cast<double>(i + 1) / static_cast<double>(f + 1);
    x(i) *= w;
    x(x.size() - 1 - i) *= w;
  }
}

Vecd render_vowel(const std::string& sym, double f0, Index n, double start_phase) {
  Vecd src(n);
  for (Index i = 0; i < n; ++i) {
    const double phase = std::fmod(start_phase + f0 * i / kSampleRate, 1.0);
    src(i) = 2.0 * phase - 1.0;
  }
  const Formants fm = kVowelFormants.at(sym);
  Vecd low = src, high = src;
  bandpass_inplace(low, fm.f1, 8.0);
  bandpass_inplace(high, fm.f2, 10.0);
  Vecd out = 0.12 * src + 1.0 * low + 0.6 * high;
  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 1e-9) out *= 0.35 / peak;
  apply_fades(out, kSampleRate / 400);  // 2.5 ms
  return out;
}

Vecd render_consonant(const std::string& sym, Index n, Rng& rng) {
  Vecd noise(n);
  for (Index i = 0; i < n; ++i) noise(i) = 2.0 * rng.uniform() - 1.0;
  Vecd out;
  if (sym == "s") {
    out = Vecd(n);
    out(0) = noise(0);
    for (Index i = 1; i < n; ++i) out(i) = noise(i) - noise(i - 1);  // first-difference highpass
    out *= 0.22;
  } else if (sym == "k") {
    out = noise;
    bandpass_inplace(out, 1400.0, 4.0);
    for (Index i = 0; i < n; ++i) out(i) *= std::exp(-static_cast<double>(i) / (0.004 * kSampleRate));
    const double peak = out.cwiseAbs().maxCoeff();
    if (peak > 1e-9) out *= 0.4 / peak;
  } else {  // "t": broadband click burst
    out = noise;
    for (Index i = 0; i < n; ++i) out(i) *= std::exp(-static_cast<double>(i) / (0.003 * kSampleRate));
    out *= 0.4;
  }
  apply_fades(out, kSampleRate / 1000);
  return out;
}

// frame-accurate rendering from the expanded labels so audio and score agree
AudioClip render_score_audio(const Score& score, const PhonemeInventory& inv, Rng& rng) {
  const FrameLabels labels = expand_score(score, inv);
  const Index frame_samples = kSampleRate / static_cast<Index>(kLabelFrameRate);
  const Index total = static_cast<Index>(labels.phoneme_ids.size()) * frame_samples;
  Vecd x = Vecd::Zero(total);

  size_t t = 0;
  while (t < labels.phoneme_ids.size()) {
    size_t t2 = t;
    while (t2 < labels.phoneme_ids.size() && labels.phoneme_ids[t2] == labels.phoneme_ids[t] &&
           labels.pitch_tokens[t2] == labels.pitch_tokens[t])
      ++t2;
    const int id = labels.phoneme_ids[t];
    const Index begin = static_cast<Index>(t) * frame_samples;
    const Index n = static_cast<Index>(t2 - t) * frame_samples;
    if (id != kBlankId) {
      const std::string& sym = inv.symbols[static_cast<size_t>(id)];
      if (inv.is_vowel(id)) {
        const double f0 = midi_to_hz(labels.pitch_tokens[t]);
        x.segment(begin, n) = render_vowel(sym, f0, n, 0.0);
      } else {
        x.segment(begin, n) = render_consonant(sym, n, rng);
      }
    }
    t = t2;
  }
  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.89) x *= 0.89 / peak;
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples = x.cast<float>();
  return clip;
}

}  // namespace

PhonemeInventory builtin_inventory(const std::vector<std::string>& subset) {
  PhonemeInventory inv;
  inv.symbols.push_back("<blank>");
  inv.classes.push_back(PhonemeClass::Blank);
  for (const std::string& sym : kBuiltinOrder) {
    if (!subset.empty() &&
        std::find(subset.begin(), subset.end(), sym) == subset.end())
      continue;
    inv.symbols.push_back(sym);
    inv.classes.push_back(kVowelFormants.count(sym) ? PhonemeClass::Vowel
                                                    : PhonemeClass::Consonant);
  }
  require(inv.size() >= 2, Err::BadConfig, "builtin_inventory: empty phoneme subset");
  bool any_vowel = false;
  for (PhonemeClass c : inv.classes) any_vowel = any_vowel || c == PhonemeClass::Vowel;
  require(any_vowel, Err::BadConfig, "builtin_inventory: subset needs at least one vowel");
  return inv;
}

std::vector<SynthClip> synth_clips(const CorpusSpec& spec, const PhonemeInventory& inv) {
  Rng rng(spec.seed);
  std::vector<int> vowel_ids, consonant_ids;
  for (int i = 1; i < inv.size(); ++i)
    (inv.is_vowel(i) ? vowel_ids : consonant_ids).push_back(i);

  std::vector<SynthClip> clips;
  for (int c = 0; c < spec.n_clips; ++c) {
    const double target = rng.uniform(spec.min_len, spec.max_len);
    Score score;
    int midi = static_cast<int>(rng.uniform_int(spec.midi_lo, spec.midi_hi));
    double cursor = 0.0;
    int prev_last = -1;
    while (score.span() < target && cursor < spec.max_len - 0.3) {
      Note note;
      // random walk in the spec'd range, steps up to a fourth
      midi = std::clamp(midi + static_cast<int>(rng.uniform_int(-4, 4)), spec.midi_lo,
                        spec.midi_hi);
      note.midi = midi;
      const double bases[] = {0.20, 0.28, 0.36, 0.48, 0.60};
      const double dur = bases[rng.uniform_int(0, 4)] / spec.tempo;
      note.duration = std::max(0.06, std::round(dur * 100.0) / 100.0);

      const int vowel = vowel_ids[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(vowel_ids.size()) - 1))];
      const double pattern = rng.uniform();
      auto pick_consonant = [&] {
        return consonant_ids[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(consonant_ids.size()) - 1))];
      };
      if (consonant_ids.empty() || pattern < 0.25) {
        note.phonemes = {vowel};
      } else if (pattern < 0.65) {
        note.phonemes = {pick_consonant(), vowel};
      } else if (pattern < 0.9) {
        note.phonemes = {pick_consonant(), vowel, pick_consonant()};
      } else {
        note.phonemes = {vowel, pick_consonant()};
      }
      if (rng.uniform() < 0.25) cursor += 0.05 + 0.01 * static_cast<double>(rng.uniform_int(0, 10));
      // identical phonemes across a zero-gap boundary would merge under the
      // CTC collapse; keep scores representable
      if (note.phonemes.front() == prev_last) cursor += 0.01;
      cursor = std::round(cursor * 100.0) / 100.0;
      note.onset = cursor;
      score.notes.push_back(note);
      cursor += note.duration;
      prev_last = note.phonemes.back();
    }

    SynthClip clip;
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03d", c);
    clip.id = name;
    clip.score = std::move(score);
    clip.audio = render_score_audio(clip.score, inv, rng);
    clips.push_back(std::move(clip));
  }
  return clips;
}

void write_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  const PhonemeInventory inv = builtin_inventory(spec.phonemes);
  const std::vector<SynthClip> clips = synth_clips(spec, inv);
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "score");
  inv.save((fs::path(out_dir) / "inventory.txt").string());

  std::ofstream manifest((fs::path(out_dir) / "manifest.jsonl").string(), std::ios::trunc);
  require(manifest.good(), Err::UnreadableFile, "cannot write manifest in " + out_dir);
  for (const SynthClip& clip : clips) {
    const std::string wav_rel = "wav/" + clip.id + ".wav";
    const std::string score_rel = "score/" + clip.id + ".json";
    save_audio((fs::path(out_dir) / wav_rel).string(), clip.audio);
    clip.score.save((fs::path(out_dir) / score_rel).string(), inv);

    std::string phoneme_text;
    for (int id : targets_from_score(clip.score).ids) {
      if (!phoneme_text.empty()) phoneme_text += ' ';
      phoneme_text += inv.symbols[static_cast<size_t>(id)];
    }
    manifest << json{{"id", clip.id},
                     {"audio", wav_rel},
                     {"phonemes", phoneme_text},
                     {"score", score_rel}}
                    .dump()
             << '\n';
  }
}

}  // namespace svs
