#pragma once

#include "svs/audio.hpp"
#include "svs/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace svs {

inline constexpr int kBlankId = 0;  // CTC blank, shared with silence
inline constexpr double kLabelFrameRate = 100.0;  // downsampled 10 ms frames

enum class PhonemeClass { Blank, Vowel, Consonant };

// Ordered symbol set; index 0 is reserved for "<blank>".
struct PhonemeInventory {
  std::vector<std::string> symbols;
  std::vector<PhonemeClass> classes;

  int size() const { return static_cast<int>(symbols.size()); }
  int index_of(const std::string& symbol) const;
  bool is_vowel(int id) const { return classes[static_cast<size_t>(id)] == PhonemeClass::Vowel; }

  // plain text: '#' comments, first entry "<blank>", then "<symbol> <class>"
  static PhonemeInventory load(const std::string& path);
  void save(const std::string& path) const;
};

struct Note {
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds
  int midi = 60;
  std::vector<int> phonemes;  // syllable, inventory ids
};

struct Score {
  std::vector<Note> notes;

  double span() const {
    return notes.empty() ? 0.0 : notes.back().onset + notes.back().duration;
  }
  // sorted, non-overlapping, positive durations, midi range, >= 1 vowel each
  void validate(const PhonemeInventory& inv) const;

  static Score load(const std::string& path, const PhonemeInventory& inv);
  void save(const std::string& path, const PhonemeInventory& inv) const;
};

// Frame-level targets on the downsampled clock.
struct FrameLabels {
  std::vector<int> phoneme_ids;
  std::vector<int> pitch_tokens;  // REST = 0
};

// Consonants take one 10 ms frame at the note edge they touch; vowels share
// the rest of the note. Gaps between notes become BLANK + REST.
FrameLabels expand_score(const Score& score, const PhonemeInventory& inv,
                         double frame_rate_ds = kLabelFrameRate);

// Collapsed (non-frame) phoneme id sequence for the CTC loss.
struct PhonemeTargets {
  std::vector<int> ids;
};

PhonemeTargets targets_from_score(const Score& score);

// One training clip as referenced by the manifest.
struct ManifestEntry {
  std::string id;
  std::string audio_path;          // resolved against the manifest directory
  std::vector<int> phonemes;       // lyrics targets, no blanks
  std::optional<std::string> score_path;
  std::optional<Score> score;

  bool supervised_eligible() const { return score.has_value(); }
};

struct Dataset {
  PhonemeInventory inventory;
  std::vector<ManifestEntry> entries;
};

// JSON-lines manifest: one {id, audio, phonemes, score?} object per line.
Dataset load_manifest(const std::string& manifest_path, const std::string& inventory_path);

// ---------------------------------------------------------------------------
// synthetic corpus: formant-filtered sawtooth vowels + noise-burst consonants
// ---------------------------------------------------------------------------

struct CorpusSpec {
  int n_clips = 8;
  std::vector<std::string> phonemes;  // subset of {a,e,i,o,u,k,s,t}; empty = all
  double tempo = 1.0;                 // > 1 shortens notes
  uint64_t seed = 7;
  int midi_lo = 57;
  int midi_hi = 74;
  double min_len = 2.5;
  double max_len = 12.0;
};

// The full built-in inventory (or the requested subset, blank always first).
PhonemeInventory builtin_inventory(const std::vector<std::string>& subset = {});

struct SynthClip {
  std::string id;
  AudioClip audio;
  Score score;
};

// Deterministic per seed; each clip's score is exact by construction (note
// boundaries land on the 10 ms label grid and audio is rendered from them).
std::vector<SynthClip> synth_clips(const CorpusSpec& spec, const PhonemeInventory& inv);

// Writes wav/, score/, inventory.txt and manifest.jsonl under out_dir.
void write_corpus(const CorpusSpec& spec, const std::string& out_dir);

}  // namespace svs
