#include "svs/data.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace svs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::UnreadableFile, "cannot hash " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  return h;
}

struct CacheKey {
  uintmax_t size = 0;
  int64_t mtime = 0;
  uint64_t hash = 0;
};

CacheKey stat_key(const std::string& path) {
  CacheKey key;
  key.size = fs::file_size(path);
  key.mtime = fs::last_write_time(path).time_since_epoch().count();
  return key;
}

// per-clip sidecar with the source fingerprint
bool cache_fresh(const std::string& meta_path, const std::string& audio_path, CacheKey* key_out) {
  std::ifstream f(meta_path);
  if (!f.good()) return false;
  json j;
  try {
    f >> j;
  } catch (const json::exception&) {
    return false;
  }
  if (!j.contains("size") || !j.contains("mtime") || !j.contains("hash")) return false;
  CacheKey cur = stat_key(audio_path);
  if (j["size"].get<uintmax_t>() == cur.size && j["mtime"].get<int64_t>() == cur.mtime) {
    if (key_out) *key_out = cur;
    return true;
  }
  cur.hash = fnv1a_file(audio_path);
  if (key_out) *key_out = cur;
  return j["hash"].get<uint64_t>() == cur.hash;
}

void write_meta(const std::string& meta_path, CacheKey key, const std::string& audio_path) {
  if (key.hash == 0) key.hash = fnv1a_file(audio_path);
  std::ofstream f(meta_path, std::ios::trunc);
  f << json{{"size", key.size}, {"mtime", key.mtime}, {"hash", key.hash}}.dump() << '\n';
}

}  // namespace

TrainClip prepare_clip(const ManifestEntry& entry, const PhonemeInventory& inv,
                       const std::string& cache_dir, Index subsample, PrepareStats* stats) {
  TrainClip clip;
  clip.id = entry.id;
  clip.targets = entry.phonemes;

  MelSpectrogram mel;
  PitchContour contour;
  bool loaded = false;
  std::string mel_path, f0_path, meta_path;
  if (!cache_dir.empty()) {
    fs::create_directories(cache_dir);
    mel_path = (fs::path(cache_dir) / (entry.id + ".mels")).string();
    f0_path = (fs::path(cache_dir) / (entry.id + ".f0c")).string();
    meta_path = (fs::path(cache_dir) / (entry.id + ".meta.json")).string();
    if (fs::exists(mel_path) && fs::exists(f0_path) && cache_fresh(meta_path, entry.audio_path, nullptr)) {
      mel = load_mel(mel_path);
      contour = load_contour(f0_path);
      loaded = true;
      if (stats) ++stats->reused;
    }
  }
  if (!loaded) {
    AudioClip audio = load_audio(entry.audio_path, kSampleRate);
    if (stats) {
      stats->total_seconds += audio.duration();
      auto chunks = chunk_audio(audio);
      if (chunks.size() > 1 || (chunks.size() == 1 && (chunks[0].oversized || chunks[0].undersized)))
        ++stats->chunk_warnings;
      ++stats->computed;
    }
    mel = melspectrogram(audio);
    contour = estimate_f0(audio, mel.frame_rate);
    if (!cache_dir.empty()) {
      save_mel(mel_path, mel);
      save_contour(f0_path, contour);
      write_meta(meta_path, stat_key(entry.audio_path), entry.audio_path);
    }
  }

  // trim to a multiple of D so the coarse/full frame laws are exact
  const Index T = (mel.frames.rows() / subsample) * subsample;
  clip.mel = mel.frames.topRows(T);
  contour.f0_hz.conservativeResize(T);
  contour.voiced.resize(static_cast<size_t>(T));
  clip.pseudo_pitch = quantize_contour(contour, subsample).tokens;
  clip.voiced = voiced_mask(contour, subsample);

  if (entry.score.has_value()) {
    clip.has_score = true;
    clip.score = *entry.score;
    FrameLabels labels = expand_score(clip.score, inv, kLabelFrameRate);
    clip.label_phonemes = std::move(labels.phoneme_ids);
    clip.label_pitch = std::move(labels.pitch_tokens);
  }
  return clip;
}

std::vector<TrainClip> prepare_clips(const Dataset& dataset, const std::string& cache_dir,
                                     Index subsample, PrepareStats* stats) {
  std::vector<TrainClip> clips;
  clips.reserve(dataset.entries.size());
  for (const ManifestEntry& entry : dataset.entries)
    clips.push_back(prepare_clip(entry, dataset.inventory, cache_dir, subsample, stats));
  return clips;
}

}  // namespace svs
