#include "svs/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace svs {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip load_audio(const std::string& path, int target_rate) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::UnreadableFile, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 44, Err::UnreadableFile, path + ": truncated WAV header");
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          Err::UnreadableFile, path + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = read_u32le(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(tag, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      format = read_u16le(bytes.data() + body);
      channels = read_u16le(bytes.data() + body + 2);
      rate = read_u32le(bytes.data() + body + 4);
      bits = read_u16le(bytes.data() + body + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);
  }
  require(rate > 0 && data_off > 0, Err::UnreadableFile, path + ": missing fmt/data chunk");
  require(channels == 1 || channels == 2, Err::UnsupportedEncoding,
          path + ": " + std::to_string(channels) + " channels (mono/stereo only)");
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  require(pcm16 || f32, Err::UnsupportedEncoding,
          path + ": format " + std::to_string(format) + "/" + std::to_string(bits) +
              " bit (PCM16 or float32 only)");

  const size_t bytes_per = (pcm16 ? 2u : 4u) * channels;
  const size_t n = data_len / bytes_per;
  Vecf mono(static_cast<Index>(n));
  for (size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + data_off + i * bytes_per;
    float v = 0.0f;
    for (int c = 0; c < channels; ++c) {
      if (pcm16) {
        int16_t s;
        std::memcpy(&s, p + 2 * c, 2);
        v += static_cast<float>(s) / 32768.0f;
      } else {
        float s;
        std::memcpy(&s, p + 4 * c, 4);
        v += s;
      }
    }
    mono(static_cast<Index>(i)) = v / static_cast<float>(channels);
  }
  require(mono.size() > 0, Err::UnreadableFile, path + ": empty data chunk");

  AudioClip clip{std::move(mono), static_cast<int>(rate)};
  clip = resample(clip, target_rate);
  const float peak = clip.samples.cwiseAbs().maxCoeff();
  if (peak > 1.0f) clip.samples /= peak;
  return clip;
}

void save_audio(const std::string& path, const AudioClip& clip, WavEncoding enc) {
  const Index n = clip.samples.size();
  const uint16_t bytes_per = enc == WavEncoding::Pcm16 ? 2 : 4;
  std::string out;
  out.reserve(44 + static_cast<size_t>(n) * bytes_per);
  out += "RIFF";
  put_u32le(out, 36 + static_cast<uint32_t>(n) * bytes_per);
  out += "WAVEfmt ";
  put_u32le(out, 16);
  put_u16le(out, enc == WavEncoding::Pcm16 ? 1 : 3);
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(clip.sample_rate));
  put_u32le(out, static_cast<uint32_t>(clip.sample_rate) * bytes_per);
  put_u16le(out, bytes_per);
  put_u16le(out, static_cast<uint16_t>(8 * bytes_per));
  out += "data";
  put_u32le(out, static_cast<uint32_t>(n) * bytes_per);
  for (Index i = 0; i < n; ++i) {
    const float v = std::clamp(clip.samples(i), -1.0f, 1.0f);
    if (enc == WavEncoding::Pcm16) {
      const int16_t s = static_cast<int16_t>(std::lrint(v * 32767.0f));
      put_u16le(out, static_cast<uint16_t>(s));
    } else {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32le(out, u);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0, Err::BadConfig, "resample: target rate must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const Index n_in = clip.samples.size();
  const Index n_out = static_cast<Index>(std::llround(n_in * ratio));
  const double cutoff = 0.95 * std::min(1.0, ratio);  // relative to input Nyquist
  const int taps = 32;

  Vecf out(n_out);
  for (Index i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const Index j0 = std::max<Index>(0, static_cast<Index>(std::ceil(t)) - taps);
    const Index j1 = std::min<Index>(n_in - 1, static_cast<Index>(std::floor(t)) + taps);
    double acc = 0.0;
    for (Index j = j0; j <= j1; ++j) {
      const double d = t - static_cast<double>(j);
      const double x = kPi * cutoff * d;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
      const double hann = 0.5 + 0.5 * std::cos(kPi * d / taps);
      acc += clip.samples(j) * cutoff * sinc * hann;
    }
    out(i) = static_cast<float>(acc);
  }
  return AudioClip{std::move(out), target_rate};
}

double rms_db_at(const AudioClip& clip, Index center, Index window) {
  const Index a = std::max<Index>(0, center - window / 2);
  const Index b = std::min<Index>(clip.samples.size(), center + window / 2);
  if (b <= a) return -200.0;
  const double ms = clip.samples.segment(a, b - a).template cast<double>().squaredNorm() /
                    static_cast<double>(b - a);
  return 20.0 * std::log10(std::sqrt(ms) + 1e-10);
}

std::vector<AudioChunk> chunk_audio(const AudioClip& clip, const ChunkOptions& opt) {
  require(opt.min_len < opt.max_len, Err::BadConfig, "chunk_audio: min_len must be < max_len");
  const Index n = clip.samples.size();
  const Index sr = clip.sample_rate;
  const Index win = sr / 50;  // 20 ms RMS window
  const Index hop = sr / 100;
  require(n > 0, Err::EmptyInput, "chunk_audio: empty clip");

  // frame-level silence gate
  const Index n_frames = (n + hop - 1) / hop;
  std::vector<bool> silent(static_cast<size_t>(n_frames));
  for (Index t = 0; t < n_frames; ++t)
    silent[static_cast<size_t>(t)] = rms_db_at(clip, t * hop + win / 2, win) < opt.silence_db;

  // silence regions lasting >= min_silence, as sample ranges
  struct Region {
    Index begin, end;
  };
  std::vector<Region> regions;
  const Index min_sil_samples = static_cast<Index>(opt.min_silence * sr);
  for (Index t = 0; t < n_frames;) {
    if (!silent[static_cast<size_t>(t)]) {
      ++t;
      continue;
    }
    Index t2 = t;
    while (t2 < n_frames && silent[static_cast<size_t>(t2)]) ++t2;
    const Index begin = t * hop;
    const Index end = std::min(n, t2 * hop);
    if (end - begin >= min_sil_samples) regions.push_back({begin, end});
    t = t2;
  }

  // cut points strictly inside each silent region, leaving a small margin of
  // natural silence on both neighbors
  std::vector<std::pair<Index, Index>> spans;  // contiguous candidate spans
  Index cursor = 0;
  bool pending = true;
  for (const Region& r : regions) {
    const Index margin = std::min<Index>(sr / 20, (r.end - r.begin) / 4);
    const Index end_cut = r.begin + margin;
    const Index start_cut = r.end - margin;
    if (r.begin <= cursor + hop) {
      // leading silence: drop it entirely
      cursor = start_cut;
      continue;
    }
    spans.emplace_back(cursor, end_cut);
    cursor = start_cut;
    pending = r.end < n;
  }
  if (pending && cursor < n) spans.emplace_back(cursor, n);

  const auto len_sec = [&](const std::pair<Index, Index>& s) {
    return static_cast<double>(s.second - s.first) / sr;
  };

  // greedy merge so chunks reach min_len without exceeding max_len; merged
  // spans keep the silence between them (the chunk must stay contiguous)
  std::vector<std::pair<Index, Index>> merged;
  for (size_t i = 0; i < spans.size();) {
    std::pair<Index, Index> cur = spans[i++];
    while (len_sec(cur) < opt.min_len && i < spans.size()) {
      const double joined =
          static_cast<double>(spans[i].second - cur.first) / sr;
      if (joined > opt.max_len && len_sec(cur) >= 1.0) break;
      cur.second = spans[i++].second;
    }
    merged.push_back(cur);
  }
  // a trailing remainder below 1 s folds into the previous chunk
  if (merged.size() >= 2 && len_sec(merged.back()) < 1.0) {
    merged[merged.size() - 2].second = merged.back().second;
    merged.pop_back();
  }

  std::vector<AudioChunk> chunks;
  for (const auto& s : merged) {
    AudioChunk ch;
    ch.start_sample = s.first;
    ch.clip.sample_rate = static_cast<int>(sr);
    ch.clip.samples = clip.samples.segment(s.first, s.second - s.first);
    ch.oversized = len_sec(s) > opt.max_len;
    ch.undersized = len_sec(s) < opt.min_len;
    chunks.push_back(std::move(ch));
  }
  return chunks;
}

}  // namespace svs
