#include "svs/pitch.hpp"

#include "svs/binio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace svs {

namespace {

// median of the voiced neighbors of frame i within a centered window
double local_median(const Vecd& f0, const std::vector<bool>& voiced, Index i, int width) {
  std::vector<double> vals;
  const Index lo = std::max<Index>(0, i - width / 2);
  const Index hi = std::min<Index>(f0.size() - 1, i + width / 2);
  for (Index j = lo; j <= hi; ++j)
    if (voiced[static_cast<size_t>(j)]) vals.push_back(f0(j));
  if (vals.empty()) return f0(i);
  std::nth_element(vals.begin(), vals.begin() + static_cast<long>(vals.size() / 2), vals.end());
  return vals[vals.size() / 2];
}

}  // namespace

PitchContour estimate_f0(const AudioClip& clip, double frame_rate, const PitchOptions& opt) {
  require(clip.sample_rate == kSampleRate, Err::BadConfig,
          "estimate_f0: expected " + std::to_string(kSampleRate) + " Hz input");
  const Index sr = clip.sample_rate;
  const Index hop = static_cast<Index>(std::lround(sr / frame_rate));
  const Index win = opt.window;
  const Index tau_min = std::max<Index>(2, static_cast<Index>(sr / opt.fmax));
  const Index tau_max = static_cast<Index>(std::ceil(sr / opt.fmin));
  const Index span = win - tau_max;  // fixed correlation length for all lags
  require(span > 0, Err::BadConfig, "estimate_f0: window too short for fmin");

  const Index n = clip.samples.size();
  const Index T = n >= win ? 1 + (n - win) / hop : 0;
  PitchContour out;
  out.frame_rate = frame_rate;
  out.f0_hz = Vecd::Zero(T);
  out.voiced.assign(static_cast<size_t>(T), false);

  const Vecd x = clip.samples.cast<double>();
  Vecd diff(tau_max + 1);
  Vecd cmndf(tau_max + 1);
  for (Index t = 0; t < T; ++t) {
    const Index base = t * hop;
    if (rms_db_at(clip, base + win / 2, win) < opt.rms_gate_db) continue;

    auto head = x.segment(base, span);
    diff(0) = 0.0;
    double running = 0.0;
    cmndf(0) = 1.0;
    for (Index tau = 1; tau <= tau_max; ++tau) {
      diff(tau) = (head - x.segment(base + tau, span)).squaredNorm();
      running += diff(tau);
      cmndf(tau) = running > 0.0 ? diff(tau) * static_cast<double>(tau) / running : 1.0;
    }

    // absolute threshold: first deep dip, walked down to its local minimum;
    // fall back to the global minimum when nothing dips that far
    Index tau = 0;
    for (Index c = tau_min; c <= tau_max; ++c) {
      if (cmndf(c) < opt.search_threshold) {
        tau = c;
        while (tau + 1 <= tau_max && cmndf(tau + 1) < cmndf(tau)) ++tau;
        break;
      }
    }
    if (tau == 0) {
      tau = tau_min;
      for (Index c = tau_min + 1; c <= tau_max; ++c)
        if (cmndf(c) < cmndf(tau)) tau = c;
    }
    // voicing needs a genuinely periodic frame at the chosen lag
    if (1.0 - cmndf(tau) <= opt.periodicity_threshold) continue;

    double tau_est = static_cast<double>(tau);
    if (tau > tau_min && tau < tau_max) {
      const double a = cmndf(tau - 1), b = cmndf(tau), c = cmndf(tau + 1);
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) tau_est += 0.5 * (a - c) / denom;
    }
    const double f0 = std::clamp(static_cast<double>(sr) / tau_est, opt.fmin, opt.fmax);
    out.f0_hz(t) = f0;
    out.voiced[static_cast<size_t>(t)] = true;
  }

  // median filter over voiced runs smooths isolated octave slips
  Vecd smoothed = out.f0_hz;
  for (Index t = 0; t < T; ++t)
    if (out.voiced[static_cast<size_t>(t)])
      smoothed(t) = local_median(out.f0_hz, out.voiced, t, opt.median_width);
  out.f0_hz = std::move(smoothed);
  return out;
}

double hz_to_midi(double f0_hz) {
  require(f0_hz > 0.0, Err::NonPositiveF0,
          "hz_to_midi: f0 must be positive, got " + std::to_string(f0_hz));
  return 69.0 + 12.0 * std::log2(f0_hz / 440.0);
}

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

namespace {

// strict majority of the block's source frames; ties are unvoiced
bool block_voiced(const PitchContour& c, Index begin, Index len) {
  Index count = 0;
  for (Index i = begin; i < begin + len; ++i)
    if (c.voiced[static_cast<size_t>(i)]) ++count;
  return 2 * count > len;
}

}  // namespace

PitchTokenSeq quantize_contour(const PitchContour& contour, Index downsample) {
  require(downsample >= 1, Err::BadConfig, "quantize_contour: downsample must be >= 1");
  const Index T = contour.frames();
  PitchTokenSeq out;
  for (Index b = 0; b * downsample < T; ++b) {
    const Index begin = b * downsample;
    const Index len = std::min(downsample, T - begin);
    if (!block_voiced(contour, begin, len)) {
      out.tokens.push_back(kRestToken);
      continue;
    }
    std::vector<double> vals;
    for (Index i = begin; i < begin + len; ++i)
      if (contour.voiced[static_cast<size_t>(i)]) vals.push_back(contour.f0_hz(i));
    std::nth_element(vals.begin(), vals.begin() + static_cast<long>(vals.size() / 2), vals.end());
    const double midi = hz_to_midi(vals[vals.size() / 2]);
    const int token = static_cast<int>(std::clamp<Index>(round_frames(midi), kMidiMin, kMidiMax));
    out.tokens.push_back(token);
  }
  return out;
}

std::vector<bool> voiced_mask(const PitchContour& contour, Index downsample) {
  require(downsample >= 1, Err::BadConfig, "voiced_mask: downsample must be >= 1");
  const Index T = contour.frames();
  std::vector<bool> out;
  for (Index b = 0; b * downsample < T; ++b) {
    const Index begin = b * downsample;
    const Index len = std::min(downsample, T - begin);
    out.push_back(block_voiced(contour, begin, len));
  }
  return out;
}

void save_contour(const std::string& path, const PitchContour& contour) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  write_magic(f, "F0C1");
  const Index T = contour.frames();
  write_u32(f, static_cast<uint32_t>(T));
  for (Index i = 0; i < T; ++i) write_f32(f, static_cast<float>(contour.f0_hz(i)));
  for (Index i = 0; i < T; ++i)
    f.put(contour.voiced[static_cast<size_t>(i)] ? '\1' : '\0');
}

PitchContour load_contour(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::UnreadableFile, "cannot open " + path);
  check_magic(f, "F0C1", path);
  const uint32_t T = read_u32(f);
  PitchContour out;
  out.f0_hz = Vecd(T);
  out.voiced.assign(T, false);
  for (uint32_t i = 0; i < T; ++i) out.f0_hz(i) = read_f32(f);
  for (uint32_t i = 0; i < T; ++i) out.voiced[i] = f.get() != 0;
  require(f.good(), Err::UnreadableFile, path + ": truncated contour");
  return out;
}

}  // namespace svs
