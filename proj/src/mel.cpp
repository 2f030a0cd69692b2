#include "svs/mel.hpp"

#include "svs/binio.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace svs {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vecd hann_window(int n) {
  Vecd w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

using CVec = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 1>;
using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// rows = frames, cols = fft/2+1
CMat stft(const Vecd& x, const MelConfig& cfg) {
  const Index n = x.size();
  const Index T = mel_frame_count(n, cfg);
  const Index bins = cfg.fft_size / 2 + 1;
  const Vecd win = hann_window(cfg.fft_size);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  CMat out(T, bins);
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  std::vector<std::complex<double>> spec;
  for (Index t = 0; t < T; ++t) {
    for (int i = 0; i < cfg.fft_size; ++i)
      frame[static_cast<size_t>(i)] = x(t * cfg.hop + i) * win(i);
    fft.fwd(spec, frame);
    for (Index b = 0; b < bins; ++b) out(t, b) = spec[static_cast<size_t>(b)];
  }
  return out;
}

// weighted overlap-add inverse with squared-window normalization
Vecd istft(const CMat& spec, const MelConfig& cfg) {
  const Index T = spec.rows();
  const Index n = cfg.fft_size + (T - 1) * cfg.hop;
  const Vecd win = hann_window(cfg.fft_size);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Vecd out = Vecd::Zero(n);
  Vecd wsum = Vecd::Zero(n);
  std::vector<std::complex<double>> sp(static_cast<size_t>(cfg.fft_size / 2 + 1));
  std::vector<double> frame;
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < spec.cols(); ++b) sp[static_cast<size_t>(b)] = spec(t, b);
    fft.inv(frame, sp);
    for (int i = 0; i < cfg.fft_size; ++i) {
      out(t * cfg.hop + i) += frame[static_cast<size_t>(i)] * win(i);
      wsum(t * cfg.hop + i) += win(i) * win(i);
    }
  }
  // samples with negligible window coverage (clip edges) are unrecoverable;
  // zero them rather than dividing by a vanishing weight
  for (Index i = 0; i < n; ++i) out(i) = wsum(i) > 1e-2 ? out(i) / wsum(i) : 0.0;
  return out;
}

// Hann window sum; magnitudes are divided by this so a full-scale sine sits
// near 0 dBFS and the [-100, 0] dB clamp is meaningful.
double window_gain(const MelConfig& cfg) { return 0.5 * cfg.fft_size; }

Matd linear_mel_from_stft(const CMat& spec, const Matd& fb, const MelConfig& cfg) {
  Matd mag(spec.rows(), spec.cols());
  const double inv_gain = 1.0 / window_gain(cfg);
  for (Index t = 0; t < spec.rows(); ++t)
    for (Index b = 0; b < spec.cols(); ++b) mag(t, b) = std::abs(spec(t, b)) * inv_gain;
  return mag * fb.transpose();  // T x mel_bins
}

}  // namespace

Index mel_frame_count(Index n_samples, const MelConfig& cfg) {
  require(n_samples >= cfg.fft_size, Err::TooShort,
          "melspectrogram: need at least " + std::to_string(cfg.fft_size) + " samples, got " +
              std::to_string(n_samples));
  return 1 + (n_samples - cfg.fft_size) / cfg.hop;
}

Matd mel_filterbank(const MelConfig& cfg) {
  const Index bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  Vecd edges(cfg.mel_bins + 2);
  for (Index i = 0; i < edges.size(); ++i)
    edges(i) = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.mel_bins + 1));
  Matd fb = Matd::Zero(cfg.mel_bins, bins);
  for (Index m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges(m), center = edges(m + 1), right = edges(m + 2);
    for (Index b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * kSampleRate / cfg.fft_size;
      double w = 0.0;
      if (f > left && f < right)
        w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      fb(m, b) = w;
    }
  }
  return fb;
}

double db_to_unit(double db, const MelConfig& cfg) {
  const double clamped = std::clamp(db, cfg.db_floor, cfg.db_ceil);
  return (clamped - cfg.db_floor) / (cfg.db_ceil - cfg.db_floor);
}

double unit_to_db(double unit, const MelConfig& cfg) {
  return cfg.db_floor + unit * (cfg.db_ceil - cfg.db_floor);
}

Matd mel_magnitude(const AudioClip& clip, const MelConfig& cfg) {
  require(clip.sample_rate == kSampleRate, Err::BadConfig,
          "mel_magnitude: expected " + std::to_string(kSampleRate) + " Hz input");
  const CMat spec = stft(clip.samples.cast<double>(), cfg);
  return linear_mel_from_stft(spec, mel_filterbank(cfg), cfg);
}

MelSpectrogram melspectrogram(const AudioClip& clip, const MelConfig& cfg) {
  const Matd mel = mel_magnitude(clip, cfg);
  MelSpectrogram out;
  out.frame_hop = cfg.hop;
  out.frame_rate = static_cast<double>(kSampleRate) / cfg.hop;
  out.frames.resize(mel.rows(), mel.cols());
  for (Index t = 0; t < mel.rows(); ++t)
    for (Index b = 0; b < mel.cols(); ++b) {
      const double db = 20.0 * std::log10(mel(t, b) + cfg.amp_floor);
      out.frames(t, b) = static_cast<float>(db_to_unit(db, cfg));
    }
  return out;
}

AudioClip invert_mel(const MelSpectrogram& mel, int iterations, const MelConfig& cfg) {
  require(iterations >= 1, Err::BadConfig, "invert_mel: iterations must be >= 1");
  const Index T = mel.frames.rows();
  const Index bins = cfg.fft_size / 2 + 1;

  // de-normalize back to linear mel amplitude
  Matd amp(T, cfg.mel_bins);
  for (Index t = 0; t < T; ++t)
    for (Index b = 0; b < cfg.mel_bins; ++b) {
      const double db = unit_to_db(mel.frames(t, b), cfg);
      amp(t, b) = std::max(0.0, std::pow(10.0, db / 20.0) - cfg.amp_floor);
    }

  // NNLS pseudo-inverse of the filterbank via multiplicative updates
  const Matd fb = mel_filterbank(cfg);          // M x bins
  const Matd num = fb.transpose() * amp.transpose();  // bins x T
  Matd S = num;                                 // nonnegative init
  for (int it = 0; it < 40; ++it) {
    const Matd den = fb.transpose() * (fb * S);
    S = S.cwiseProduct(num.cwiseQuotient(den.array().max(1e-12).matrix()));
  }

  // Griffin-Lim with momentum, back in un-normalized STFT units
  const double momentum = 0.99;
  const Matd mag = S.transpose() * window_gain(cfg);
  CMat phase = CMat::Ones(T, bins);
  CMat prev = CMat::Zero(T, bins);
  for (int it = 0; it < iterations; ++it) {
    CMat spec(T, bins);
    for (Index t = 0; t < T; ++t)
      for (Index b = 0; b < bins; ++b) spec(t, b) = mag(t, b) * phase(t, b);
    const Vecd x = istft(spec, cfg);
    const CMat estimate = stft(x, cfg);
    for (Index t = 0; t < T; ++t)
      for (Index b = 0; b < bins; ++b) {
        const std::complex<double> p =
            estimate(t, b) - (momentum / (1.0 + momentum)) * prev(t, b);
        const double a = std::abs(p);
        phase(t, b) = a > 1e-12 ? p / a : std::complex<double>(1.0, 0.0);
      }
    prev = estimate;
  }
  CMat final_spec(T, bins);
  for (Index t = 0; t < T; ++t)
    for (Index b = 0; b < bins; ++b) final_spec(t, b) = mag(t, b) * phase(t, b);
  Vecd x = istft(final_spec, cfg);

  AudioClip out;
  out.sample_rate = kSampleRate;
  const Index n_out = std::min<Index>(x.size(), T * cfg.hop);
  out.samples = x.head(n_out).cast<float>();
  const float peak = out.samples.size() ? out.samples.cwiseAbs().maxCoeff() : 0.0f;
  if (peak > 1.0f) out.samples /= peak;
  return out;
}

void save_mel(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  write_magic(f, "MELS");
  write_u32(f, 1);
  write_u32(f, static_cast<uint32_t>(mel.frames.rows()));
  write_u32(f, static_cast<uint32_t>(mel.frames.cols()));
  write_f32_array(f, mel.frames.data(), static_cast<size_t>(mel.frames.size()));
}

MelSpectrogram load_mel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::UnreadableFile, "cannot open " + path);
  check_magic(f, "MELS", path);
  const uint32_t version = read_u32(f);
  require(version == 1, Err::UnreadableFile, path + ": unsupported MELS version");
  const uint32_t T = read_u32(f);
  const uint32_t bins = read_u32(f);
  require(bins == kMelBins, Err::UnreadableFile, path + ": expected 80 mel bins");
  MelSpectrogram mel;
  mel.frames.resize(T, bins);
  read_f32_array(f, mel.frames.data(), static_cast<size_t>(mel.frames.size()));
  require(f.good(), Err::UnreadableFile, path + ": truncated mel data");
  return mel;
}

Vecd fft_magnitude(const Vecd& frame) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  const Vecd win = hann_window(static_cast<int>(frame.size()));
  std::vector<double> x(static_cast<size_t>(frame.size()));
  for (Index i = 0; i < frame.size(); ++i) x[static_cast<size_t>(i)] = frame(i) * win(i);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  Vecd mag(static_cast<Index>(spec.size()));
  for (size_t i = 0; i < spec.size(); ++i) mag(static_cast<Index>(i)) = std::abs(spec[i]);
  return mag;
}

}  // namespace svs
