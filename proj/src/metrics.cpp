#include "svs/metrics.hpp"

#include "svs/mel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace svs {

using nlohmann::json;

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMcdConst = 6.141851463713754;  // 10 * sqrt(2) / ln(10)
}  // namespace

Matd mel_cepstra(const AudioClip& clip, int n_coeffs) {
  require(clip.samples.size() > 0, Err::EmptyInput, "mel_cepstra: empty clip");
  const Matd mel = mel_magnitude(clip);  // T x 80 linear magnitudes
  const Index T = mel.rows(), B = mel.cols();
  Matd cep(T, n_coeffs);
  for (Index t = 0; t < T; ++t) {
    for (int d = 1; d <= n_coeffs; ++d) {
      double acc = 0.0;
      for (Index b = 0; b < B; ++b)
        acc += std::log(std::max(mel(t, b), 1e-8)) *
               std::cos(kPi * d * (static_cast<double>(b) + 0.5) / static_cast<double>(B));
      cep(t, d - 1) = acc;
    }
  }
  return cep;
}

double mcd_from_cepstra(const Matd& ref, const Matd& syn) {
  require(ref.rows() > 0 && syn.rows() > 0, Err::EmptyInput, "mcd: empty cepstra");
  require(ref.cols() == syn.cols(), Err::ShapeMismatch, "mcd: coefficient counts differ");
  const Index T = std::min(ref.rows(), syn.rows());
  double acc = 0.0;
  for (Index t = 0; t < T; ++t) acc += kMcdConst * (ref.row(t) - syn.row(t)).norm();
  return acc / static_cast<double>(T);
}

double mcd(const AudioClip& reference, const AudioClip& synthesized) {
  return mcd_from_cepstra(mel_cepstra(reference), mel_cepstra(synthesized));
}

F0RmseResult f0_rmse(const PitchContour& ref, const PitchContour& syn) {
  require(ref.frame_rate == syn.frame_rate, Err::LengthMismatch,
          "f0_rmse: contours use different frame rates");
  const Index T = std::min(ref.frames(), syn.frames());
  double sq_hz = 0.0, sq_cents = 0.0;
  Index both = 0, either = 0;
  for (Index t = 0; t < T; ++t) {
    const bool rv = ref.voiced[static_cast<size_t>(t)];
    const bool sv = syn.voiced[static_cast<size_t>(t)];
    if (rv || sv) ++either;
    if (rv && sv) {
      ++both;
      const double d = syn.f0_hz(t) - ref.f0_hz(t);
      sq_hz += d * d;
      const double cents = 1200.0 * std::log2(syn.f0_hz(t) / ref.f0_hz(t));
      sq_cents += cents * cents;
    }
  }
  require(both > 0, Err::NoVoicedOverlap, "f0_rmse: no frame is voiced in both contours");
  F0RmseResult out;
  out.hz = std::sqrt(sq_hz / static_cast<double>(both));
  out.cents = std::sqrt(sq_cents / static_cast<double>(both));
  out.voiced_overlap_ratio =
      either > 0 ? static_cast<double>(both) / static_cast<double>(either) : 0.0;
  return out;
}

Index levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<Index> row(m + 1);
  for (size_t j = 0; j <= m; ++j) row[j] = static_cast<Index>(j);
  for (size_t i = 1; i <= n; ++i) {
    Index diag = row[0];
    row[0] = static_cast<Index>(i);
    for (size_t j = 1; j <= m; ++j) {
      const Index subst = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      diag = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
    }
  }
  return row[m];
}

double pers(const std::vector<AlignSegment>& segments, const Score& score,
            double frame_rate_ds) {
  require(!score.notes.empty(), Err::EmptyScore, "pers: empty score");
  Index total_distance = 0;
  Index total_length = 0;
  for (const Note& note : score.notes) {
    const Index start = round_frames(note.onset * frame_rate_ds);
    const Index end = start + round_frames(note.duration * frame_rate_ds);
    std::vector<int> predicted;
    for (const AlignSegment& seg : segments) {
      const Index mid = (seg.begin + seg.end) / 2;
      if (mid < start || mid >= end) continue;
      if (predicted.empty() || predicted.back() != seg.symbol) predicted.push_back(seg.symbol);
    }
    total_distance += levenshtein(predicted, note.phonemes);
    total_length += static_cast<Index>(note.phonemes.size());
  }
  return 100.0 * static_cast<double>(total_distance) / static_cast<double>(total_length);
}

ClipEval EvalReport::aggregate() const {
  ClipEval agg;
  agg.id = "aggregate";
  if (clips.empty()) return agg;
  for (const ClipEval& c : clips) {
    agg.mcd_db += c.mcd_db;
    agg.f0_rmse_hz += c.f0_rmse_hz;
    agg.f0_rmse_cents += c.f0_rmse_cents;
    agg.pers_percent += c.pers_percent;
    agg.voiced_overlap_ratio += c.voiced_overlap_ratio;
  }
  const double n = static_cast<double>(clips.size());
  agg.mcd_db /= n;
  agg.f0_rmse_hz /= n;
  agg.f0_rmse_cents /= n;
  agg.pers_percent /= n;
  agg.voiced_overlap_ratio /= n;
  return agg;
}

namespace {

json eval_to_json(const ClipEval& c) {
  return json{{"id", c.id},
              {"mcd_db", c.mcd_db},
              {"f0_rmse_hz", c.f0_rmse_hz},
              {"f0_rmse_cents", c.f0_rmse_cents},
              {"pers_percent", c.pers_percent},
              {"voiced_overlap_ratio", c.voiced_overlap_ratio}};
}

}  // namespace

void EvalReport::save_json(const std::string& path) const {
  json per_clip = json::array();
  for (const ClipEval& c : clips) per_clip.push_back(eval_to_json(c));
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f << json{{"clips", per_clip}, {"aggregate", eval_to_json(aggregate())}}.dump(1) << '\n';
}

void EvalReport::save_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f << "id,mcd_db,f0_rmse_hz,f0_rmse_cents,pers_percent,voiced_overlap_ratio\n";
  auto row = [&f](const ClipEval& c) {
    f << c.id << ',' << c.mcd_db << ',' << c.f0_rmse_hz << ',' << c.f0_rmse_cents << ','
      << c.pers_percent << ',' << c.voiced_overlap_ratio << '\n';
  };
  for (const ClipEval& c : clips) row(c);
  row(aggregate());
}

}  // namespace svs
