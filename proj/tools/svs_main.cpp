// svs: melody-unsupervised singing voice synthesis pipeline.
//
// Subcommands: synth-corpus, prepare, train, finetune, infer, align, eval.
// Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include "svs/checkpoint.hpp"
#include "svs/image.hpp"
#include "svs/infer.hpp"
#include "svs/metrics.hpp"
#include "svs/trainer.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace svs;

namespace {

int exit_code_for(Err code) {
  switch (code) {
    case Err::BadConfig:
    case Err::SchemaViolation:
      return 1;
    case Err::MissingFile:
    case Err::UnreadableFile:
    case Err::UnsupportedEncoding:
    case Err::EmptyScore:
    case Err::InvalidSyllable:
    case Err::NoteTooShort:
    case Err::NoLabeledData:
    case Err::EmptyInput:
      return 2;
    default:
      return 3;
  }
}

// -------------------------------------------------------------------------
// run configuration: {data, model, train, eval, paths}, unknown keys rejected
// -------------------------------------------------------------------------

struct RunConfig {
  std::string manifest;
  std::string inventory;
  std::string cache_dir;

  std::string preset = "desk";  // desk | full
  ModelConfig model = ModelConfig::desk();

  TrainConfig train;
  std::vector<double> labeled_fractions;

  int gl_iterations = 60;
  double align_threshold = 0.5;

  std::string run_dir;
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), Err::BadConfig,
            where + ": unknown key '" + key + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Err::MissingFile, "cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail(Err::BadConfig, path + ": " + e.what());
  }
  reject_unknown(j, {"data", "model", "train", "eval", "paths"}, path);

  RunConfig cfg;
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"manifest", "inventory", "cache_dir"}, path + ":data");
    maybe(d, "manifest", cfg.manifest);
    maybe(d, "inventory", cfg.inventory);
    maybe(d, "cache_dir", cfg.cache_dir);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m,
                   {"preset", "d_model", "n_heads", "cls_layers", "enc_layers", "dec_layers",
                    "highway_blocks", "subsample", "ff_mult", "dropout"},
                   path + ":model");
    maybe(m, "preset", cfg.preset);
    if (cfg.preset == "full")
      cfg.model = ModelConfig{};
    else if (cfg.preset == "desk")
      cfg.model = ModelConfig::desk();
    else
      fail(Err::BadConfig, path + ": unknown model preset '" + cfg.preset + "'");
    maybe(m, "d_model", cfg.model.d_model);
    maybe(m, "n_heads", cfg.model.n_heads);
    maybe(m, "cls_layers", cfg.model.cls_layers);
    maybe(m, "enc_layers", cfg.model.enc_layers);
    maybe(m, "dec_layers", cfg.model.dec_layers);
    maybe(m, "highway_blocks", cfg.model.highway_blocks);
    maybe(m, "subsample", cfg.model.subsample);
    maybe(m, "ff_mult", cfg.model.ff_mult);
    maybe(m, "dropout", cfg.model.dropout);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t,
                   {"mode", "steps_per_cycle", "cycles", "lr_init", "beta1", "beta2", "adam_eps",
                    "warmup_steps", "seed", "effective_batch", "grad_clip", "labeled_fraction",
                    "labeled_fractions", "snapshot_every", "log_every"},
                   path + ":train");
    std::string mode = mode_name(cfg.train.mode);
    maybe(t, "mode", mode);
    cfg.train.mode = parse_mode(mode);
    maybe(t, "steps_per_cycle", cfg.train.steps_per_cycle);
    maybe(t, "cycles", cfg.train.cycles);
    maybe(t, "lr_init", cfg.train.lr_init);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "adam_eps", cfg.train.adam_eps);
    maybe(t, "warmup_steps", cfg.train.warmup_steps);
    maybe(t, "seed", cfg.train.seed);
    maybe(t, "effective_batch", cfg.train.effective_batch);
    maybe(t, "grad_clip", cfg.train.grad_clip);
    maybe(t, "labeled_fraction", cfg.train.labeled_fraction);
    maybe(t, "labeled_fractions", cfg.labeled_fractions);
    maybe(t, "snapshot_every", cfg.train.snapshot_every);
    maybe(t, "log_every", cfg.train.log_every);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    reject_unknown(e, {"gl_iterations", "align_threshold"}, path + ":eval");
    maybe(e, "gl_iterations", cfg.gl_iterations);
    maybe(e, "align_threshold", cfg.align_threshold);
  }
  if (j.contains("paths")) {
    const json& p = j["paths"];
    reject_unknown(p, {"run_dir"}, path + ":paths");
    maybe(p, "run_dir", cfg.run_dir);
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json fractions = json::array();
  for (double f : cfg.labeled_fractions) fractions.push_back(f);
  return json{
      {"data",
       {{"manifest", cfg.manifest}, {"inventory", cfg.inventory}, {"cache_dir", cfg.cache_dir}}},
      {"model", model_config_to_json(cfg.model)},
      {"train",
       {{"mode", mode_name(cfg.train.mode)},
        {"steps_per_cycle", cfg.train.steps_per_cycle},
        {"cycles", cfg.train.cycles},
        {"lr_init", cfg.train.lr_init},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"adam_eps", cfg.train.adam_eps},
        {"warmup_steps", cfg.train.warmup_steps},
        {"seed", cfg.train.seed},
        {"effective_batch", cfg.train.effective_batch},
        {"grad_clip", cfg.train.grad_clip},
        {"labeled_fraction", cfg.train.labeled_fraction},
        {"labeled_fractions", fractions},
        {"snapshot_every", cfg.train.snapshot_every},
        {"log_every", cfg.train.log_every}}},
      {"eval", {{"gl_iterations", cfg.gl_iterations}, {"align_threshold", cfg.align_threshold}}},
      {"paths", {{"run_dir", cfg.run_dir}}}};
}

std::string resolve_run_dir(const std::string& flag_value, const RunConfig& cfg,
                            const std::string& fallback_name) {
  if (!flag_value.empty()) return flag_value;
  if (!cfg.run_dir.empty()) return cfg.run_dir;
  const char* root = std::getenv("SVS_RUN_ROOT");
  return (fs::path(root ? root : "runs") / fallback_name).string();
}

// every artifact a command produces is listed here for the audit trail
class RunArtifacts {
 public:
  explicit RunArtifacts(const std::string& run_dir) : dir_(run_dir) {
    fs::create_directories(run_dir);
  }
  const std::string& dir() const { return dir_; }
  std::string path(const std::string& name, const std::string& kind) {
    entries_.push_back({{"file", name}, {"kind", kind}});
    return (fs::path(dir_) / name).string();
  }
  void flush() {
    std::ofstream f((fs::path(dir_) / "artifacts.json").string(), std::ios::trunc);
    f << json{{"artifacts", entries_}}.dump(1) << '\n';
  }

 private:
  std::string dir_;
  json entries_ = json::array();
};

void echo_config(RunArtifacts& arts, const RunConfig& cfg) {
  std::ofstream f(arts.path("config.json", "resolved-config"), std::ios::trunc);
  f << run_config_to_json(cfg).dump(1) << '\n';
}

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path) : out_(path, std::ios::trunc) {
    out_ << "step,lr,L,L_CTC,L_UV,L_G_coarse,L_G_full\n";
  }
  void row(int64_t step, double lr, const StepLosses& l) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g\n",
                  static_cast<long long>(step), lr, l.total, l.ctc, l.uv, l.g_coarse, l.g_full);
    out_ << buf;
  }

 private:
  std::ofstream out_;
};

void print_progress(int64_t step, int64_t total, double lr, const StepLosses& l) {
  std::printf("step %6lld/%lld  lr %.3e  L %.4f  (ctc %.4f  uv %.4f  gc %.4f  gf %.4f)\n",
              static_cast<long long>(step), static_cast<long long>(total), lr, l.total, l.ctc,
              l.uv, l.g_coarse, l.g_full);
  std::fflush(stdout);
}

// -------------------------------------------------------------------------
// subcommands
// -------------------------------------------------------------------------

int cmd_synth_corpus(const std::string& out_dir, int clips, uint64_t seed, double tempo,
                     const std::string& phoneme_csv, double min_len, double max_len, int midi_lo,
                     int midi_hi) {
  CorpusSpec spec;
  spec.n_clips = clips;
  spec.seed = seed;
  spec.tempo = tempo;
  spec.min_len = min_len;
  spec.max_len = max_len;
  spec.midi_lo = midi_lo;
  spec.midi_hi = midi_hi;
  if (!phoneme_csv.empty()) {
    std::istringstream is(phoneme_csv);
    std::string sym;
    while (std::getline(is, sym, ',')) spec.phonemes.push_back(sym);
  }
  write_corpus(spec, out_dir);
  Dataset ds = load_manifest(out_dir + "/manifest.jsonl", out_dir + "/inventory.txt");
  double total = 0.0;
  for (const auto& e : ds.entries) total += load_audio(e.audio_path).duration();
  std::printf("wrote %zu clips (%.1f s total) under %s\n", ds.entries.size(), total,
              out_dir.c_str());
  return 0;
}

int cmd_prepare(const std::string& manifest, const std::string& inventory,
                const std::string& cache_dir, int jobs) {
  const Dataset ds = load_manifest(manifest, inventory);
  fs::create_directories(cache_dir);

  std::vector<TrainClip> clips(ds.entries.size());
  std::vector<std::string> failures(ds.entries.size());
  PrepareStats stats;
  std::mutex stats_mu;
  std::atomic<size_t> next{0};
  const int n_jobs = std::max(1, jobs);
  std::vector<std::thread> workers;
  for (int w = 0; w < n_jobs; ++w) {
    workers.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < ds.entries.size(); i = next.fetch_add(1)) {
        try {
          PrepareStats local;
          clips[i] = prepare_clip(ds.entries[i], ds.inventory, cache_dir, 2, &local);
          std::lock_guard<std::mutex> lock(stats_mu);
          stats.computed += local.computed;
          stats.reused += local.reused;
          stats.chunk_warnings += local.chunk_warnings;
          stats.total_seconds += local.total_seconds;
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      }
    });
  }
  for (auto& t : workers) t.join();

  int failed = 0;
  for (size_t i = 0; i < failures.size(); ++i) {
    if (failures[i].empty()) continue;
    ++failed;
    std::fprintf(stderr, "error: %s: %s\n", ds.entries[i].id.c_str(), failures[i].c_str());
  }

  // duration histogram in 2 s buckets
  std::map<int, int> histogram;
  for (size_t i = 0; i < clips.size(); ++i) {
    if (!failures[i].empty()) continue;
    histogram[static_cast<int>(clips[i].frames() / 200.0 / 2.0)]++;
  }
  std::printf("prepared %zu clips (%d computed, %d cached, %d chunk warnings)\n",
              ds.entries.size() - static_cast<size_t>(failed), stats.computed, stats.reused,
              stats.chunk_warnings);
  std::printf("duration histogram:\n");
  for (const auto& [bucket, count] : histogram)
    std::printf("  %2d-%2d s: %d\n", 2 * bucket, 2 * bucket + 2, count);
  return failed == 0 ? 0 : 2;
}

struct LoadedData {
  Dataset dataset;
  std::vector<TrainClip> clips;
};

LoadedData load_training_data(const RunConfig& cfg) {
  require(!cfg.manifest.empty() && !cfg.inventory.empty(), Err::BadConfig,
          "config needs data.manifest and data.inventory");
  LoadedData data;
  data.dataset = load_manifest(cfg.manifest, cfg.inventory);
  data.clips = prepare_clips(data.dataset, cfg.cache_dir, 2);
  return data;
}

int cmd_train(RunConfig cfg, const std::string& run_dir_flag, const std::string& resume_path) {
  cfg.train.validate();
  RunArtifacts arts(resolve_run_dir(run_dir_flag, cfg, "train_" + mode_name(cfg.train.mode)));
  cfg.run_dir = arts.dir();
  echo_config(arts, cfg);

  LoadedData data = load_training_data(cfg);
  cfg.model.vocab = data.dataset.inventory.size();

  const auto snapshot_name = [](int64_t step) {
    return "snapshot_" + std::to_string(step) + ".svsc";
  };

  // semi-supervised sweeps share the unsupervised cycles and fine-tune the
  // last cycle once per labeled fraction
  if (cfg.train.mode == TrainMode::SemiSupervised && !cfg.labeled_fractions.empty()) {
    TrainConfig pre = cfg.train;
    pre.mode = TrainMode::Unsupervised;
    pre.cycles = cfg.train.cycles - 1;
    require(pre.cycles >= 1, Err::BadConfig, "semi sweep needs at least 2 cycles");
    SvsModel<float> model(cfg.model, cfg.train.seed);
    Trainer trainer(model, pre);
    TraceWriter trace(arts.path("loss_trace_pretrain.csv", "loss-trace"));
    trainer.run(data.clips, [&](int64_t step, double lr, const StepLosses& l) {
      trace.row(step, lr, l);
      if (step % cfg.train.log_every == 0) print_progress(step, trainer.total_steps(), lr, l);
    });
    const std::string pretrain =
        arts.path("unsup_pretrain.svsc", "checkpoint");
    save_checkpoint(pretrain, model, trainer.snapshot_state(), &data.dataset.inventory);

    for (double fraction : cfg.labeled_fractions) {
      TrainerState state;
      auto ft_model = load_checkpoint(pretrain, &state);
      TrainConfig ft_cfg = cfg.train;
      ft_cfg.labeled_fraction = fraction;
      const int pct = static_cast<int>(std::lround(100 * fraction));
      TraceWriter ft_trace(
          arts.path("loss_trace_f" + std::to_string(pct) + ".csv", "loss-trace"));
      TrainerState done = fine_tune(*ft_model, state, ft_cfg, data.clips, 1,
                                    [&](int64_t step, double lr, const StepLosses& l) {
                                      ft_trace.row(step, lr, l);
                                      if (step % cfg.train.log_every == 0)
                                        print_progress(step, cfg.train.steps_per_cycle, lr, l);
                                    });
      save_checkpoint(arts.path("final_f" + std::to_string(pct) + ".svsc", "checkpoint"),
                      *ft_model, done, &data.dataset.inventory);
      std::printf("fraction %d%%: checkpoint written\n", pct);
    }
    arts.flush();
    return 0;
  }

  SvsModel<float> model(cfg.model, cfg.train.seed);
  Trainer trainer(model, cfg.train);
  if (!resume_path.empty()) {
    TrainerState state;
    auto resumed = load_checkpoint(resume_path, &state);
    require(resumed->params.all().size() == model.params.all().size(), Err::BadCheckpoint,
            "resume: parameter sets differ");
    for (Param<float>* p : model.params.all()) {
      Param<float>* q = resumed->params.find(p->name);
      require(q != nullptr, Err::BadCheckpoint, "resume: missing tensor " + p->name);
      p->value = q->value;
      p->m = q->m;
      p->v = q->v;
    }
    trainer.restore(state);
    std::printf("resumed at step %lld\n", static_cast<long long>(state.step));
  }

  TraceWriter trace(arts.path("loss_trace.csv", "loss-trace"));
  trainer.run(
      data.clips,
      [&](int64_t step, double lr, const StepLosses& l) {
        trace.row(step, lr, l);
        if (step % cfg.train.log_every == 0) print_progress(step, trainer.total_steps(), lr, l);
      },
      [&](int64_t step) {
        save_checkpoint(arts.path(snapshot_name(step), "checkpoint"), model,
                        trainer.snapshot_state(), &data.dataset.inventory);
      });
  save_checkpoint(arts.path("final.svsc", "checkpoint"), model, trainer.snapshot_state(),
                  &data.dataset.inventory);
  arts.flush();
  return 0;
}

int cmd_finetune(RunConfig cfg, const std::string& run_dir_flag, const std::string& checkpoint,
                 double fraction, int cycles) {
  RunArtifacts arts(resolve_run_dir(run_dir_flag, cfg, "finetune"));
  cfg.run_dir = arts.dir();
  cfg.train.labeled_fraction = fraction;
  echo_config(arts, cfg);

  LoadedData data = load_training_data(cfg);
  TrainerState state;
  auto model = load_checkpoint(checkpoint, &state);
  TraceWriter trace(arts.path("loss_trace.csv", "loss-trace"));
  TrainerState done = fine_tune(*model, state, cfg.train, data.clips, cycles,
                                [&](int64_t step, double lr, const StepLosses& l) {
                                  trace.row(step, lr, l);
                                  if (step % cfg.train.log_every == 0)
                                    print_progress(step, cfg.train.steps_per_cycle * cycles, lr,
                                                   l);
                                });
  save_checkpoint(arts.path("final.svsc", "checkpoint"), *model, done,
                  &data.dataset.inventory);
  arts.flush();
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& score_path,
              const std::string& out_wav, const std::string& mel_image, int gl_iterations) {
  PhonemeInventory inv;
  auto model = load_checkpoint(checkpoint, nullptr, &inv);
  const Score score = Score::load(score_path, inv);
  InferenceResult result = synthesize(*model, score, inv, gl_iterations);
  save_audio(out_wav, result.audio);
  std::printf("wrote %s (%.2f s)\n", out_wav.c_str(), result.audio.duration());
  if (!mel_image.empty()) {
    // coarse stretched to the full frame rate so the two halves line up
    save_mel_pair_image(mel_image, result.coarse, result.mel.frames,
                        2 * static_cast<int>(model->config.subsample / 2));
    std::printf("wrote %s\n", mel_image.c_str());
  }
  return 0;
}

int cmd_align(const std::string& checkpoint, const std::string& audio_path,
              const std::string& out_json, const std::string& out_png, double threshold) {
  PhonemeInventory inv;
  auto model = load_checkpoint(checkpoint, nullptr, &inv);
  const AudioClip clip = load_audio(audio_path);
  const MelSpectrogram mel = melspectrogram(clip);
  const Matf probs = classify_probs(*model, mel.frames);
  const auto segments = greedy_align(probs, threshold);

  json seg_json = json::array();
  for (const AlignSegment& s : segments)
    seg_json.push_back({{"symbol", inv.symbols[static_cast<size_t>(s.symbol)]},
                        {"symbol_id", s.symbol},
                        {"begin_frame", s.begin},
                        {"end_frame", s.end},
                        {"begin_sec", static_cast<double>(s.begin) / kLabelFrameRate},
                        {"end_sec", static_cast<double>(s.end + 1) / kLabelFrameRate}});
  std::ofstream f(out_json, std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + out_json);
  f << json{{"segments", seg_json}, {"threshold", threshold}}.dump(1) << '\n';
  std::printf("wrote %s (%zu segments)\n", out_json.c_str(), segments.size());
  if (!out_png.empty()) {
    save_alignment_image(out_png, probs, segments);
    std::printf("wrote %s\n", out_png.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& inventory, const std::string& out_dir, bool bypass_synthesis,
             int gl_iterations, double threshold) {
  auto model = load_checkpoint(checkpoint, nullptr);
  const Dataset ds = load_manifest(manifest, inventory);
  require(model->config.vocab == ds.inventory.size(), Err::BadConfig,
          "eval: inventory size does not match the checkpoint vocabulary");
  RunArtifacts arts(out_dir);

  EvalReport report;
  int failures = 0;
  for (const ManifestEntry& entry : ds.entries) {
    if (!entry.score.has_value()) continue;
    try {
      const AudioClip reference = load_audio(entry.audio_path);
      const AudioClip synth = bypass_synthesis
                                  ? reference
                                  : synthesize(*model, *entry.score, ds.inventory, gl_iterations)
                                        .audio;
      ClipEval eval;
      eval.id = entry.id;
      eval.mcd_db = mcd(reference, synth);
      const F0RmseResult f0 = f0_rmse(estimate_f0(reference), estimate_f0(synth));
      eval.f0_rmse_hz = f0.hz;
      eval.f0_rmse_cents = f0.cents;
      eval.voiced_overlap_ratio = f0.voiced_overlap_ratio;
      const Matf probs = classify_probs(*model, melspectrogram(reference).frames);
      eval.pers_percent = pers(greedy_align(probs, threshold), *entry.score);
      report.clips.push_back(eval);
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "eval %s failed: %s\n", entry.id.c_str(), e.what());
    }
  }
  require(!report.clips.empty(), Err::EmptyInput, "eval: no scored clips evaluated");
  report.save_json(arts.path("eval.json", "eval-report"));
  report.save_csv(arts.path("eval.csv", "eval-report"));
  arts.flush();
  const ClipEval agg = report.aggregate();
  std::printf("clips %zu  MCD %.3f dB  F0 RMSE %.2f Hz (%.1f cents)  PERS %.2f%%\n",
              report.clips.size(), agg.mcd_db, agg.f0_rmse_hz, agg.f0_rmse_cents,
              agg.pers_percent);
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melody-unsupervised singing voice synthesis"};
  app.require_subcommand(1);

  // synth-corpus
  auto* sc = app.add_subcommand("synth-corpus", "generate the synthetic corpus");
  std::string sc_out = "corpus";
  int sc_clips = 8;
  uint64_t sc_seed = 7;
  double sc_tempo = 1.0, sc_min = 2.5, sc_max = 12.0;
  int sc_midi_lo = 57, sc_midi_hi = 74;
  std::string sc_phonemes;
  sc->add_option("--out", sc_out, "output directory")->required();
  sc->add_option("--clips", sc_clips, "number of clips");
  sc->add_option("--seed", sc_seed, "corpus seed");
  sc->add_option("--tempo", sc_tempo, "tempo factor (>1 shortens notes)");
  sc->add_option("--phonemes", sc_phonemes, "comma-separated subset of a,e,i,o,u,k,s,t");
  sc->add_option("--min-len", sc_min, "minimum clip seconds");
  sc->add_option("--max-len", sc_max, "maximum clip seconds");
  sc->add_option("--midi-lo", sc_midi_lo, "lowest note");
  sc->add_option("--midi-hi", sc_midi_hi, "highest note");

  // prepare
  auto* pr = app.add_subcommand("prepare", "extract and cache mel/F0 features");
  std::string pr_manifest, pr_inventory, pr_cache = "cache";
  int pr_jobs = static_cast<int>(std::thread::hardware_concurrency());
  pr->add_option("--manifest", pr_manifest, "manifest.jsonl")->required();
  pr->add_option("--inventory", pr_inventory, "inventory.txt")->required();
  pr->add_option("--cache", pr_cache, "cache directory");
  pr->add_option("--jobs", pr_jobs, "parallel extraction jobs");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_run_dir, tr_mode, tr_resume, tr_fractions;
  int64_t tr_spc = -1;
  int64_t tr_seed = -1;
  tr->add_option("--config", tr_config, "run config JSON")->required();
  tr->add_option("--run-dir", tr_run_dir, "output directory (overrides config)");
  tr->add_option("--mode", tr_mode, "unsupervised|supervised|semi_supervised");
  tr->add_option("--steps-per-cycle", tr_spc, "override steps per cycle");
  tr->add_option("--seed", tr_seed, "override training seed");
  tr->add_option("--labeled-fractions", tr_fractions, "semi sweep, e.g. 0.25,0.5,1.0");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // finetune
  auto* ft = app.add_subcommand("finetune", "supervised fine-tuning from a checkpoint");
  std::string ft_config, ft_run_dir, ft_checkpoint;
  double ft_fraction = 1.0;
  int ft_cycles = 1;
  ft->add_option("--config", ft_config, "run config JSON")->required();
  ft->add_option("--checkpoint", ft_checkpoint, "starting checkpoint")->required();
  ft->add_option("--run-dir", ft_run_dir, "output directory");
  ft->add_option("--fraction", ft_fraction, "labeled fraction");
  ft->add_option("--cycles", ft_cycles, "annealing cycles to run");

  // infer
  auto* in = app.add_subcommand("infer", "synthesize audio from a score");
  std::string in_checkpoint, in_score, in_wav, in_png;
  int in_gl = 60;
  in->add_option("--checkpoint", in_checkpoint)->required();
  in->add_option("--score", in_score, "score JSON")->required();
  in->add_option("--out", in_wav, "output wav")->required();
  in->add_option("--mel-image", in_png, "coarse/full mel comparison PNG");
  in->add_option("--gl-iterations", in_gl, "Griffin-Lim iterations");

  // align
  auto* al = app.add_subcommand("align", "phoneme alignment for a clip");
  std::string al_checkpoint, al_audio, al_json, al_png;
  double al_threshold = 0.5;
  al->add_option("--checkpoint", al_checkpoint)->required();
  al->add_option("--audio", al_audio, "input wav")->required();
  al->add_option("--out-json", al_json, "segment JSON")->required();
  al->add_option("--out-png", al_png, "probability heatmap PNG");
  al->add_option("--threshold", al_threshold, "probability threshold");

  // eval
  auto* ev = app.add_subcommand("eval", "synthesize scored clips and report metrics");
  std::string ev_checkpoint, ev_manifest, ev_inventory, ev_out = "eval_out";
  bool ev_bypass = false;
  int ev_gl = 60;
  double ev_threshold = 0.5;
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--inventory", ev_inventory)->required();
  ev->add_option("--out-dir", ev_out, "report directory");
  ev->add_flag("--bypass-synthesis", ev_bypass, "score the reference against itself");
  ev->add_option("--gl-iterations", ev_gl, "Griffin-Lim iterations");
  ev->add_option("--threshold", ev_threshold, "alignment threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sc->parsed())
      return cmd_synth_corpus(sc_out, sc_clips, sc_seed, sc_tempo, sc_phonemes, sc_min, sc_max,
                              sc_midi_lo, sc_midi_hi);
    if (pr->parsed()) return cmd_prepare(pr_manifest, pr_inventory, pr_cache, pr_jobs);
    if (tr->parsed()) {
      RunConfig cfg = load_run_config(tr_config);
      if (!tr_mode.empty()) cfg.train.mode = parse_mode(tr_mode);
      if (tr_spc > 0) cfg.train.steps_per_cycle = tr_spc;
      if (tr_seed >= 0) cfg.train.seed = static_cast<uint64_t>(tr_seed);
      if (!tr_fractions.empty()) {
        cfg.labeled_fractions.clear();
        std::istringstream is(tr_fractions);
        std::string tok;
        while (std::getline(is, tok, ',')) cfg.labeled_fractions.push_back(std::stod(tok));
      }
      return cmd_train(cfg, tr_run_dir, tr_resume);
    }
    if (ft->parsed())
      return cmd_finetune(load_run_config(ft_config), ft_run_dir, ft_checkpoint, ft_fraction,
                          ft_cycles);
    if (in->parsed()) return cmd_infer(in_checkpoint, in_score, in_wav, in_png, in_gl);
    if (al->parsed()) return cmd_align(al_checkpoint, al_audio, al_json, al_png, al_threshold);
    if (ev->parsed())
      return cmd_eval(ev_checkpoint, ev_manifest, ev_inventory, ev_out, ev_bypass, ev_gl,
                      ev_threshold);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
