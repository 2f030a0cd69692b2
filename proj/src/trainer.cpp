#include "svs/trainer.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>

namespace svs {

TrainMode parse_mode(const std::string& name) {
  if (name == "unsupervised") return TrainMode::Unsupervised;
  if (name == "supervised") return TrainMode::Supervised;
  if (name == "semi_supervised") return TrainMode::SemiSupervised;
  fail(Err::BadConfig, "unknown training mode '" + name +
                           "' (expected unsupervised|supervised|semi_supervised)");
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Unsupervised: return "unsupervised";
    case TrainMode::Supervised: return "supervised";
    case TrainMode::SemiSupervised: return "semi_supervised";
  }
  return "?";
}

double lr_cycle(double peak, int64_t step_in_cycle, int64_t steps_per_cycle,
                int64_t warmup_steps) {
  if (warmup_steps > 0 && step_in_cycle <= warmup_steps)
    return peak * static_cast<double>(step_in_cycle) / static_cast<double>(warmup_steps);
  const double floor = peak / 10.0;
  const double phase = static_cast<double>(step_in_cycle - warmup_steps) /
                       static_cast<double>(steps_per_cycle - warmup_steps);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

double lr_at(const TrainConfig& cfg, int64_t step) {
  require(step >= 0, Err::BadConfig, "lr_at: negative step");
  const int64_t total = cfg.steps_per_cycle * cfg.cycles;
  if (step >= total) {
    const double final_peak = cfg.lr_init / std::pow(2.0, cfg.cycles - 1);
    return final_peak / 10.0;
  }
  const int64_t cycle = step / cfg.steps_per_cycle;
  const double peak = cfg.lr_init / std::pow(2.0, static_cast<double>(cycle));
  return lr_cycle(peak, step % cfg.steps_per_cycle, cfg.steps_per_cycle, cfg.warmup_steps);
}

Trainer::Trainer(SvsModel<float>& model, const TrainConfig& cfg, int cycle_offset)
    : model_(model),
      cfg_(cfg),
      cycle_offset_(cycle_offset),
      adam_(cfg.beta1, cfg.beta2, cfg.adam_eps),
      rng_(cfg.seed) {
  cfg_.validate();
}

double Trainer::lr_now(int64_t step) const {
  const int64_t cycle = step / cfg_.steps_per_cycle;
  const double peak = cfg_.lr_init / std::pow(2.0, static_cast<double>(cycle_offset_ + cycle));
  return lr_cycle(peak, step % cfg_.steps_per_cycle, cfg_.steps_per_cycle, cfg_.warmup_steps);
}

bool Trainer::step_is_supervised(int64_t step) const {
  switch (cfg_.mode) {
    case TrainMode::Unsupervised: return false;
    case TrainMode::Supervised: return true;
    case TrainMode::SemiSupervised:
      return step >= cfg_.steps_per_cycle * (cfg_.cycles - 1);
  }
  return false;
}

int64_t Trainer::phase_start_for(int64_t step) const {
  if (cfg_.mode == TrainMode::SemiSupervised) {
    const int64_t sup_start = cfg_.steps_per_cycle * (cfg_.cycles - 1);
    if (step >= sup_start) return sup_start;
  }
  return 0;
}

std::vector<Index> Trainer::phase_pool(const std::vector<TrainClip>& clips,
                                       bool supervised) const {
  std::vector<Index> pool;
  if (supervised) {
    for (Index i = 0; i < static_cast<Index>(clips.size()); ++i)
      if (clips[static_cast<size_t>(i)].has_score) pool.push_back(i);
    const auto scored = pool.size();
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(cfg_.labeled_fraction * static_cast<double>(scored))));
    if (keep < pool.size()) pool.resize(keep);  // first clips in manifest order
    require(!pool.empty(), Err::NoLabeledData, "supervised phase: no clips carry a score");
  } else {
    for (Index i = 0; i < static_cast<Index>(clips.size()); ++i) {
      const TrainClip& c = clips[static_cast<size_t>(i)];
      // CTC-infeasible clips are skipped up front (too short for the targets)
      if (c.frames() / model_.config.subsample >= ctc_min_frames(c.targets)) pool.push_back(i);
    }
    require(!pool.empty(), Err::EmptyInput, "unsupervised phase: no feasible clips");
  }
  return pool;
}

Index Trainer::pick_clip(const std::vector<Index>& pool, int64_t consumed) const {
  const int64_t n = static_cast<int64_t>(pool.size());
  const int64_t epoch = consumed / n;
  const int64_t pos = consumed % n;
  std::vector<Index> order(pool.begin(), pool.end());
  Rng shuffle_rng(cfg_.seed ^ (0x9E3779B97F4A7C15ull * static_cast<uint64_t>(epoch + 1)));
  shuffle_rng.shuffle(order);
  return order[static_cast<size_t>(pos)];
}

StepLosses Trainer::accumulate(const TrainClip& clip, bool supervised) {
  Graph<float> g;
  const Index D = model_.config.subsample;
  StepLosses out;
  Tensor<float> total;
  if (supervised) {
    // hard-path generator training from the score labels; the classifier is
    // not part of this graph at all
    const Index T_ds = clip.mel.rows() / D;
    const Index L = std::min<Index>(T_ds, static_cast<Index>(clip.label_phonemes.size()));
    require(L >= 1, Err::LengthMismatch, clip.id + ": no overlapping labeled frames");
    const std::vector<int> ph(clip.label_phonemes.begin(), clip.label_phonemes.begin() + L);
    const std::vector<int> pitch(clip.label_pitch.begin(), clip.label_pitch.begin() + L);
    auto pair = model_.generator->forward_hard(g, ph, pitch, true, &rng_);
    const Matf target = clip.mel.topRows(D * L);
    auto loss = generator_loss<float>(g, pair, target, D);
    out.g_coarse = loss.coarse_l1.value()(0, 0);
    out.g_full = loss.full_l1.value()(0, 0);
    total = loss.total;
  } else {
    auto cls = model_.classifier->forward(g, g.input(clip.mel), true, &rng_);
    auto l_ctc = ctc_loss(cls.log_probs, clip.targets);
    Tensor<float> l_uv;
    {
      const char* form = std::getenv("UV_FORM");
      const char* wstr = std::getenv("UV_WEIGHT");
      float w = wstr ? std::atof(wstr) : 1.0f;
      if (form && std::string(form) == "log") {
        // -log(1 - p_blank) over voiced frames, mean
        Index n_voiced = 0;
        const Index T = cls.probs.rows(), V = cls.probs.cols();
        Matf mask = Matf::Zero(T, V);
        for (Index t = 0; t < T; ++t) if (clip.voiced[t]) { mask(t,0) = 1.0f; ++n_voiced; }
        if (n_voiced == 0) { l_uv = g.constant(Matf::Zero(1,1)); }
        else {
          auto ones = g.constant(Matf::Ones(T, V));
          auto masked_p = mul(cls.probs, g.constant(mask));
          // log via custom composition: use mean of -log(1-x) ~ implemented via tensor ops
          // quick hack: custom node
          const Matf& P = masked_p.value();
          Matf val(1,1); double acc = 0;
          for (Index t = 0; t < T; ++t) if (clip.voiced[t]) acc += -std::log(1.0 - P(t,0) + 1e-6);
          val(0,0) = acc / n_voiced * w;
          auto& gr = g;
          l_uv = gr.make(std::move(val), gr.needs_grad(masked_p), [masked_p, voiced=clip.voiced, n_voiced, w](Graph<float>& gg, size_t self) {
            if (!gg.needs_grad(masked_p)) return;
            const float up = gg.grad_of(self)(0,0);
            const Matf& P = gg.value(masked_p);
            Matf& gp = gg.grad(masked_p);
            for (Index t = 0; t < P.rows(); ++t)
              if (voiced[t]) gp(t,0) += up * w / (n_voiced * (1.0f - P(t,0) + 1e-6f));
          });
        }
      } else {
        l_uv = scale(unvoice_penalty(cls.probs, clip.voiced), w);
      }
    }
    auto pair = model_.generator->forward_soft(g, cls.probs, clip.pseudo_pitch, true, &rng_);
    auto gl = generator_loss<float>(g, pair, clip.mel, D);
    out.ctc = l_ctc.value()(0, 0);
    out.uv = l_uv.value()(0, 0);
    out.g_coarse = gl.coarse_l1.value()(0, 0);
    out.g_full = gl.full_l1.value()(0, 0);
    total = add(add(l_ctc, l_uv), gl.total);
  }
  out.total = total.value()(0, 0);
  g.backward(scale(total, 1.0f / static_cast<float>(cfg_.effective_batch)));
  return out;
}

StepLosses Trainer::train_step(const std::vector<TrainClip>& clips) {
  const bool supervised = step_is_supervised(step_);
  const std::vector<Index> pool = phase_pool(clips, supervised);
  const int64_t consumed0 = (step_ - phase_start_for(step_)) * cfg_.effective_batch;

  StepLosses avg;
  for (int b = 0; b < cfg_.effective_batch; ++b) {
    const Index idx = pick_clip(pool, consumed0 + b);
    const StepLosses one = accumulate(clips[static_cast<size_t>(idx)], supervised);
    avg.total += one.total / cfg_.effective_batch;
    avg.ctc += one.ctc / cfg_.effective_batch;
    avg.uv += one.uv / cfg_.effective_batch;
    avg.g_coarse += one.g_coarse / cfg_.effective_batch;
    avg.g_full += one.g_full / cfg_.effective_batch;
  }

  const auto group = supervised ? model_.generator_params() : model_.params.all();
  clip_grad_norm(group, cfg_.grad_clip);
  adam_.step(group, lr_now(step_));
  model_.params.zero_grads();
  ++step_;
  return avg;
}

void Trainer::run(const std::vector<TrainClip>& clips, const StepHook& hook,
                  const SnapshotHook& snapshot) {
  require(!clips.empty(), Err::EmptyInput, "run: empty dataset");
  while (step_ < total_steps()) {
    const int64_t step = step_;
    const double lr = lr_now(step);
    const StepLosses losses = train_step(clips);
    if (hook) hook(step, lr, losses);
    if (snapshot && cfg_.snapshot_every > 0 && (step + 1) % cfg_.snapshot_every == 0 &&
        step + 1 < total_steps())
      snapshot(step + 1);
  }
}

TrainerState Trainer::snapshot_state() const {
  TrainerState s;
  s.step = step_;
  s.adam_t = adam_.t();
  s.cycles_done = cycle_offset_ + static_cast<int>(step_ / cfg_.steps_per_cycle);
  s.rng_state = rng_.save_state();
  return s;
}

void Trainer::restore(const TrainerState& state) {
  step_ = state.step;
  adam_.set_t(state.adam_t);
  if (!state.rng_state.empty()) rng_.load_state(state.rng_state);
}

TrainerState fine_tune(SvsModel<float>& model, const TrainerState& from, const TrainConfig& base,
                       const std::vector<TrainClip>& clips, int cycles,
                       const Trainer::StepHook& hook, const Trainer::SnapshotHook& snapshot) {
  TrainConfig cfg = base;
  cfg.mode = TrainMode::Supervised;
  cfg.cycles = cycles;
  Trainer trainer(model, cfg, from.cycles_done);
  TrainerState resume;
  resume.step = 0;
  resume.adam_t = from.adam_t;
  resume.rng_state = from.rng_state;
  trainer.restore(resume);
  trainer.run(clips, hook, snapshot);
  return trainer.snapshot_state();
}

}  // namespace svs
