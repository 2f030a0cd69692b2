#pragma once

#include "svs/data.hpp"
#include "svs/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace svs {

enum class TrainMode { Unsupervised, Supervised, SemiSupervised };

TrainMode parse_mode(const std::string& name);
std::string mode_name(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::Unsupervised;
  int64_t steps_per_cycle = 10000;
  int cycles = 3;
  double lr_init = 2.5e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  int64_t warmup_steps = 1000;
  uint64_t seed = 1;
  int effective_batch = 1;
  double grad_clip = 1.0;
  double labeled_fraction = 1.0;  // share of scored clips the supervised phase sees
  int64_t snapshot_every = 0;     // 0 disables periodic snapshots
  int64_t log_every = 50;

  void validate() const {
    require(lr_init > 0.0, Err::BadConfig, "train: lr_init must be positive");
    require(steps_per_cycle >= warmup_steps, Err::BadConfig,
            "train: steps_per_cycle must cover the warmup");
    require(cycles >= 1 && effective_batch >= 1, Err::BadConfig,
            "train: cycles and effective_batch must be >= 1");
    require(labeled_fraction > 0.0 && labeled_fraction <= 1.0, Err::BadConfig,
            "train: labeled_fraction must be in (0, 1]");
  }
};

// One annealing cycle: linear warmup 0 -> peak, then cosine peak -> peak/10.
double lr_cycle(double peak, int64_t step_in_cycle, int64_t steps_per_cycle,
                int64_t warmup_steps);

// Cosine schedule with per-cycle peak halving; constant at the final cosine
// floor once the configured cycles are exhausted.
double lr_at(const TrainConfig& cfg, int64_t step);

// Adam with bias correction; moments live inside each Param.
template <typename Scalar>
class Adam {
 public:
  Adam(double beta1 = 0.5, double beta2 = 0.9, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<Scalar>*>& params, double lr) {
    ++t_;
    const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(beta1_, static_cast<double>(t_)));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(beta2_, static_cast<double>(t_)));
    for (Param<Scalar>* p : params) {
      p->m = b1 * p->m + (Scalar(1) - b1) * p->grad;
      p->v = (b2 * p->v.array() + (Scalar(1) - b2) * p->grad.array().square()).matrix();
      p->value.array() -= static_cast<Scalar>(lr) * (p->m.array() / c1) /
                          ((p->v.array() / c2).sqrt() + static_cast<Scalar>(eps_));
    }
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
template <typename Scalar>
double clip_grad_norm(const std::vector<Param<Scalar>*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param<Scalar>* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const Scalar s = static_cast<Scalar>(max_norm / norm);
    for (Param<Scalar>* p : params) p->grad *= s;
  }
  return norm;
}

struct StepLosses {
  double total = 0.0;
  double ctc = 0.0;
  double uv = 0.0;
  double g_coarse = 0.0;
  double g_full = 0.0;
};

struct TrainerState {
  int64_t step = 0;
  int64_t adam_t = 0;
  int cycles_done = 0;  // completed annealing cycles; sets the next peak
  std::string rng_state;
};

// Single-writer training loop. The graph is rebuilt per clip; gradients
// accumulate to the effective batch, get norm-clipped, and Adam updates only
// the parameter group the phase owns (supervised phases never touch "cls.").
class Trainer {
 public:
  using StepHook = std::function<void(int64_t step, double lr, const StepLosses&)>;
  using SnapshotHook = std::function<void(int64_t step)>;

  Trainer(SvsModel<float>& model, const TrainConfig& cfg, int cycle_offset = 0);

  const TrainConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  int64_t total_steps() const { return cfg_.steps_per_cycle * cfg_.cycles; }

  double lr_now(int64_t step) const;
  bool step_is_supervised(int64_t step) const;

  // forward/backward one clip with the loss scaled by 1/effective_batch;
  // reported losses are the unscaled per-clip values
  StepLosses accumulate(const TrainClip& clip, bool supervised);

  // one optimizer step over the next effective batch
  StepLosses train_step(const std::vector<TrainClip>& clips);

  // runs from the current step to total_steps()
  void run(const std::vector<TrainClip>& clips, const StepHook& hook = {},
           const SnapshotHook& snapshot = {});

  // clip indices the phase may draw from
  std::vector<Index> phase_pool(const std::vector<TrainClip>& clips, bool supervised) const;

  TrainerState snapshot_state() const;
  void restore(const TrainerState& state);

 private:
  Index pick_clip(const std::vector<Index>& pool, int64_t consumed) const;
  int64_t phase_start_for(int64_t step) const;

  SvsModel<float>& model_;
  TrainConfig cfg_;
  int cycle_offset_ = 0;
  int64_t step_ = 0;
  Adam<float> adam_;
  Rng rng_;
};

// Continues a trained model in supervised mode: fresh annealing cycles at the
// next halved peak; Adam moments and the RNG stream carry over.
TrainerState fine_tune(SvsModel<float>& model, const TrainerState& from, const TrainConfig& base,
                       const std::vector<TrainClip>& clips, int cycles,
                       const Trainer::StepHook& hook = {},
                       const Trainer::SnapshotHook& snapshot = {});

}  // namespace svs
