#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svs/checkpoint.hpp"
#include "svs/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

using namespace svs;

namespace {

ModelConfig tiny_model_config(int vocab = 5) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.cls_layers = 1;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.highway_blocks = 1;
  cfg.ff_mult = 2;
  cfg.dropout = 0.0;
  cfg.vocab = vocab;
  return cfg;
}

TrainClip fake_clip(const std::string& id, Index T, int vocab, uint64_t seed,
                    bool with_score = true) {
  Rng rng(seed);
  TrainClip clip;
  clip.id = id;
  clip.mel.resize(T, 80);
  for (Index i = 0; i < T; ++i)
    for (Index j = 0; j < 80; ++j) clip.mel(i, j) = static_cast<float>(rng.uniform());
  for (int k = 0; k < 3; ++k)
    clip.targets.push_back(1 + static_cast<int>(rng.uniform_int(0, vocab - 2)));
  const Index T_ds = T / 2;
  for (Index t = 0; t < T_ds; ++t) {
    const bool v = rng.uniform() < 0.8;
    clip.voiced.push_back(v);
    clip.pseudo_pitch.push_back(v ? 60 + static_cast<int>(rng.uniform_int(0, 5)) : 0);
  }
  if (with_score) {
    clip.has_score = true;
    for (Index t = 0; t < T_ds; ++t) {
      clip.label_phonemes.push_back(1 + static_cast<int>(rng.uniform_int(0, vocab - 2)));
      clip.label_pitch.push_back(60 + static_cast<int>(rng.uniform_int(0, 5)));
    }
  }
  return clip;
}

TrainConfig fast_config(TrainMode mode, int64_t spc = 4, int cycles = 3) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.steps_per_cycle = spc;
  cfg.cycles = cycles;
  cfg.warmup_steps = 1;
  cfg.seed = 5;
  return cfg;
}

std::map<std::string, Matf> grads_snapshot(const SvsModel<float>& model) {
  std::map<std::string, Matf> out;
  for (const Param<float>* p : model.params.all()) out[p->name] = p->grad;
  return out;
}

}  // namespace

TEST_CASE("lr schedule closed forms") {
  TrainConfig cfg;
  cfg.steps_per_cycle = 10000;
  cfg.warmup_steps = 1000;
  cfg.lr_init = 2.5e-4;

  CHECK(lr_at(cfg, 0) == 0.0);
  CHECK(lr_at(cfg, 1000) == 2.5e-4);            // cycle-0 warmup end, exact
  CHECK(lr_at(cfg, 11000) == 1.25e-4);          // cycle-1 warmup end, halved
  CHECK(lr_at(cfg, 21000) == 0.625e-4);         // cycle-2
  // cosine midpoint of cycle 0: peak * (1 + 1/10) / 2
  const int64_t mid = 1000 + (10000 - 1000) / 2;
  CHECK(lr_at(cfg, mid) == doctest::Approx(1.375e-4).epsilon(1e-12));
  // after three cycles: constant at the final floor
  CHECK(lr_at(cfg, 30000) == doctest::Approx(0.625e-4 / 10.0).epsilon(1e-15));
  CHECK(lr_at(cfg, 99999) == lr_at(cfg, 30000));

  // continuity inside a cycle: no jump larger than the local slope allows
  for (int64_t s = 1; s < 10000; ++s) {
    const double a = lr_at(cfg, s - 1), b = lr_at(cfg, s);
    CHECK(std::abs(b - a) < 3e-7);
  }
}

TEST_CASE("adam matches the textbook recursion on one parameter") {
  ParamStore<double> store;
  Param<double>& w = store.add("w", 1, 1);
  w.value(0, 0) = 0.5;
  Adam<double> adam(0.5, 0.9, 1e-8);

  double m = 0.0, v = 0.0, x = 0.5;
  const double lr = 1e-2;
  for (int t = 1; t <= 5; ++t) {
    const double grad = 2.0 * x;  // d/dx of x^2
    w.grad(0, 0) = 2.0 * w.value(0, 0);
    adam.step({&w}, lr);

    m = 0.5 * m + 0.5 * grad;
    v = 0.9 * v + 0.1 * grad * grad;
    const double mhat = m / (1.0 - std::pow(0.5, t));
    const double vhat = v / (1.0 - std::pow(0.9, t));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(w.value(0, 0) == doctest::Approx(x).epsilon(1e-12));
    w.zero_grad();
  }
}

TEST_CASE("gradient accumulation equals the k-sized batch") {
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1), fake_clip("b", 32, 5, 2)};

  TrainConfig cfg = fast_config(TrainMode::Unsupervised);
  cfg.effective_batch = 2;
  Trainer trainer(model, cfg);
  trainer.accumulate(clips[0], false);
  trainer.accumulate(clips[1], false);
  auto accumulated = grads_snapshot(model);
  model.params.zero_grads();

  // same two clips as two unscaled single passes, averaged by hand
  TrainConfig cfg1 = cfg;
  cfg1.effective_batch = 1;
  Trainer single(model, cfg1);
  single.accumulate(clips[0], false);
  auto g1 = grads_snapshot(model);
  model.params.zero_grads();
  single.accumulate(clips[1], false);
  auto g2 = grads_snapshot(model);
  model.params.zero_grads();

  for (const auto& [name, acc] : accumulated) {
    const Matf manual = 0.5f * (g1[name] + g2[name]);
    const float denom = std::max(1e-6f, manual.cwiseAbs().maxCoeff());
    CHECK((acc - manual).cwiseAbs().maxCoeff() / denom < 1e-5f);
  }
}

TEST_CASE("supervised steps leave every classifier parameter bitwise unchanged") {
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1), fake_clip("b", 32, 5, 2)};

  std::map<std::string, Matf> before;
  for (const Param<float>* p : model.classifier_params()) before[p->name] = p->value;

  Trainer trainer(model, fast_config(TrainMode::Supervised, 8, 1));
  for (int i = 0; i < 8; ++i) trainer.train_step(clips);

  for (const Param<float>* p : model.classifier_params())
    CHECK((p->value - before[p->name]).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("unsupervised loss decomposes as L = L_C + L_G") {
  SvsModel<float> model(tiny_model_config(), 7);
  TrainClip clip = fake_clip("a", 24, 5, 1);
  Trainer trainer(model, fast_config(TrainMode::Unsupervised));
  const StepLosses l = trainer.accumulate(clip, false);
  CHECK(l.total ==
        doctest::Approx(l.ctc + l.uv + l.g_coarse + l.g_full).epsilon(1e-6));
  CHECK(l.uv >= 0.0);
  CHECK(l.ctc > 0.0);
}

TEST_CASE("every classifier parameter receives gradient on an unsupervised step") {
  SvsModel<float> model(tiny_model_config(), 7);
  TrainClip clip = fake_clip("a", 32, 5, 3);
  Trainer trainer(model, fast_config(TrainMode::Unsupervised));
  trainer.accumulate(clip, false);
  for (const Param<float>* p : model.classifier_params()) {
    INFO(p->name);
    CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("semi-supervised mode switches phase at the final cycle") {
  SvsModel<float> model(tiny_model_config(), 7);
  Trainer trainer(model, fast_config(TrainMode::SemiSupervised, 10, 3));
  CHECK(!trainer.step_is_supervised(0));
  CHECK(!trainer.step_is_supervised(19));
  CHECK(trainer.step_is_supervised(20));
  CHECK(trainer.step_is_supervised(29));
}

TEST_CASE("supervised mode requires scored clips") {
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1, /*with_score=*/false)};
  Trainer trainer(model, fast_config(TrainMode::Supervised));
  CHECK_THROWS_AS(trainer.train_step(clips), Error);
  try {
    trainer.train_step(clips);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoLabeledData);
  }
}

TEST_CASE("epoch ordering is a permutation and deterministic per seed") {
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips;
  for (int i = 0; i < 5; ++i) clips.push_back(fake_clip("c" + std::to_string(i), 24, 5, 10 + i));

  TrainConfig cfg = fast_config(TrainMode::Unsupervised, 5, 1);
  Trainer a(model, cfg);
  auto pool = a.phase_pool(clips, false);
  CHECK(pool.size() == 5);

  SvsModel<float> model_b(tiny_model_config(), 7);
  Trainer b(model_b, cfg);
  std::set<Index> seen;
  for (int64_t consumed = 0; consumed < 5; ++consumed) {
    // private pick order is observable through identical training traces; here
    // we check pools agree across trainers with the same seed
    CHECK(a.phase_pool(clips, false) == b.phase_pool(clips, false));
    seen.insert(pool[static_cast<size_t>(consumed)]);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("same seed gives an identical loss trace") {
  auto run_trace = [] {
    SvsModel<float> model(tiny_model_config(), 7);
    std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1), fake_clip("b", 32, 5, 2)};
    Trainer trainer(model, fast_config(TrainMode::Unsupervised, 3, 1));
    std::vector<double> trace;
    trainer.run(clips, [&](int64_t, double, const StepLosses& l) { trace.push_back(l.total); });
    return trace;
  };
  const auto t1 = run_trace(), t2 = run_trace();
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);
}

TEST_CASE("checkpoint round-trip reproduces forward bitwise and state exactly") {
  namespace fs = std::filesystem;
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1)};
  Trainer trainer(model, fast_config(TrainMode::Unsupervised, 4, 1));
  for (int i = 0; i < 3; ++i) trainer.train_step(clips);

  const std::string path = (fs::temp_directory_path() / "svs_t_ckpt.svsc").string();
  save_checkpoint(path, model, trainer.snapshot_state());

  TrainerState state;
  auto loaded = load_checkpoint(path, &state);
  std::remove(path.c_str());
  CHECK(state.step == 3);
  CHECK(state.adam_t == 3);

  for (const Param<float>* p : model.params.all()) {
    const Param<float>* q = loaded->params.find(p->name);
    REQUIRE(q != nullptr);
    CHECK((p->value - q->value).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((p->m - q->m).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((p->v - q->v).cwiseAbs().maxCoeff() == 0.0f);
  }

  Graph<float> g1, g2;
  auto out1 = model.classifier->forward(g1, g1.input(clips[0].mel)).probs;
  auto out2 = loaded->classifier->forward(g2, g2.input(clips[0].mel)).probs;
  CHECK((out1.value() - out2.value()).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("resuming from a snapshot reproduces the remaining loss trace") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "svs_t_resume.svsc").string();
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1), fake_clip("b", 32, 5, 2)};
  const TrainConfig cfg = fast_config(TrainMode::Unsupervised, 6, 1);

  // straight run, snapshotting at step 3
  std::vector<double> full_trace;
  {
    SvsModel<float> model(tiny_model_config(), 7);
    Trainer trainer(model, cfg);
    while (trainer.step() < 6) {
      if (trainer.step() == 3) save_checkpoint(path, model, trainer.snapshot_state());
      full_trace.push_back(trainer.train_step(clips).total);
    }
  }
  // resumed run
  std::vector<double> resumed_trace;
  {
    TrainerState state;
    auto model = load_checkpoint(path, &state);
    Trainer trainer(*model, cfg);
    trainer.restore(state);
    while (trainer.step() < 6) resumed_trace.push_back(trainer.train_step(clips).total);
  }
  std::remove(path.c_str());
  REQUIRE(resumed_trace.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(resumed_trace[i] == full_trace[i + 3]);
}

TEST_CASE("fine_tune runs a fresh supervised cycle at the next halved peak") {
  SvsModel<float> model(tiny_model_config(), 7);
  std::vector<TrainClip> clips = {fake_clip("a", 24, 5, 1), fake_clip("b", 32, 5, 2)};
  TrainConfig cfg = fast_config(TrainMode::Unsupervised, 4, 1);
  Trainer trainer(model, cfg);
  trainer.run(clips);
  TrainerState state = trainer.snapshot_state();
  CHECK(state.cycles_done == 1);

  std::map<std::string, Matf> cls_before;
  for (const Param<float>* p : model.classifier_params()) cls_before[p->name] = p->value;

  std::vector<double> lrs;
  TrainerState after = fine_tune(model, state, cfg, clips, 1,
                                 [&](int64_t, double lr, const StepLosses&) { lrs.push_back(lr); });
  CHECK(after.cycles_done == 2);
  REQUIRE(lrs.size() == 4);
  // warmup end reaches exactly half the original peak
  CHECK(lrs[1] == doctest::Approx(cfg.lr_init / 2.0).epsilon(1e-15));
  for (const Param<float>* p : model.classifier_params())
    CHECK((p->value - cls_before[p->name]).cwiseAbs().maxCoeff() == 0.0f);

  CHECK_THROWS_AS(fine_tune(model, state, cfg, {}, 1), Error);
}

TEST_CASE("mode names parse both ways") {
  CHECK(parse_mode("unsupervised") == TrainMode::Unsupervised);
  CHECK(parse_mode("supervised") == TrainMode::Supervised);
  CHECK(parse_mode("semi_supervised") == TrainMode::SemiSupervised);
  CHECK(mode_name(TrainMode::SemiSupervised) == "semi_supervised");
  CHECK_THROWS_AS(parse_mode("bogus"), Error);
}
