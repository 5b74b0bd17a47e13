// llevc/tests/acceptance.cpp

// Copyright 2026  The llevc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// End-to-end acceptance battery. Each criterion prints exactly one PASS or
// FAIL line with its measured values; the process exits with the number of
// failed criteria. Tolerances are pinned below, next to the criterion they
// gate.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "llevc/config.hpp"
#include "llevc/eval.hpp"
#include "llevc/model.hpp"
#include "llevc/numerics.hpp"
#include "llevc/pipeline.hpp"
#include "llevc/protocol.hpp"

using namespace llevc;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kSeed = 2026;

constexpr double kGradTolerance = 1e-4;     // criterion 1 (eps 1e-5 inside)
constexpr double kGradBudget = 120.0;       // seconds
constexpr double kKldTolerance = 1e-9;      // criterion 2, absolute
constexpr double kSimilarityGap = 0.2;      // criterion 3, probability scale
constexpr double kRunBudget = 1800.0;       // criterion 3, seconds
constexpr double kDistortionRelDiff = 0.2;  // criterion 4, |a-b|/max(a,b)
constexpr double kTieGapRatio = 0.5;        // criterion 5, end/start
constexpr double kPrefTolerance = 1e-12;    // criterion 8, absolute
constexpr int kConversions = 20;            // criteria 3 and 4

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("llevc_accept_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

using Verdict = std::pair<bool, std::string>;

int report(int n, const char* title, const std::function<Verdict()>& fn) {
  bool ok = false;
  std::string detail;
  try {
    const Verdict v = fn();
    ok = v.first;
    detail = v.second;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  std::printf("criterion %d %s  %s: %s\n", n, ok ? "PASS" : "FAIL", title,
              detail.c_str());
  std::fflush(stdout);
  return ok ? 0 : 1;
}

// --- the default-scale run shared by criteria 3, 4, 5, and 6 ---

struct DefaultRun {
  std::string error;  // nonempty when the build failed
  Corpus corpus;
  Corpus transcribed;  // language-A subset the initial stage trains on
  int target = -1;
  TrainResult tr, ad, wd;
  Checkpoint unadapted;  // target registered at init, never trained
  SpeakerProbe probe;
  std::vector<const Utterance*> held;  // A-side utterances unseen in training
  double wall = 0.0;

  DefaultRun() {
    try {
      build();
    } catch (const std::exception& e) {
      error = e.what();
    }
  }

  void build() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    override_seed(cfg, kSeed);
    corpus = generate_corpus(CorpusSpec{}, kSeed);
    for (const Utterance& u : corpus.utts)
      if (u.transcribed) transcribed.utts.push_back(u);
    for (const SpeakerProfile& sp : corpus.speakers) {
      if (sp.language_id == 0)
        transcribed.speakers.push_back(sp);
      else
        target = sp.speaker_id;
    }
    std::vector<const Utterance*> target_utts;
    for (const Utterance& u : corpus.utts)
      if (u.speaker_id == target) target_utts.push_back(&u);

    const std::array<uint8_t, 32> hash = run_config_hash(cfg);
    tr = initial_train(transcribed, cfg.model, cfg.train, hash);
    ad = adapt(tr.ckpt, target_utts, cfg.adapt);
    wd = weld(ad.ckpt, target_utts, cfg.weld);

    unadapted = tr.ckpt;
    register_speaker(unadapted, target);
    unadapted.stage = Stage::adapted;
    unadapted.target_speaker_id = target;

    probe = train_speaker_probe(corpus);
    const Split split =
        split_by_utterance(transcribed, cfg.train.held_out_per_speaker);
    for (int i : split.held_out)
      held.push_back(&transcribed.utts[size_t(i)]);
    wall = seconds_since(t0);
  }
};

DefaultRun& default_run() {
  static DefaultRun r;
  if (!r.error.empty()) throw Error(r.error);
  return r;
}

// --- the small file-based pipeline shared by criteria 7 and 9 ---

const char* kSmallSpec = R"({
  "speakers_a": 3, "speakers_b": 1,
  "utts_per_speaker_a": 6, "utts_per_speaker_b": 8
})";

const char* kSmallRun = R"({
  "seed": 11,
  "model": {"max_speakers": 8},
  "train": {"step_count": 30, "eval_every": 15, "voc_step_count": 10,
            "held_out_per_speaker": 1},
  "adapt": {"step_count": 20, "eval_every": 10, "voc_step_count": 10,
            "held_out_per_speaker": 1},
  "weld":  {"step_count": 10, "eval_every": 5, "held_out_per_speaker": 1}
})";

struct SmallPipeline {
  std::string error;
  TempDir dir;
  std::string a, b;  // the two run directories

  SmallPipeline() {
    try {
      a = run_once("a");
      b = run_once("b");
    } catch (const std::exception& e) {
      error = e.what();
    }
  }

  std::string run_once(const std::string& name) {
    const std::string root = dir.file(name);
    fs::create_directories(root);
    const CorpusSpecFile spec = parse_corpus_spec(kSmallSpec);
    RunConfig cfg = parse_run_config(kSmallRun);
    const std::string corpus_dir = root + "/corpus";
    run_gen_data(spec.spec, 11, corpus_dir);
    run_train(cfg, corpus_dir, "", root + "/train.ckpt");
    run_adapt(cfg, corpus_dir, root + "/train.ckpt", root + "/adapt.ckpt");
    run_weld(cfg, corpus_dir, root + "/adapt.ckpt", root + "/weld.ckpt");
    const std::string ph = root + "/ph.txt";
    write_file_bytes(ph, "2 3\n5 2\n1 4\n");
    run_tts(root + "/weld.ckpt", ph, root + "/tts.wavb", -1, 5,
            root + "/tts.wav");
    const Corpus corpus = read_corpus(corpus_dir);
    const std::string src = root + "/src.feat";
    write_feature_blob(src, corpus.utts.front().features.frames);
    run_vc(root + "/weld.ckpt", src, root + "/vc.wavb", 5, root + "/vc.wav");
    return root;
  }
};

SmallPipeline& small_pipeline() {
  static SmallPipeline p;
  if (!p.error.empty()) throw Error(p.error);
  return p;
}

// --- criterion bodies ---

Verdict gradient_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckSummary s = run_grad_check(LossWeights{}, kSeed, 5);
  const double dt = seconds_since(t0);
  const GradCheckItem& w = s.worst();
  const bool complete = s.items.size() == 50;  // 10 losses x 5 seeds
  const bool ok =
      complete && s.all_ok() && s.tolerance == kGradTolerance &&
      dt < kGradBudget;
  return {ok, fmt("%zu checks, worst %s seed %llu rel err %.2e "
                  "(tol %.0e), %.1fs (budget %.0fs)",
                  s.items.size(), w.name.c_str(),
                  (unsigned long long)w.seed, w.report.max_rel_err,
                  kGradTolerance, dt, kGradBudget)};
}

// Closed-form KL(p||q) per dimension, accumulated independently in long
// double: 0.5 * (exp(lp-lq) + (mp-mq)^2 * exp(-lq) - 1 + lq - lp).
long double kld_oracle(const DiagGaussian& p, const DiagGaussian& q) {
  long double acc = 0.0L;
  for (int d = 0; d < p.dim(); ++d) {
    const long double mp = p.mean[size_t(d)], mq = q.mean[size_t(d)];
    const long double lp = p.log_var[size_t(d)], lq = q.log_var[size_t(d)];
    acc += 0.5L * (expl(lp - lq) + (mp - mq) * (mp - mq) * expl(-lq) -
                   1.0L + lq - lp);
  }
  return acc;
}

Verdict kld_equivalence() {
  Rng rng = Rng::substream(kSeed, 2);
  double worst = 0.0;
  int asym = 0;
  for (int i = 0; i < 1000; ++i) {
    const size_t dim = 1 + size_t(rng.range(32));
    std::vector<double> mp(dim), lp(dim), mq(dim), lq(dim);
    for (size_t d = 0; d < dim; ++d) {
      mp[d] = 2.0 * rng.normal();
      mq[d] = 2.0 * rng.normal();
      lp[d] = 6.0 * rng.uniform() - 3.0;
      lq[d] = 6.0 * rng.uniform() - 3.0;
    }
    const DiagGaussian p(mp, lp), q(mq, lq);
    const long double okl = kld_oracle(p, q);
    const long double osym = 0.5L * (okl + kld_oracle(q, p));
    worst = std::max(worst,
                     double(fabsl((long double)gaussian_kld(p, q) - okl)));
    worst = std::max(
        worst, double(fabsl((long double)symmetrized_kld(p, q) - osym)));
    if (symmetrized_kld(p, q) != symmetrized_kld(q, p)) ++asym;
  }
  const bool ok = worst <= kKldTolerance && asym == 0;
  return {ok, fmt("1000 gaussians dims 1-32, worst |diff| %.2e "
                  "(tol %.0e), swap asymmetries %d",
                  worst, kKldTolerance, asym)};
}

Verdict cross_lingual_adaptation() {
  const DefaultRun& r = default_run();
  double sim_target = 0.0, sim_source = 0.0, sim_base = 0.0;
  for (int i = 0; i < kConversions; ++i) {
    const Utterance& u = *r.held[size_t(i)];
    const uint64_t s = 0x11e5eed ^ uint64_t(3 * i);
    const InferResult vc = vc_infer(r.wd.ckpt, u.features.frames, s);
    const InferResult vb = vc_infer(r.unadapted, u.features.frames, s + 1);
    sim_target += speaker_similarity(vc.features, r.probe, r.target);
    sim_source += speaker_similarity(vc.features, r.probe, u.speaker_id);
    sim_base += speaker_similarity(vb.features, r.probe, r.target);
  }
  sim_target /= kConversions;
  sim_source /= kConversions;
  sim_base /= kConversions;
  const bool ok = sim_target - sim_source >= kSimilarityGap &&
                  sim_target > sim_base && r.wall < kRunBudget;
  return {ok, fmt("%d conversions: target %.3f source %.3f gap %.3f "
                  "(need >= %.1f), unadapted baseline %.3f, run %.0fs "
                  "(budget %.0fs)",
                  kConversions, sim_target, sim_source,
                  sim_target - sim_source, kSimilarityGap, sim_base, r.wall,
                  kRunBudget)};
}

Verdict tts_vc_consistency() {
  const DefaultRun& r = default_run();
  double tts_dist = 0.0, vc_dist = 0.0;
  for (int i = 0; i < kConversions; ++i) {
    const Utterance& u = *r.held[size_t(i)];
    const uint64_t s = 0x11e5eed ^ uint64_t(3 * i);
    const AcousticFeatures oracle =
        render_features(r.corpus.speaker(r.target), u.phonemes(), 0.0, 1);
    const InferResult tts = tts_infer(r.wd.ckpt, u.phonemes(), r.target,
                                      s + 2);
    const InferResult vc = vc_infer(r.wd.ckpt, u.features.frames, s);
    tts_dist += mel_distortion(tts.features, oracle);
    vc_dist += mel_distortion(vc.features, oracle);
  }
  tts_dist /= kConversions;
  vc_dist /= kConversions;
  const double rel =
      std::abs(tts_dist - vc_dist) / std::max(tts_dist, vc_dist);
  const bool ok = rel <= kDistortionRelDiff;
  return {ok, fmt("%d matched items: tts %.4f vc %.4f to the target oracle, "
                  "relative difference %.3f (tol %.2f)",
                  kConversions, tts_dist, vc_dist, rel, kDistortionRelDiff)};
}

Verdict tie_gap_convergence() {
  const DefaultRun& r = default_run();
  const PhaseTrace& acoustic = r.tr.report.phase("acoustic");
  LLEVC_CHECK(!acoustic.tie_gap.empty() && acoustic.steps.front() == 0,
              "acoustic trace lacks a step-0 tie gap");
  const double start = acoustic.tie_gap.front();
  const double end = acoustic.tie_gap.back();
  const bool ok = end <= kTieGapRatio * start;
  return {ok, fmt("held-out tie gap %.4f at step 0, %.4f at step %d "
                  "(ratio %.3f, need <= %.2f)",
                  start, end, acoustic.steps.back(), end / start,
                  kTieGapRatio)};
}

bool group_bits_equal(const ParamSet& a, const ParamSet& b, int group) {
  for (size_t i = 0; i < a.t.size(); ++i) {
    if (a.t[i].group != group) continue;
    const std::vector<double>& x = a.t[i].value.a;
    const std::vector<double>& y = b.t[i].value.a;
    if (x.size() != y.size() ||
        std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

bool checkpoint_bits_equal(const Checkpoint& a, const Checkpoint& b) {
  return params_bit_equal(a.params, b.params) && a.rng.s == b.rng.s &&
         a.stage == b.stage && a.config_hash == b.config_hash &&
         a.target_speaker_id == b.target_speaker_id &&
         a.speaker_ids == b.speaker_ids &&
         a.run.in_progress == b.run.in_progress && a.run.step == b.run.step &&
         a.run.phase == b.run.phase;
}

Verdict freezing_and_staging() {
  const DefaultRun& r = default_run();
  std::string fail;

  // adaptation must not move the frozen groups by a single bit
  for (const auto& [name, group] :
       {std::pair<const char*, int>{"tenc", kGroupTenc},
        {"senc", kGroupSenc},
        {"tdec", kGroupTdec}}) {
    if (!group_bits_equal(r.tr.ckpt.params, r.ad.ckpt.params, group))
      fail += fmt("%s moved during adapt; ", name);
  }

  // out-of-order stage transitions must throw
  std::vector<const Utterance*> target_utts;
  for (const Utterance& u : r.corpus.utts)
    if (u.speaker_id == r.target) target_utts.push_back(&u);
  RunConfig cfg;
  override_seed(cfg, kSeed);
  const auto rejects = [&](const char* what,
                           const std::function<void()>& op) {
    try {
      op();
      fail += fmt("%s was not rejected; ", what);
    } catch (const Error&) {
    }
  };
  rejects("adapt(adapted)",
          [&] { adapt(r.ad.ckpt, target_utts, cfg.adapt); });
  rejects("adapt(welded)",
          [&] { adapt(r.wd.ckpt, target_utts, cfg.adapt); });
  rejects("weld(initial)", [&] { weld(r.tr.ckpt, target_utts, cfg.weld); });
  rejects("weld(welded)", [&] { weld(r.wd.ckpt, target_utts, cfg.weld); });

  // save -> load round trip is bit-exact
  TempDir dir;
  save_checkpoint(dir.file("w.ckpt"), r.wd.ckpt);
  if (!checkpoint_bits_equal(load_checkpoint(dir.file("w.ckpt")), r.wd.ckpt))
    fail += "save/load changed the checkpoint; ";

  // a run interrupted at an evaluation point and resumed from the saved
  // file finishes bit-identical to the uninterrupted run (small scale)
  const CorpusSpecFile spec = parse_corpus_spec(kSmallSpec);
  RunConfig small = parse_run_config(kSmallRun);
  const Corpus corpus = generate_corpus(spec.spec, 11);
  Corpus sub;
  for (const Utterance& u : corpus.utts)
    if (u.transcribed) sub.utts.push_back(u);
  for (const SpeakerProfile& sp : corpus.speakers)
    if (sp.language_id == 0) sub.speakers.push_back(sp);
  const std::array<uint8_t, 32> hash = run_config_hash(small);
  const TrainResult whole = initial_train(sub, small.model, small.train,
                                          hash);
  for (const auto& [phase, step] : {std::pair<const char*, int>{
                                        "acoustic", 15},
                                    {"vocoder", 5}}) {
    const std::string snap = dir.file(fmt("snap_%s.ckpt", phase));
    const SnapshotHook abort_at = [&](const Checkpoint& ck,
                                      const std::string& ph, int st) {
      if (ph == phase && st >= step) {
        save_checkpoint(snap, ck);
        return false;
      }
      return true;
    };
    const TrainResult part =
        initial_train(sub, small.model, small.train, hash, abort_at);
    if (!part.ckpt.run.in_progress) {
      fail += fmt("no snapshot taken in %s; ", phase);
      continue;
    }
    const Checkpoint loaded = load_checkpoint(snap, small.model);
    const TrainResult resumed = initial_train(sub, small.model, small.train,
                                              hash, {}, &loaded);
    if (!checkpoint_bits_equal(resumed.ckpt, whole.ckpt))
      fail += fmt("resume from %s step %d diverged; ", phase, step);
  }

  const bool ok = fail.empty();
  return {ok, ok ? "frozen groups bit-identical, 4 stage rejections, "
                   "save/load and 2 resume points bit-exact"
                 : fail};
}

Verdict determinism() {
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  const SmallPipeline& p = small_pipeline();
  int files = 0;
  std::string fail;
  for (const auto& e : fs::recursive_directory_iterator(p.a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), p.a);
    const std::string other = (fs::path(p.b) / rel).string();
    if (!fs::exists(other)) {
      fail += fmt("%s missing in the second run; ", rel.c_str());
      continue;
    }
    if (read_file_bytes(e.path().string()) != read_file_bytes(other))
      fail += fmt("%s differs; ", rel.c_str());
  }
  if (files < 30) fail += fmt("only %d files produced; ", files);
  const bool ok = fail.empty();
  return {ok, ok ? fmt("two single-threaded gen-data/train/adapt/weld/tts/vc "
                       "runs produced %d byte-identical files",
                       files)
                 : fail};
}

// Exact two-sided binomial p against 0.5; all quantities are dyadic
// rationals representable exactly in long double for n <= 30.
double binomial_oracle(int a, int b) {
  const int n = a + b;
  const int lo = std::min(a, b);
  long double coef = 1.0L;
  long double cdf = 0.0L;
  const long double scale = powl(2.0L, (long double)-n);
  for (int k = 0; k <= lo; ++k) {
    if (k > 0) coef = coef * (long double)(n - k + 1) / (long double)k;
    cdf += coef * scale;
  }
  const long double p = 2.0L * cdf;
  return double(p > 1.0L ? 1.0L : p);
}

Verdict preference_statistics() {
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 30; ++n) {
    for (int a = 0; a <= n; ++a) {
      const PreferenceResult r = preference_analysis(a, n - a);
      worst = std::max(worst, std::abs(r.p_exact - binomial_oracle(a, n - a)));
      ++cases;
    }
  }
  const double p_even = preference_analysis(150, 150).p_exact;
  const double p_skew = preference_analysis(0, 10).p_exact;
  const bool ok = worst <= kPrefTolerance && p_even == 1.0 &&
                  std::abs(p_skew - 0.001953125) <= kPrefTolerance;
  return {ok, fmt("%d cases with total <= 30, worst |diff| %.2e (tol %.0e); "
                  "150/150 -> %g, 0/10 -> %.9f",
                  cases, worst, kPrefTolerance, p_even, p_skew)};
}

Verdict duration_contract() {
  const SmallPipeline& p = small_pipeline();
  const Checkpoint ckpt = load_checkpoint(p.a + "/weld.ckpt");
  const int spf = ckpt.cfg.samples_per_frame;
  Rng rng = Rng::substream(kSeed, 9);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    PhonemeSequence x;
    const int n = 1 + int(rng.range(8));
    for (int k = 0; k < n; ++k) {
      x.symbols.push_back(int(rng.range(20)));
      x.durations.push_back(1 + int(rng.range(6)));
    }
    const InferResult r = tts_infer(ckpt, x, 0, rng.next_u64());
    const int want = x.total_frames();
    if (r.features.frames.rows != want ||
        int(r.waveform.codes.size()) != want * spf ||
        r.waveform.samples_per_frame != spf)
      ++violations;
  }
  for (int i = 0; i < 100; ++i) {
    const int t = 1 + int(rng.range(60));
    Mat y(t, ckpt.cfg.feature_dim);
    for (double& v : y.a) v = rng.normal();
    const InferResult r = vc_infer(ckpt, y, rng.next_u64());
    if (r.features.frames.rows != t ||
        int(r.waveform.codes.size()) != t * spf)
      ++violations;
  }
  const bool ok = violations == 0;
  return {ok, fmt("100 tts + 100 vc random inputs, %d violations",
                  violations)};
}

}  // namespace

int main() {
  int failures = 0;
  failures += report(1, "gradient soundness", gradient_soundness);
  failures += report(2, "kld closed form", kld_equivalence);
  failures += report(3, "cross-lingual adaptation", cross_lingual_adaptation);
  failures += report(4, "tts/vc consistency", tts_vc_consistency);
  failures += report(5, "tie-gap convergence", tie_gap_convergence);
  failures += report(6, "freezing and staging", freezing_and_staging);
  failures += report(7, "determinism", determinism);
  failures += report(8, "preference statistics", preference_statistics);
  failures += report(9, "duration contract", duration_contract);
  if (failures == 0)
    std::printf("all 9 criteria passed\n");
  else
    std::printf("%d criteria FAILED\n", failures);
  return failures;
}
