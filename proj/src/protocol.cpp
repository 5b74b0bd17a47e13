// llevc/src/protocol.cpp

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

#include "llevc/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "llevc/common.hpp"

namespace llevc {

void StageConfig::validate() const {
  LLEVC_CHECK(std::isfinite(learning_rate) && learning_rate > 0.0,
              "learning_rate must be positive, got " << learning_rate);
  LLEVC_CHECK(step_count >= 1, "step_count must be >= 1, got " << step_count);
  LLEVC_CHECK(batch_size >= 1, "batch_size must be >= 1, got " << batch_size);
  LLEVC_CHECK(eval_every >= 1, "eval_every must be >= 1, got " << eval_every);
  LLEVC_CHECK(held_out_per_speaker >= 0,
              "held_out_per_speaker must be >= 0, got " << held_out_per_speaker);
  LLEVC_CHECK(std::isfinite(voc_learning_rate) && voc_learning_rate > 0.0,
              "voc_learning_rate must be positive, got " << voc_learning_rate);
  LLEVC_CHECK(voc_step_count >= 1,
              "voc_step_count must be >= 1, got " << voc_step_count);
  LLEVC_CHECK(voc_batch_size >= 1,
              "voc_batch_size must be >= 1, got " << voc_batch_size);
  weights.validate();
  for (const std::string& name : freeze) group_from_name(name);
}

int expected_eval_points(int step_count, int eval_every) {
  LLEVC_CHECK(step_count >= 1 && eval_every >= 1,
              "eval point counting needs positive step_count and eval_every");
  int points = step_count / eval_every + 1;
  if (step_count % eval_every != 0) points += 1;
  return points;
}

const PhaseTrace& TrainReport::phase(const std::string& name) const {
  for (const PhaseTrace& p : phases)
    if (p.phase == name) return p;
  throw Error("report has no phase named " + name);
}

void sgd_apply(ParamSet& ps, const std::vector<Mat>& grads, double lr,
               const std::array<bool, 6>& frozen) {
  if (lr == 0.0) return;
  LLEVC_CHECK(grads.size() == ps.t.size(),
              "gradient count " << grads.size() << " does not match "
                                << ps.t.size() << " parameter tensors");
  for (size_t i = 0; i < ps.t.size(); ++i) {
    ParamTensor& t = ps.t[i];
    if (frozen[size_t(t.group)]) continue;
    LLEVC_CHECK(
        grads[i].rows == t.value.rows && grads[i].cols == t.value.cols,
        "gradient shape mismatch for " << t.name);
    for (size_t j = 0; j < t.value.a.size(); ++j)
      t.value.a[j] -= lr * grads[i].a[j];
  }
}

namespace {

// Evaluation draws fixed reparameterization noise so loss traces at different
// steps are comparable; it never touches the checkpoint generator, so
// evaluating cannot perturb the training stream.
constexpr uint64_t kEvalNoiseSeed = 0x11e5eed;
constexpr int kEvalBatchCap = 16;

struct PhaseSpec {
  std::string name;
  Phase loss_phase = Phase::train;
  bool vocoder_only = false;
  bool scheduled = false;  // weld: mix teacher and predicted previous frames
  double lr = 0.0;
  int steps = 0;
  int batch = 0;
  int eval_every = 1;
  LossWeights weights;
  std::array<bool, 6> frozen{};
};

std::array<bool, 6> frozen_mask(const std::vector<std::string>& user,
                                std::initializer_list<int> mandated) {
  std::array<bool, 6> f{};
  for (int g : mandated) f[size_t(g)] = true;
  for (const std::string& name : user) f[size_t(group_from_name(name))] = true;
  return f;
}

std::vector<Mat> zero_grads(const ParamSet& ps) {
  std::vector<Mat> grads;
  grads.reserve(ps.t.size());
  for (const ParamTensor& t : ps.t)
    grads.push_back(Mat(t.value.rows, t.value.cols));
  return grads;
}

std::vector<BatchItem> eval_batch_of(const Checkpoint& ckpt,
                                     const std::vector<const Utterance*>& utts) {
  std::vector<BatchItem> batch;
  const int n = std::min<int>(kEvalBatchCap, int(utts.size()));
  batch.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    batch.push_back(BatchItem{utts[size_t(i)],
                              speaker_row(ckpt, utts[size_t(i)]->speaker_id)});
  return batch;
}

LossBreakdown eval_breakdown(const Checkpoint& ckpt, const PhaseSpec& spec,
                             const std::vector<BatchItem>& batch) {
  if (spec.vocoder_only) {
    double mean = 0.0;
    for (const BatchItem& it : batch)
      mean += vocoder_loss(ckpt.cfg, ckpt.params, *it.utt, it.speaker_row);
    mean /= double(batch.size());
    LossBreakdown b;
    b.total = mean;
    b.terms["voc"] = mean;
    return b;
  }
  return composite_loss(ckpt.cfg, ckpt.params, spec.loss_phase, batch,
                        spec.weights, kEvalNoiseSeed);
}

double eval_tie(const Checkpoint& ckpt, const std::vector<BatchItem>& batch) {
  double mean = 0.0;
  int n = 0;
  for (const BatchItem& it : batch) {
    if (!it.utt->transcribed) continue;
    mean += tie_loss(ckpt.cfg, ckpt.params, *it.utt);
    ++n;
  }
  LLEVC_CHECK(n > 0, "tie evaluation needs transcribed utterances");
  return mean / double(n);
}

// Latent sample matching the graph's reparameterization for the same noise.
Mat sample_latent(const LLE& lle, const Mat& noise) {
  Mat z(lle.mean.rows, lle.mean.cols);
  for (size_t j = 0; j < z.a.size(); ++j)
    z.a[j] = lle.mean.a[j] + std::exp(0.5 * lle.log_var.a[j]) * noise.a[j];
  return z;
}

// One training phase. Evaluates before the first update, every eval_every
// steps, and after the last update; the hook fires at every evaluation point
// and may abandon the run (returns false). All stochastic choices (batch
// indices, step noise seed, teacher-forcing coins) are drawn from ckpt.rng in
// a fixed order, so resuming from a snapshot replays the interrupted run
// exactly. Returns false when the hook abandoned the run.
bool run_phase(Checkpoint& ckpt, const PhaseSpec& spec,
               const std::vector<const Utterance*>& train_utts,
               const std::vector<const Utterance*>& held_utts, int start_step,
               const SnapshotHook& hook, TrainReport& report) {
  LLEVC_CHECK(!train_utts.empty(),
              "phase " << spec.name << " has no training utterances");
  LLEVC_CHECK(start_step >= 0 && start_step <= spec.steps,
              "phase " << spec.name << " cannot start at step " << start_step
                       << " of " << spec.steps);
  report.phases.push_back(PhaseTrace{});
  PhaseTrace& trace = report.phases.back();
  trace.phase = spec.name;

  const ModelConfig& cfg = ckpt.cfg;
  const std::vector<BatchItem> train_eval = eval_batch_of(ckpt, train_utts);
  const std::vector<BatchItem> held_eval = eval_batch_of(ckpt, held_utts);
  const std::vector<BatchItem>& tie_batch =
      held_eval.empty() ? train_eval : held_eval;
  bool tie_applicable = !spec.vocoder_only;
  if (tie_applicable) {
    tie_applicable = false;
    for (const BatchItem& it : tie_batch)
      if (it.utt->transcribed) tie_applicable = true;
  }

  for (int step = start_step; step <= spec.steps; ++step) {
    ckpt.run = RunState{true, spec.name, uint32_t(step)};
    if (step == spec.steps || step % spec.eval_every == 0) {
      trace.steps.push_back(step);
      trace.train_eval.push_back(eval_breakdown(ckpt, spec, train_eval));
      if (!held_eval.empty())
        trace.held_eval.push_back(eval_breakdown(ckpt, spec, held_eval));
      if (tie_applicable) trace.tie_gap.push_back(eval_tie(ckpt, tie_batch));
      if (hook && !hook(ckpt, spec.name, step)) return false;
    }
    if (step == spec.steps) break;

    std::vector<BatchItem> batch;
    batch.reserve(size_t(spec.batch));
    for (int b = 0; b < spec.batch; ++b) {
      const Utterance* u =
          train_utts[ckpt.rng.range(uint32_t(train_utts.size()))];
      batch.push_back(BatchItem{u, speaker_row(ckpt, u->speaker_id)});
    }
    const uint64_t step_noise = ckpt.rng.next_u64();

    Tape tp;
    BoundParams bp = bind_params(tp, ckpt.params);
    Tape::Ref total = -1;
    if (spec.vocoder_only) {
      std::vector<Tape::Ref> losses;
      for (const BatchItem& it : batch)
        losses.push_back(
            vocoder_loss_graph(tp, bp, cfg, *it.utt, it.speaker_row));
      total = tp.weighted_sum(
          losses, std::vector<double>(losses.size(), 1.0 / double(batch.size())));
    } else if (spec.scheduled) {
      // Teacher-forcing probability anneals linearly from 1.0 to 0.5; prevs
      // mix ground-truth frames with the decoder's teacher-forced predictions
      // and enter the graph as constants.
      const double p_tf =
          1.0 - 0.5 * double(step) / double(std::max(1, spec.steps - 1));
      std::vector<Mat> noises, prevs;
      for (size_t i = 0; i < batch.size(); ++i) {
        const Mat& y = batch[i].utt->features.frames;
        Mat noise =
            chain_noise(step_noise, int(i), Chain::sts, y.rows, cfg.latent_dim);
        const Mat z =
            sample_latent(encode_speech(cfg, ckpt.params, y), noise);
        const Mat yhat =
            decode_speech_tf(cfg, ckpt.params, z, batch[i].speaker_row, y);
        Mat prev(y.rows, y.cols);
        for (int t = 1; t < y.rows; ++t) {
          const bool teacher = ckpt.rng.uniform() < p_tf;
          const Mat& src = teacher ? y : yhat;
          for (int d = 0; d < y.cols; ++d) prev(t, d) = src(t - 1, d);
        }
        noises.push_back(std::move(noise));
        prevs.push_back(std::move(prev));
      }
      std::vector<Tape::Ref> sts, voc;
      for (size_t i = 0; i < batch.size(); ++i) {
        auto terms = weld_terms_graph(tp, bp, cfg, *batch[i].utt,
                                      batch[i].speaker_row, noises[i], prevs[i]);
        sts.push_back(terms.first);
        voc.push_back(terms.second);
      }
      const std::vector<double> inv(sts.size(), 1.0 / double(batch.size()));
      total = tp.weighted_sum({tp.weighted_sum(sts, inv),
                               tp.weighted_sum(voc, inv)},
                              {1.0, spec.weights.gamma});
    } else {
      total = composite_loss_graph(tp, bp, cfg, spec.loss_phase, batch,
                                   spec.weights, step_noise)
                  .total;
    }
    tp.backward(total);
    std::vector<Mat> grads = zero_grads(ckpt.params);
    tp.add_param_grads(grads);
    sgd_apply(ckpt.params, grads, spec.lr, spec.frozen);
  }
  return true;
}

std::vector<const Utterance*> corpus_pointers(const Corpus& corpus,
                                              const std::vector<int>& idx) {
  std::vector<const Utterance*> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(&corpus.utts[size_t(i)]);
  return out;
}

// Holds out the last k target utterances, always keeping at least one for
// training.
void split_target(const std::vector<const Utterance*>& target_utts, int k,
                  std::vector<const Utterance*>& train_utts,
                  std::vector<const Utterance*>& held_utts) {
  train_utts = target_utts;
  held_utts.clear();
  k = std::min<int>(k, int(train_utts.size()) - 1);
  if (k <= 0) return;
  held_utts.assign(train_utts.end() - k, train_utts.end());
  train_utts.erase(train_utts.end() - k, train_utts.end());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

TrainResult initial_train(const Corpus& corpus_a, const ModelConfig& mcfg,
                          const StageConfig& cfg,
                          const std::array<uint8_t, 32>& config_hash,
                          const SnapshotHook& hook,
                          const Checkpoint* resume_from) {
  const auto t0 = std::chrono::steady_clock::now();
  mcfg.validate();
  cfg.validate();
  LLEVC_CHECK(!corpus_a.utts.empty(), "initial training needs utterances");
  std::set<int> languages, speakers;
  for (const Utterance& u : corpus_a.utts) {
    LLEVC_CHECK(u.transcribed, "initial training requires transcribed "
                               "utterances; "
                                   << u.utterance_id << " has no transcript");
    languages.insert(u.language_id);
    speakers.insert(u.speaker_id);
  }
  LLEVC_CHECK(languages.size() == 1,
              "initial training corpus must be a single language, got "
                  << languages.size());
  LLEVC_CHECK(speakers.size() >= 2,
              "initial training needs at least two speakers, got "
                  << speakers.size());

  TrainResult result;
  Checkpoint& ckpt = result.ckpt;
  int start_acoustic = 0;
  int start_vocoder = 0;
  bool skip_acoustic = false;
  if (resume_from) {
    LLEVC_CHECK(resume_from->run.in_progress,
                "resume checkpoint is not mid-run");
    LLEVC_CHECK(resume_from->stage == Stage::initial &&
                    resume_from->target_speaker_id < 0,
                "resume checkpoint is not from initial training");
    LLEVC_CHECK(resume_from->config_hash == config_hash,
                "resume checkpoint was written under a different "
                "configuration");
    ckpt = *resume_from;
    if (ckpt.run.phase == "acoustic") {
      start_acoustic = int(ckpt.run.step);
    } else if (ckpt.run.phase == "vocoder") {
      skip_acoustic = true;
      start_vocoder = int(ckpt.run.step);
    } else {
      LLEVC_CHECK(false, "resume checkpoint names unknown phase \""
                             << ckpt.run.phase << "\"");
    }
  } else {
    ckpt.cfg = mcfg;
    ckpt.stage = Stage::initial;
    ckpt.config_hash = config_hash;
    ckpt.params = init_params(mcfg, cfg.seed);
    ckpt.rng = Rng::substream(cfg.seed, 1);
    for (const SpeakerProfile& s : corpus_a.speakers)
      register_speaker(ckpt, s.speaker_id);
  }

  const Split split = split_by_utterance(corpus_a, cfg.held_out_per_speaker);
  const std::vector<const Utterance*> train_utts =
      corpus_pointers(corpus_a, split.train);
  const std::vector<const Utterance*> held_utts =
      corpus_pointers(corpus_a, split.held_out);

  PhaseSpec acoustic;
  acoustic.name = "acoustic";
  acoustic.loss_phase = Phase::train;
  acoustic.lr = cfg.learning_rate;
  acoustic.steps = cfg.step_count;
  acoustic.batch = cfg.batch_size;
  acoustic.eval_every = cfg.eval_every;
  acoustic.weights = cfg.weights;
  acoustic.frozen = frozen_mask(cfg.freeze, {kGroupVoc});

  PhaseSpec vocoder;
  vocoder.name = "vocoder";
  vocoder.vocoder_only = true;
  vocoder.lr = cfg.voc_learning_rate;
  vocoder.steps = cfg.voc_step_count;
  vocoder.batch = cfg.voc_batch_size;
  vocoder.eval_every = cfg.eval_every;
  vocoder.weights = cfg.weights;
  vocoder.frozen = frozen_mask(
      cfg.freeze,
      {kGroupTenc, kGroupSenc, kGroupTdec, kGroupSdec, kGroupSpeaker});

  bool ok = skip_acoustic || run_phase(ckpt, acoustic, train_utts, held_utts,
                                       start_acoustic, hook, result.report);
  if (ok)
    ok = run_phase(ckpt, vocoder, train_utts, held_utts, start_vocoder, hook,
                   result.report);
  if (ok) {
    ckpt.stage = Stage::initial;
    ckpt.run = RunState{};
  }
  result.report.wall_seconds = seconds_since(t0);
  return result;
}

TrainResult adapt(const Checkpoint& start,
                  const std::vector<const Utterance*>& target_utts,
                  const StageConfig& cfg, const SnapshotHook& hook,
                  const Checkpoint* resume_from) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  LLEVC_CHECK(!target_utts.empty(),
              "adaptation needs a nonempty target utterance set");
  const int target = target_utts.front()->speaker_id;
  size_t transcribed = 0;
  for (const Utterance* u : target_utts) {
    LLEVC_CHECK(u->speaker_id == target,
                "adaptation utterances must share one speaker, got "
                    << target << " and " << u->speaker_id);
    if (u->transcribed) ++transcribed;
  }
  if (transcribed > 0)
    std::fprintf(stderr, "adapt: ignoring transcripts on %zu of %zu target utterances\n",
                 transcribed, target_utts.size());

  TrainResult result;
  Checkpoint& ckpt = result.ckpt;
  int start_acoustic = 0;
  int start_vocoder = 0;
  bool skip_acoustic = false;
  if (resume_from) {
    LLEVC_CHECK(resume_from->run.in_progress,
                "resume checkpoint is not mid-run");
    LLEVC_CHECK(resume_from->stage == Stage::initial &&
                    resume_from->target_speaker_id == target,
                "resume checkpoint is not from adaptation to speaker "
                    << target);
    LLEVC_CHECK(resume_from->config_hash == start.config_hash,
                "resume checkpoint was written under a different "
                "configuration");
    ckpt = *resume_from;
    if (ckpt.run.phase == "acoustic") {
      start_acoustic = int(ckpt.run.step);
    } else if (ckpt.run.phase == "vocoder") {
      skip_acoustic = true;
      start_vocoder = int(ckpt.run.step);
    } else {
      LLEVC_CHECK(false, "resume checkpoint names unknown phase \""
                             << ckpt.run.phase << "\"");
    }
  } else {
    LLEVC_CHECK(!start.run.in_progress,
                "start checkpoint is mid-run; resume that run first");
    LLEVC_CHECK(start.stage == Stage::initial,
                "adaptation requires a checkpoint at stage initial, got "
                    << stage_name(start.stage));
    ckpt = start;
    ckpt.rng = Rng::substream(cfg.seed, 1);
    register_speaker(ckpt, target);
    ckpt.target_speaker_id = target;
  }

  std::vector<const Utterance*> train_utts, held_utts;
  split_target(target_utts, cfg.held_out_per_speaker, train_utts, held_utts);

  PhaseSpec acoustic;
  acoustic.name = "acoustic";
  acoustic.loss_phase = Phase::adapt;
  acoustic.lr = cfg.learning_rate;
  acoustic.steps = cfg.step_count;
  acoustic.batch = cfg.batch_size;
  acoustic.eval_every = cfg.eval_every;
  acoustic.weights = cfg.weights;
  acoustic.frozen =
      frozen_mask(cfg.freeze, {kGroupTenc, kGroupSenc, kGroupTdec, kGroupVoc});

  PhaseSpec vocoder;
  vocoder.name = "vocoder";
  vocoder.vocoder_only = true;
  vocoder.lr = cfg.voc_learning_rate;
  vocoder.steps = cfg.voc_step_count;
  vocoder.batch = cfg.voc_batch_size;
  vocoder.eval_every = cfg.eval_every;
  vocoder.weights = cfg.weights;
  vocoder.frozen = frozen_mask(
      cfg.freeze,
      {kGroupTenc, kGroupSenc, kGroupTdec, kGroupSdec, kGroupSpeaker});

  bool ok = skip_acoustic || run_phase(ckpt, acoustic, train_utts, held_utts,
                                       start_acoustic, hook, result.report);
  if (ok)
    ok = run_phase(ckpt, vocoder, train_utts, held_utts, start_vocoder, hook,
                   result.report);
  if (ok) {
    ckpt.stage = Stage::adapted;
    ckpt.run = RunState{};
  }
  result.report.wall_seconds = seconds_since(t0);
  return result;
}

TrainResult weld(const Checkpoint& start,
                 const std::vector<const Utterance*>& target_utts,
                 const StageConfig& cfg, const SnapshotHook& hook,
                 const Checkpoint* resume_from) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  LLEVC_CHECK(!target_utts.empty(),
              "welding needs a nonempty target utterance set");
  const int target = target_utts.front()->speaker_id;
  for (const Utterance* u : target_utts)
    LLEVC_CHECK(u->speaker_id == target,
                "weld utterances must share one speaker, got "
                    << target << " and " << u->speaker_id);

  TrainResult result;
  Checkpoint& ckpt = result.ckpt;
  int start_step = 0;
  if (resume_from) {
    LLEVC_CHECK(resume_from->run.in_progress,
                "resume checkpoint is not mid-run");
    LLEVC_CHECK(resume_from->stage == Stage::adapted &&
                    resume_from->target_speaker_id == target &&
                    resume_from->run.phase == "weld",
                "resume checkpoint is not from welding speaker " << target);
    LLEVC_CHECK(resume_from->config_hash == start.config_hash,
                "resume checkpoint was written under a different "
                "configuration");
    ckpt = *resume_from;
    start_step = int(ckpt.run.step);
  } else {
    LLEVC_CHECK(!start.run.in_progress,
                "start checkpoint is mid-run; resume that run first");
    LLEVC_CHECK(start.stage == Stage::adapted,
                "welding requires a checkpoint at stage adapted, got "
                    << stage_name(start.stage));
    LLEVC_CHECK(start.target_speaker_id == target,
                "weld utterances are speaker "
                    << target << " but the checkpoint was adapted to speaker "
                    << start.target_speaker_id);
    ckpt = start;
    ckpt.rng = Rng::substream(cfg.seed, 1);
  }

  std::vector<const Utterance*> train_utts, held_utts;
  split_target(target_utts, cfg.held_out_per_speaker, train_utts, held_utts);

  PhaseSpec joint;
  joint.name = "weld";
  joint.loss_phase = Phase::weld;
  joint.scheduled = true;
  joint.lr = cfg.learning_rate;
  joint.steps = cfg.step_count;
  joint.batch = cfg.batch_size;
  joint.eval_every = cfg.eval_every;
  joint.weights = cfg.weights;
  joint.frozen = frozen_mask(
      cfg.freeze, {kGroupTenc, kGroupSenc, kGroupTdec, kGroupSpeaker});

  if (run_phase(ckpt, joint, train_utts, held_utts, start_step, hook,
                result.report)) {
    ckpt.stage = Stage::welded;
    ckpt.run = RunState{};
  }
  result.report.wall_seconds = seconds_since(t0);
  return result;
}

Checkpoint load_checkpoint_verified(const std::string& path,
                                    const ModelConfig& mcfg,
                                    const std::array<uint8_t, 32>& config_hash) {
  Checkpoint ckpt = load_checkpoint(path, mcfg);
  LLEVC_CHECK(ckpt.config_hash == config_hash,
              "checkpoint " << path
                            << " was written under a different configuration "
                               "(hash "
                            << hex_string(ckpt.config_hash) << ", expected "
                            << hex_string(config_hash) << ")");
  return ckpt;
}

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ostringstream os;
  os << "step,term,value\n";
  char buf[64];
  const auto emit = [&](int step, const std::string& term, double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    os << step << ',' << term << ',' << buf << '\n';
  };
  for (const PhaseTrace& ph : report.phases) {
    for (size_t i = 0; i < ph.steps.size(); ++i) {
      const int s = ph.steps[i];
      emit(s, ph.phase + ".train.total", ph.train_eval[i].total);
      for (const auto& [k, v] : ph.train_eval[i].terms)
        emit(s, ph.phase + ".train." + k, v);
      if (i < ph.held_eval.size()) {
        emit(s, ph.phase + ".held.total", ph.held_eval[i].total);
        for (const auto& [k, v] : ph.held_eval[i].terms)
          emit(s, ph.phase + ".held." + k, v);
      }
      if (i < ph.tie_gap.size()) emit(s, ph.phase + ".tie_gap", ph.tie_gap[i]);
    }
  }
  write_file_bytes(path, os.str());
}

void write_report_json(const TrainReport& report, const std::string& path) {
  nlohmann::json j;
  j["wall_seconds"] = report.wall_seconds;
  j["phases"] = nlohmann::json::array();
  const auto series = [](const std::vector<LossBreakdown>& evals) {
    nlohmann::json s;
    s["total"] = nlohmann::json::array();
    for (const LossBreakdown& e : evals) {
      s["total"].push_back(e.total);
      for (const auto& [k, v] : e.terms) {
        if (!s.contains(k)) s[k] = nlohmann::json::array();
        s[k].push_back(v);
      }
    }
    return s;
  };
  for (const PhaseTrace& ph : report.phases) {
    nlohmann::json p;
    p["phase"] = ph.phase;
    p["steps"] = ph.steps;
    p["train"] = series(ph.train_eval);
    if (!ph.held_eval.empty()) p["held_out"] = series(ph.held_eval);
    if (!ph.tie_gap.empty()) p["tie_gap"] = ph.tie_gap;
    j["phases"].push_back(p);
  }
  write_file_bytes(path, j.dump(2) + "\n");
}

}  // namespace llevc
