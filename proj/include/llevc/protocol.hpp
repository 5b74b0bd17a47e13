// llevc/protocol.hpp

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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "llevc/losses.hpp"

namespace llevc {

// Settings for one training stage. Every stage runs an acoustic phase with
// these values; stages that also train the vocoder run a second phase with
// the voc_* values (welding trains both jointly in one phase).
struct StageConfig {
  double learning_rate = 0.02;
  int step_count = 600;
  int batch_size = 8;
  LossWeights weights;
  std::vector<std::string> freeze;  // extra frozen groups, by name
  uint64_t seed = 1;
  int eval_every = 50;
  int held_out_per_speaker = 3;

  double voc_learning_rate = 0.05;
  int voc_step_count = 400;
  int voc_batch_size = 4;

  void validate() const;
};

// Loss traces for one phase of a run. Evaluations happen before the first
// update (step 0), every eval_every steps, and after the last update.
struct PhaseTrace {
  std::string phase;
  std::vector<int> steps;
  std::vector<LossBreakdown> train_eval;
  std::vector<LossBreakdown> held_eval;  // empty when there is no held-out set
  std::vector<double> tie_gap;           // empty when data lacks transcripts
};
int expected_eval_points(int step_count, int eval_every);

struct TrainReport {
  std::vector<PhaseTrace> phases;
  double wall_seconds = 0.0;

  const PhaseTrace& phase(const std::string& name) const;  // throws if absent
};

void write_report_csv(const TrainReport& report, const std::string& path);
void write_report_json(const TrainReport& report, const std::string& path);

struct TrainResult {
  Checkpoint ckpt;
  TrainReport report;
};

// Called at every evaluation point with the run state filled in
// (run.in_progress, run.phase, run.step). Returning false abandons the run
// after the snapshot, leaving the result checkpoint mid-phase; training can
// be resumed from it later. Used for crash simulation and periodic saving.
using SnapshotHook =
    std::function<bool(const Checkpoint& ckpt, const std::string& phase,
                       int step)>;

// Initial multi-speaker training on a fully transcribed corpus: the acoustic
// phase optimizes encoders, decoders, and speaker embeddings jointly; the
// vocoder phase then trains the vocoder alone on the same data.
TrainResult initial_train(const Corpus& corpus_a, const ModelConfig& mcfg,
                          const StageConfig& cfg,
                          const std::array<uint8_t, 32>& config_hash,
                          const SnapshotHook& hook = {},
                          const Checkpoint* resume_from = nullptr);

// Target-speaker adaptation on untranscribed utterances: encoders and the
// text decoder are frozen; the speech decoder and the target embedding train
// on reconstruction + cycle; the vocoder then trains on the target data.
TrainResult adapt(const Checkpoint& start,
                  const std::vector<const Utterance*>& target_utts,
                  const StageConfig& cfg, const SnapshotHook& hook = {},
                  const Checkpoint* resume_from = nullptr);

// Joint decoder/vocoder tuning on the adaptation target: the vocoder is
// conditioned on predicted features, with a teacher-forcing probability that
// anneals from 1.0 to 0.5 across the run.
TrainResult weld(const Checkpoint& start,
                 const std::vector<const Utterance*>& target_utts,
                 const StageConfig& cfg, const SnapshotHook& hook = {},
                 const Checkpoint* resume_from = nullptr);

// load_checkpoint plus an explicit hash comparison against the caller's
// configuration
Checkpoint load_checkpoint_verified(const std::string& path,
                                    const ModelConfig& mcfg,
                                    const std::array<uint8_t, 32>& config_hash);

// one plain gradient step: p -= lr * g on every tensor whose group is not
// frozen; lr of zero changes nothing
void sgd_apply(ParamSet& ps, const std::vector<Mat>& grads, double lr,
               const std::array<bool, 6>& frozen);

}  // namespace llevc
