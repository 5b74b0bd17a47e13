// llevc/pipeline.hpp

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

#include <string>
#include <vector>

#include "llevc/config.hpp"
#include "llevc/eval.hpp"
#include "llevc/numerics.hpp"

namespace llevc {

// Generates a corpus and writes it to out_dir; returns the utterance count.
int run_gen_data(const CorpusSpec& spec, uint64_t seed,
                 const std::string& out_dir);

// Stage commands. Each reads the corpus from data_dir, runs the protocol
// stage, and writes the result checkpoint to out_path plus a loss trace to
// "<out_path>.report.csv". A snapshot of the run state is saved to out_path
// at every evaluation point, so an interrupted run can be resumed by passing
// that file as in_path. For run_train, in_path may be empty (fresh start) or
// a mid-run snapshot; adapt and weld always need a start checkpoint.
// run_adapt targets target_speaker; pass -1 to use the single speaker whose
// utterances are all untranscribed. run_weld targets the checkpoint's
// adaptation target.
void run_train(const RunConfig& cfg, const std::string& data_dir,
               const std::string& in_path, const std::string& out_path);
void run_adapt(const RunConfig& cfg, const std::string& data_dir,
               const std::string& in_path, const std::string& out_path,
               int target_speaker = -1);
void run_weld(const RunConfig& cfg, const std::string& data_dir,
              const std::string& in_path, const std::string& out_path);

// Inference commands. The checkpoint is self-describing, so no run config is
// needed. The primary output is a waveform blob; render_path, when nonempty,
// additionally writes a mono 16-bit PCM WAV (nominal 16 kHz) decoded from
// the mu-law codes. run_tts synthesizes speaker_id, or the checkpoint's
// adaptation target when speaker_id is -1.
void run_tts(const std::string& ckpt_path, const std::string& phonemes_path,
             const std::string& out_path, int speaker_id, uint64_t seed,
             const std::string& render_path);
void run_vc(const std::string& ckpt_path, const std::string& source_path,
            const std::string& out_path, uint64_t seed,
            const std::string& render_path);

// Scores a checkpoint against a corpus and writes a metrics CSV (columns
// experiment,system,speaker,metric,value):
//   eval,model,-1,tie_gap            mean over transcribed utterances
//   eval,natural,S,probe_similarity  the probe's view of natural speech
//   eval,tts,S,mel_distortion        synthesis vs. natural, transcribed only
//   eval,tts,S,probe_similarity
//   eval,vc,S,target_similarity      conversion from source S, adapted+ only
// Every corpus speaker must be registered in the checkpoint. When votes_path
// is nonempty, the vote file is tallied and preference rows are appended:
//   preference,<a> vs <b>,-1,{n,share_a,ci_lo,ci_hi,p_exact}
// Per speaker, at most eval_cap utterances are scored per system.
void run_eval(const std::string& ckpt_path, const std::string& corpus_dir,
              const std::string& out_csv, const std::string& votes_path,
              int eval_cap = 10);

// Finite-difference validation of every loss gradient at small, randomly
// sized model configurations: the four chains, the tie and cycle penalties,
// the vocoder loss, and the three composite stage objectives, repeated for
// n_seeds seeds derived from seed0. Composites use the caller's weights.
struct GradCheckItem {
  std::string name;
  uint64_t seed = 0;
  GradReport report;
};
struct GradCheckSummary {
  std::vector<GradCheckItem> items;
  double tolerance = 1e-4;

  bool all_ok() const;
  const GradCheckItem& worst() const;  // largest max_rel_err
};
GradCheckSummary run_grad_check(const LossWeights& weights, uint64_t seed0,
                                int n_seeds = 5);

}  // namespace llevc
