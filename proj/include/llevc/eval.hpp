// llevc/eval.hpp

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

#include "llevc/losses.hpp"

namespace llevc {

// Frame-averaged Euclidean distance between two feature sequences of equal
// shape; zero iff the sequences are identical.
double mel_distortion(const AcousticFeatures& a, const AcousticFeatures& b);

// Linear softmax classifier over speakers applied to mean-pooled frame
// windows, trained on natural features. Serves as an objective stand-in for
// human speaker-similarity judgments; kept deliberately weak so similarity
// scores stay conservative.
struct SpeakerProbe {
  std::vector<int> speaker_ids;  // class index -> speaker id
  int window = 8;                // frames per mean-pooled window
  Mat w;                         // classes x feature_dim
  Mat b;                         // 1 x classes

  int classes() const { return int(speaker_ids.size()); }
  int class_of(int speaker_id) const;  // -1 when absent
};

// Deterministic full-batch gradient descent on softmax cross-entropy over the
// corpus's pooled windows. A fixed-seed set of standard-normal noise windows
// with a uniform target distribution is mixed in so that non-speech input
// scores near chance for every class instead of saturating the softmax.
SpeakerProbe train_speaker_probe(const Corpus& corpus, int steps = 2000,
                                 double learning_rate = 2.0);

// One row per mean-pooled window (ceil(T / window) rows); every row sums
// to 1. The final window of a sequence may cover fewer than `window` frames.
Mat probe_posteriors(const SpeakerProbe& probe, const AcousticFeatures& f);

// Mean posterior probability of speaker_id over pooled windows; in [0, 1].
// Throws when the probe does not know the speaker.
double speaker_similarity(const AcousticFeatures& f, const SpeakerProbe& probe,
                          int speaker_id);

// Mean tied-encoder divergence over a set of transcribed utterances.
double tie_gap(const std::vector<const Utterance*>& pairs,
               const Checkpoint& ckpt);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct PreferenceResult {
  int n = 0;
  double share_a = 0.0;
  Interval ci_95;      // Wilson score interval, z for 95% coverage
  double p_exact = 1;  // exact two-sided binomial test against 0.5
};

// wins_a + wins_b must be >= 1
PreferenceResult preference_analysis(int wins_a, int wins_b);

// One scored quantity. speaker is -1 for corpus-level metrics.
struct MetricRow {
  std::string experiment;
  std::string system;
  int speaker = -1;
  std::string metric;
  double value = 0.0;
};

// CSV with header "experiment,system,speaker,metric,value"; values carry nine
// significant digits, so write -> read -> write is byte-stable.
void write_metrics_csv(const std::vector<MetricRow>& rows,
                       const std::string& path);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

// Pairwise preference votes. winner must equal system_a or system_b.
struct VoteRow {
  std::string question_id;
  std::string system_a;
  std::string system_b;
  std::string winner;
};

void write_votes_csv(const std::vector<VoteRow>& rows,
                     const std::string& path);
std::vector<VoteRow> read_votes_csv(const std::string& path);

// Win counts per (system_a, system_b) pair, in first-appearance order.
struct PairTally {
  std::string system_a;
  std::string system_b;
  int wins_a = 0;
  int wins_b = 0;
};
std::vector<PairTally> tally_votes(const std::vector<VoteRow>& votes);

}  // namespace llevc
