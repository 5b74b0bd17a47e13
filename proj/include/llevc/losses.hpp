// llevc/losses.hpp

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

#include <map>
#include <string>
#include <vector>

#include "llevc/model.hpp"

namespace llevc {

// Reconstruction and recognition chains: text or speech in, speech or text
// out, always through a sampled latent sequence.
enum class Chain : int { tts = 0, sts = 1, stt = 2, ttt = 3 };
const char* chain_name(Chain c);

// Training phases; distinct from checkpoint Stage, which records what has
// been completed.
enum class Phase : int { train = 0, adapt = 1, weld = 2 };
const char* phase_name(Phase p);

struct LossWeights {
  double alpha_sts = 1.0;
  double alpha_stt = 1.0;
  double alpha_ttt = 0.0;
  double beta_tie = 1.0;
  double beta_cycle = 0.25;
  double gamma = 1.0;

  void validate() const;  // all finite and >= 0
};

// Unweighted per-term values plus the weighted total.
struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> terms;

  double term(const std::string& name) const;  // throws when absent
};

struct BatchItem {
  const Utterance* utt = nullptr;
  int speaker_row = -1;
};

// Reparameterization noise for one sampling site. Sites are addressed by
// (batch_index, chain) so graph builders and scalar wrappers draw identical
// noise for the same seed.
Mat chain_noise(uint64_t noise_seed, int batch_index, Chain site, int frames,
                int latent_dim);

// --- tape builders (the training path differentiates through these) ---

Tape::Ref chain_loss_graph(Tape& tp, const BoundParams& bp,
                           const ModelConfig& cfg, Chain chain,
                           const Utterance& utt, int speaker_row,
                           const Mat& noise);
Tape::Ref tie_loss_graph(Tape& tp, const BoundParams& bp,
                         const ModelConfig& cfg, const Utterance& utt);
Tape::Ref cycle_loss_graph(Tape& tp, const BoundParams& bp,
                           const ModelConfig& cfg, const Mat& y,
                           int speaker_row, const Mat& noise);
// next-code cross-entropy conditioned on the utterance's own features
Tape::Ref vocoder_loss_graph(Tape& tp, const BoundParams& bp,
                             const ModelConfig& cfg, const Utterance& utt,
                             int speaker_row);

// weld terms for one utterance with an explicit previous-frame matrix
// (scheduled sampling); first = reconstruction, second = next-code
// cross-entropy conditioned on the predicted features
std::pair<Tape::Ref, Tape::Ref> weld_terms_graph(Tape& tp,
                                                 const BoundParams& bp,
                                                 const ModelConfig& cfg,
                                                 const Utterance& utt,
                                                 int speaker_row,
                                                 const Mat& noise,
                                                 const Mat& prev);

struct CompositeRefs {
  Tape::Ref total = -1;
  std::vector<std::pair<std::string, Tape::Ref>> terms;  // unweighted
};
// train: tts + alpha_sts*sts + alpha_stt*stt + alpha_ttt*ttt + beta_tie*tie
// adapt: sts + beta_cycle*cycle, sharing one sampled chain
// weld:  sts + gamma*voc, with the vocoder conditioned on the predicted
//        features so its gradient reaches the speech decoder
CompositeRefs composite_loss_graph(Tape& tp, const BoundParams& bp,
                                   const ModelConfig& cfg, Phase phase,
                                   const std::vector<BatchItem>& batch,
                                   const LossWeights& w, uint64_t noise_seed);
LossBreakdown breakdown_from(const Tape& tp, const CompositeRefs& refs);

// --- scalar wrappers ---

double chain_loss(const ModelConfig& cfg, const ParamSet& ps, Chain chain,
                  const Utterance& utt, int speaker_row, uint64_t noise_seed);
double tie_loss(const ModelConfig& cfg, const ParamSet& ps,
                const Utterance& utt);
double cycle_loss(const ModelConfig& cfg, const ParamSet& ps, const Mat& y,
                  int speaker_row, uint64_t noise_seed);
double vocoder_loss(const ModelConfig& cfg, const ParamSet& ps,
                    const Utterance& utt, int speaker_row);
LossBreakdown composite_loss(const ModelConfig& cfg, const ParamSet& ps,
                             Phase phase, const std::vector<BatchItem>& batch,
                             const LossWeights& w, uint64_t noise_seed);

}  // namespace llevc
