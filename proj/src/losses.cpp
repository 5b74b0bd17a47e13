// llevc/src/losses.cpp

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

#include "llevc/losses.hpp"

#include <cmath>

namespace llevc {

namespace {

constexpr int kChainSites = 4;  // noise sites per batch item

void require_transcript(const Utterance& utt, const char* what) {
  LLEVC_CHECK(utt.transcribed && utt.maybe_phonemes.has_value(),
              what << " requires a transcribed utterance; " << utt.utterance_id
                   << " has no transcript");
}

std::vector<int> code_targets(const std::vector<uint8_t>& codes) {
  return std::vector<int>(codes.begin(), codes.end());
}

// speech -> latent sample -> teacher-forced reconstruction; shared by the
// sts chain, the cycle term, and welding
struct StsChain {
  EncRefs enc;
  Tape::Ref z = -1;
  Tape::Ref yhat = -1;
  Tape::Ref loss = -1;
};

StsChain build_sts(Tape& tp, const BoundParams& bp, const ModelConfig& cfg,
                   const Mat& y, int speaker_row, const Mat& noise) {
  StsChain c;
  c.enc = senc_graph(tp, bp, cfg, y);
  c.z = tp.reparam(c.enc.mean, c.enc.log_var, noise);
  c.yhat = sdec_tf_graph(tp, bp, cfg, c.z, speaker_row, y);
  c.loss = tp.mse_vs(c.yhat, y);
  return c;
}

}  // namespace

const char* chain_name(Chain c) {
  switch (c) {
    case Chain::tts: return "tts";
    case Chain::sts: return "sts";
    case Chain::stt: return "stt";
    case Chain::ttt: return "ttt";
  }
  throw Error("unknown chain");
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::train: return "train";
    case Phase::adapt: return "adapt";
    case Phase::weld: return "weld";
  }
  throw Error("unknown phase");
}

void LossWeights::validate() const {
  const double vals[] = {alpha_sts, alpha_stt, alpha_ttt,
                         beta_tie,  beta_cycle, gamma};
  for (double v : vals)
    LLEVC_CHECK(std::isfinite(v) && v >= 0.0,
                "loss weights must be finite and nonnegative");
}

double LossBreakdown::term(const std::string& name) const {
  const auto it = terms.find(name);
  LLEVC_CHECK(it != terms.end(), "no loss term named " << name);
  return it->second;
}

Mat chain_noise(uint64_t noise_seed, int batch_index, Chain site, int frames,
                int latent_dim) {
  LLEVC_CHECK(batch_index >= 0 && frames >= 1 && latent_dim >= 1,
              "chain_noise: bad arguments");
  Rng rng = Rng::substream(
      noise_seed, uint64_t(batch_index) * kChainSites + uint64_t(site));
  Mat n(frames, latent_dim);
  for (double& v : n.a) v = rng.normal();
  return n;
}

Tape::Ref chain_loss_graph(Tape& tp, const BoundParams& bp,
                           const ModelConfig& cfg, Chain chain,
                           const Utterance& utt, int speaker_row,
                           const Mat& noise) {
  const Mat& y = utt.features.frames;
  LLEVC_CHECK(y.rows >= 1 && y.cols == cfg.feature_dim,
              "utterance " << utt.utterance_id << " has no usable features");
  switch (chain) {
    case Chain::tts: {
      require_transcript(utt, "the tts chain");
      const EncRefs enc = tenc_graph(tp, bp, cfg, utt.phonemes());
      LLEVC_CHECK(tp.val(enc.mean).rows == y.rows,
                  "frame-count mismatch between transcript and features of "
                      << utt.utterance_id);
      const Tape::Ref z = tp.reparam(enc.mean, enc.log_var, noise);
      const Tape::Ref yhat = sdec_tf_graph(tp, bp, cfg, z, speaker_row, y);
      return tp.mse_vs(yhat, y);
    }
    case Chain::sts:
      return build_sts(tp, bp, cfg, y, speaker_row, noise).loss;
    case Chain::stt: {
      require_transcript(utt, "the stt chain");
      const EncRefs enc = senc_graph(tp, bp, cfg, y);
      const Tape::Ref z = tp.reparam(enc.mean, enc.log_var, noise);
      const Tape::Ref logits = tdec_logits_graph(tp, bp, cfg, z);
      return tp.ce_rows(logits,
                        frame_symbols(utt.phonemes(), cfg.vocab_size));
    }
    case Chain::ttt: {
      require_transcript(utt, "the ttt chain");
      const std::vector<int> syms =
          frame_symbols(utt.phonemes(), cfg.vocab_size);
      const EncRefs enc = tenc_graph(tp, bp, cfg, utt.phonemes());
      const Tape::Ref z = tp.reparam(enc.mean, enc.log_var, noise);
      const Tape::Ref logits = tdec_logits_graph(tp, bp, cfg, z);
      return tp.ce_rows(logits, syms);
    }
  }
  throw Error("unknown chain");
}

Tape::Ref tie_loss_graph(Tape& tp, const BoundParams& bp,
                         const ModelConfig& cfg, const Utterance& utt) {
  require_transcript(utt, "the tie loss");
  const Mat& y = utt.features.frames;
  LLEVC_CHECK(utt.phonemes().total_frames() == y.rows,
              "frame-count mismatch between transcript and features of "
                  << utt.utterance_id);
  const EncRefs a = tenc_graph(tp, bp, cfg, utt.phonemes());
  const EncRefs b = senc_graph(tp, bp, cfg, y);
  return tp.sym_kld_avg(a.mean, a.log_var, b.mean, b.log_var);
}

Tape::Ref cycle_loss_graph(Tape& tp, const BoundParams& bp,
                           const ModelConfig& cfg, const Mat& y,
                           int speaker_row, const Mat& noise) {
  const StsChain c = build_sts(tp, bp, cfg, y, speaker_row, noise);
  const EncRefs back = senc_graph_ref(tp, bp, cfg, c.yhat);
  return tp.sym_kld_avg(c.enc.mean, c.enc.log_var, back.mean, back.log_var);
}

Tape::Ref vocoder_loss_graph(Tape& tp, const BoundParams& bp,
                             const ModelConfig& cfg, const Utterance& utt,
                             int speaker_row) {
  const Mat& y = utt.features.frames;
  LLEVC_CHECK(y.rows >= 1 && y.cols == cfg.feature_dim,
              "utterance " << utt.utterance_id << " has no usable features");
  LLEVC_CHECK(utt.waveform.samples_per_frame == cfg.samples_per_frame,
              "utterance " << utt.utterance_id
                           << " was rendered at a different sample rate");
  const Tape::Ref logits = voc_logits_graph(tp, bp, cfg, tp.constant(y),
                                            speaker_row, utt.waveform.codes);
  return tp.ce_rows(logits, code_targets(utt.waveform.codes));
}

std::pair<Tape::Ref, Tape::Ref> weld_terms_graph(Tape& tp,
                                                 const BoundParams& bp,
                                                 const ModelConfig& cfg,
                                                 const Utterance& utt,
                                                 int speaker_row,
                                                 const Mat& noise,
                                                 const Mat& prev) {
  const Mat& y = utt.features.frames;
  LLEVC_CHECK(utt.waveform.samples_per_frame == cfg.samples_per_frame,
              "utterance " << utt.utterance_id
                           << " was rendered at a different sample rate");
  const EncRefs enc = senc_graph(tp, bp, cfg, y);
  const Tape::Ref z = tp.reparam(enc.mean, enc.log_var, noise);
  const Tape::Ref yhat = sdec_prev_graph(tp, bp, cfg, z, speaker_row, prev);
  const Tape::Ref sts = tp.mse_vs(yhat, y);
  const Tape::Ref logits =
      voc_logits_graph(tp, bp, cfg, yhat, speaker_row, utt.waveform.codes);
  const Tape::Ref voc = tp.ce_rows(logits, code_targets(utt.waveform.codes));
  return {sts, voc};
}

CompositeRefs composite_loss_graph(Tape& tp, const BoundParams& bp,
                                   const ModelConfig& cfg, Phase phase,
                                   const std::vector<BatchItem>& batch,
                                   const LossWeights& w, uint64_t noise_seed) {
  w.validate();
  LLEVC_CHECK(!batch.empty(), "composite loss needs a nonempty batch");
  const double inv = 1.0 / double(batch.size());
  const std::vector<double> mean_w(batch.size(), inv);

  auto batch_mean = [&](const std::vector<Tape::Ref>& per_utt) {
    return tp.weighted_sum(per_utt, mean_w);
  };

  CompositeRefs out;
  std::vector<double> term_weights;

  if (phase == Phase::train) {
    std::vector<Tape::Ref> tts, sts, stt, ttt, tie;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Utterance& utt = *batch[i].utt;
      LLEVC_CHECK(utt.transcribed,
                  "the train phase requires transcribed utterances; "
                      << utt.utterance_id << " has no transcript");
      const int row = batch[i].speaker_row;
      const int T = utt.features.frames.rows;
      for (Chain c : {Chain::tts, Chain::sts, Chain::stt, Chain::ttt}) {
        const Mat noise =
            chain_noise(noise_seed, int(i), c, T, cfg.latent_dim);
        const Tape::Ref l = chain_loss_graph(tp, bp, cfg, c, utt, row, noise);
        (c == Chain::tts   ? tts
         : c == Chain::sts ? sts
         : c == Chain::stt ? stt
                           : ttt)
            .push_back(l);
      }
      tie.push_back(tie_loss_graph(tp, bp, cfg, utt));
    }
    out.terms = {{"tts", batch_mean(tts)},
                 {"sts", batch_mean(sts)},
                 {"stt", batch_mean(stt)},
                 {"ttt", batch_mean(ttt)},
                 {"tie", batch_mean(tie)}};
    term_weights = {1.0, w.alpha_sts, w.alpha_stt, w.alpha_ttt, w.beta_tie};
  } else if (phase == Phase::adapt) {
    std::vector<Tape::Ref> sts, cycle;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Utterance& utt = *batch[i].utt;
      const Mat& y = utt.features.frames;
      const Mat noise =
          chain_noise(noise_seed, int(i), Chain::sts, y.rows, cfg.latent_dim);
      const StsChain c = build_sts(tp, bp, cfg, y, batch[i].speaker_row,
                                   noise);
      const EncRefs back = senc_graph_ref(tp, bp, cfg, c.yhat);
      sts.push_back(c.loss);
      cycle.push_back(tp.sym_kld_avg(c.enc.mean, c.enc.log_var, back.mean,
                                     back.log_var));
    }
    out.terms = {{"sts", batch_mean(sts)}, {"cycle", batch_mean(cycle)}};
    term_weights = {1.0, w.beta_cycle};
  } else {
    std::vector<Tape::Ref> sts, voc;
    for (size_t i = 0; i < batch.size(); ++i) {
      const Utterance& utt = *batch[i].utt;
      const Mat& y = utt.features.frames;
      LLEVC_CHECK(utt.waveform.samples_per_frame == cfg.samples_per_frame,
                  "utterance " << utt.utterance_id
                               << " was rendered at a different sample rate");
      const int row = batch[i].speaker_row;
      const Mat noise =
          chain_noise(noise_seed, int(i), Chain::sts, y.rows, cfg.latent_dim);
      const StsChain c = build_sts(tp, bp, cfg, y, row, noise);
      // conditioning on the prediction welds the vocoder to the decoder:
      // the cross-entropy gradient flows through yhat into sdec
      const Tape::Ref logits =
          voc_logits_graph(tp, bp, cfg, c.yhat, row, utt.waveform.codes);
      sts.push_back(c.loss);
      voc.push_back(tp.ce_rows(logits, code_targets(utt.waveform.codes)));
    }
    out.terms = {{"sts", batch_mean(sts)}, {"voc", batch_mean(voc)}};
    term_weights = {1.0, w.gamma};
  }

  std::vector<Tape::Ref> term_refs;
  for (const auto& [name, ref] : out.terms) term_refs.push_back(ref);
  out.total = tp.weighted_sum(term_refs, term_weights);
  return out;
}

LossBreakdown breakdown_from(const Tape& tp, const CompositeRefs& refs) {
  LossBreakdown b;
  b.total = tp.scalar(refs.total);
  for (const auto& [name, ref] : refs.terms) b.terms[name] = tp.scalar(ref);
  return b;
}

double chain_loss(const ModelConfig& cfg, const ParamSet& ps, Chain chain,
                  const Utterance& utt, int speaker_row, uint64_t noise_seed) {
  Tape tp;
  const BoundParams bp = bind_params(tp, ps);
  const Mat noise = chain_noise(noise_seed, 0, chain,
                                utt.features.frames.rows, cfg.latent_dim);
  return tp.scalar(chain_loss_graph(tp, bp, cfg, chain, utt, speaker_row,
                                    noise));
}

double tie_loss(const ModelConfig& cfg, const ParamSet& ps,
                const Utterance& utt) {
  Tape tp;
  const BoundParams bp = bind_params(tp, ps);
  return tp.scalar(tie_loss_graph(tp, bp, cfg, utt));
}

double cycle_loss(const ModelConfig& cfg, const ParamSet& ps, const Mat& y,
                  int speaker_row, uint64_t noise_seed) {
  Tape tp;
  const BoundParams bp = bind_params(tp, ps);
  const Mat noise =
      chain_noise(noise_seed, 0, Chain::sts, y.rows, cfg.latent_dim);
  return tp.scalar(cycle_loss_graph(tp, bp, cfg, y, speaker_row, noise));
}

double vocoder_loss(const ModelConfig& cfg, const ParamSet& ps,
                    const Utterance& utt, int speaker_row) {
  Tape tp;
  const BoundParams bp = bind_params(tp, ps);
  return tp.scalar(vocoder_loss_graph(tp, bp, cfg, utt, speaker_row));
}

LossBreakdown composite_loss(const ModelConfig& cfg, const ParamSet& ps,
                             Phase phase, const std::vector<BatchItem>& batch,
                             const LossWeights& w, uint64_t noise_seed) {
  Tape tp;
  const BoundParams bp = bind_params(tp, ps);
  const CompositeRefs refs =
      composite_loss_graph(tp, bp, cfg, phase, batch, w, noise_seed);
  return breakdown_from(tp, refs);
}

}  // namespace llevc
