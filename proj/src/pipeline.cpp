// llevc/src/pipeline.cpp

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

#include "llevc/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "llevc/common.hpp"
#include "llevc/losses.hpp"

namespace llevc {
namespace {

// Fixed noise seed for evaluation-time inference, so scoring a checkpoint is
// a pure function of (checkpoint, corpus).
constexpr uint64_t kEvalSeed = 0x11e5eed;

SnapshotHook save_hook(const std::string& out_path) {
  return [out_path](const Checkpoint& ckpt, const std::string&, int) {
    save_checkpoint(out_path, ckpt);
    return true;
  };
}

// Speakers owning at least one transcribed utterance, with those utterances.
Corpus transcribed_subset(const Corpus& corpus) {
  Corpus sub;
  for (const Utterance& u : corpus.utts)
    if (u.transcribed) sub.utts.push_back(u);
  for (const SpeakerProfile& sp : corpus.speakers) {
    const bool owns = std::any_of(
        sub.utts.begin(), sub.utts.end(),
        [&](const Utterance& u) { return u.speaker_id == sp.speaker_id; });
    if (owns) sub.speakers.push_back(sp);
  }
  return sub;
}

// The single speaker whose utterances are all untranscribed.
int untranscribed_speaker(const Corpus& corpus) {
  int found = -1;
  for (const SpeakerProfile& sp : corpus.speakers) {
    const std::vector<int> idx = corpus.utts_of_speaker(sp.speaker_id);
    if (idx.empty()) continue;
    const bool all = std::all_of(idx.begin(), idx.end(), [&](int i) {
      return !corpus.utts[size_t(i)].transcribed;
    });
    if (!all) continue;
    LLEVC_CHECK(found < 0, "corpus has several untranscribed speakers ("
                               << found << " and " << sp.speaker_id
                               << "); pass --speaker to pick the target");
    found = sp.speaker_id;
  }
  LLEVC_CHECK(found >= 0, "corpus has no untranscribed speaker to adapt to");
  return found;
}

std::vector<const Utterance*> speaker_utts(const Corpus& corpus,
                                           int speaker_id) {
  std::vector<const Utterance*> out;
  for (const Utterance& u : corpus.utts)
    if (u.speaker_id == speaker_id) out.push_back(&u);
  LLEVC_CHECK(!out.empty(), "speaker " << speaker_id
                                       << " has no utterances in the corpus");
  return out;
}

void finish_stage(const TrainResult& result, const std::string& out_path) {
  save_checkpoint(out_path, result.ckpt);
  write_report_csv(result.report, out_path + ".report.csv");
  LLEVC_CHECK(!result.ckpt.run.in_progress,
              "run was abandoned mid-phase; resume it with --in "
                  << out_path);
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

// Mono 16-bit PCM RIFF container around the decoded mu-law samples. The rate
// is nominal: corpus time is measured in frames, not seconds.
void write_pcm_wav(const std::string& path, const Waveform& w) {
  constexpr uint32_t kRate = 16000;
  const uint32_t data_bytes = 2 * uint32_t(w.codes.size());
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF", 4);
  bin::put_u32(out, 36 + data_bytes);
  out.append("WAVE", 4);
  out.append("fmt ", 4);
  bin::put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  bin::put_u32(out, kRate);
  bin::put_u32(out, kRate * 2);
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out.append("data", 4);
  bin::put_u32(out, data_bytes);
  for (uint8_t code : w.codes) {
    const double x = mu_law_decode(code);
    const long v = std::lround(x * 32767.0);
    put_u16(out, uint16_t(int16_t(std::clamp(v, -32768L, 32767L))));
  }
  write_file_bytes(path, out);
}

void maybe_render(const std::string& render_path, const Waveform& w) {
  if (!render_path.empty()) write_pcm_wav(render_path, w);
}

}  // namespace

int run_gen_data(const CorpusSpec& spec, uint64_t seed,
                 const std::string& out_dir) {
  const Corpus corpus = generate_corpus(spec, seed);
  write_corpus(corpus, out_dir);
  return int(corpus.utts.size());
}

void run_train(const RunConfig& cfg, const std::string& data_dir,
               const std::string& in_path, const std::string& out_path) {
  const Corpus corpus = read_corpus(data_dir);
  const Corpus sub = transcribed_subset(corpus);
  LLEVC_CHECK(!sub.utts.empty(),
              "corpus in " << data_dir << " has no transcribed utterances");
  const std::array<uint8_t, 32> hash = run_config_hash(cfg);
  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!in_path.empty()) {
    resume = load_checkpoint_verified(in_path, cfg.model, hash);
    LLEVC_CHECK(resume.run.in_progress,
                "checkpoint " << in_path
                              << " is complete; train starts fresh when --in "
                                 "is omitted");
    resume_ptr = &resume;
  }
  finish_stage(initial_train(sub, cfg.model, cfg.train, hash,
                             save_hook(out_path), resume_ptr),
               out_path);
}

void run_adapt(const RunConfig& cfg, const std::string& data_dir,
               const std::string& in_path, const std::string& out_path,
               int target_speaker) {
  const Corpus corpus = read_corpus(data_dir);
  const Checkpoint start =
      load_checkpoint_verified(in_path, cfg.model, run_config_hash(cfg));
  const int target =
      target_speaker >= 0 ? target_speaker : untranscribed_speaker(corpus);
  const std::vector<const Utterance*> utts = speaker_utts(corpus, target);
  const Checkpoint* resume_ptr = start.run.in_progress ? &start : nullptr;
  finish_stage(
      adapt(start, utts, cfg.adapt, save_hook(out_path), resume_ptr),
      out_path);
}

void run_weld(const RunConfig& cfg, const std::string& data_dir,
              const std::string& in_path, const std::string& out_path) {
  const Corpus corpus = read_corpus(data_dir);
  const Checkpoint start =
      load_checkpoint_verified(in_path, cfg.model, run_config_hash(cfg));
  LLEVC_CHECK(start.target_speaker_id >= 0,
              "checkpoint " << in_path
                            << " has no adaptation target; run adapt first");
  const std::vector<const Utterance*> utts =
      speaker_utts(corpus, start.target_speaker_id);
  const Checkpoint* resume_ptr = start.run.in_progress ? &start : nullptr;
  finish_stage(weld(start, utts, cfg.weld, save_hook(out_path), resume_ptr),
               out_path);
}

void run_tts(const std::string& ckpt_path, const std::string& phonemes_path,
             const std::string& out_path, int speaker_id, uint64_t seed,
             const std::string& render_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PhonemeSequence x = read_phoneme_file(phonemes_path);
  const int spk = speaker_id >= 0 ? speaker_id : ckpt.target_speaker_id;
  LLEVC_CHECK(spk >= 0,
              "no --speaker given and the checkpoint has no adaptation "
              "target");
  const InferResult r = tts_infer(ckpt, x, spk, seed);
  write_waveform_blob(out_path, r.waveform);
  maybe_render(render_path, r.waveform);
}

void run_vc(const std::string& ckpt_path, const std::string& source_path,
            const std::string& out_path, uint64_t seed,
            const std::string& render_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Mat y = read_feature_blob(source_path);
  const InferResult r = vc_infer(ckpt, y, seed);
  write_waveform_blob(out_path, r.waveform);
  maybe_render(render_path, r.waveform);
}

void run_eval(const std::string& ckpt_path, const std::string& corpus_dir,
              const std::string& out_csv, const std::string& votes_path,
              int eval_cap) {
  LLEVC_CHECK(eval_cap >= 1, "eval cap must be positive, got " << eval_cap);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Corpus corpus = read_corpus(corpus_dir);
  for (const SpeakerProfile& sp : corpus.speakers) {
    const bool known =
        std::find(ckpt.speaker_ids.begin(), ckpt.speaker_ids.end(),
                  sp.speaker_id) != ckpt.speaker_ids.end();
    LLEVC_CHECK(known, "corpus speaker "
                           << sp.speaker_id
                           << " is not registered in the checkpoint");
  }

  const SpeakerProbe probe = train_speaker_probe(corpus);
  std::vector<MetricRow> rows;

  std::vector<const Utterance*> transcribed;
  for (const Utterance& u : corpus.utts)
    if (u.transcribed) transcribed.push_back(&u);
  if (!transcribed.empty())
    rows.push_back({"eval", "model", -1, "tie_gap", tie_gap(transcribed,
                                                            ckpt)});

  const bool can_convert =
      ckpt.stage != Stage::initial && ckpt.target_speaker_id >= 0;
  for (const SpeakerProfile& sp : corpus.speakers) {
    const std::vector<int> idx = corpus.utts_of_speaker(sp.speaker_id);
    const int cap = std::min<int>(eval_cap, int(idx.size()));

    double nat_sim = 0.0;
    for (int i = 0; i < cap; ++i)
      nat_sim += speaker_similarity(corpus.utts[size_t(idx[size_t(i)])]
                                        .features,
                                    probe, sp.speaker_id);
    rows.push_back(
        {"eval", "natural", sp.speaker_id, "probe_similarity", nat_sim / cap});

    int tts_n = 0;
    double tts_dist = 0.0, tts_sim = 0.0;
    for (int i = 0; i < cap; ++i) {
      const Utterance& u = corpus.utts[size_t(idx[size_t(i)])];
      if (!u.transcribed) continue;
      const InferResult r = tts_infer(ckpt, u.phonemes(), sp.speaker_id,
                                      kEvalSeed ^ uint64_t(2 * idx[size_t(i)]));
      tts_dist += mel_distortion(r.features, u.features);
      tts_sim += speaker_similarity(r.features, probe, sp.speaker_id);
      ++tts_n;
    }
    if (tts_n > 0) {
      rows.push_back({"eval", "tts", sp.speaker_id, "mel_distortion",
                      tts_dist / tts_n});
      rows.push_back({"eval", "tts", sp.speaker_id, "probe_similarity",
                      tts_sim / tts_n});
    }

    if (can_convert && sp.speaker_id != ckpt.target_speaker_id) {
      double vc_sim = 0.0;
      for (int i = 0; i < cap; ++i) {
        const Utterance& u = corpus.utts[size_t(idx[size_t(i)])];
        const InferResult r = vc_infer(
            ckpt, u.features.frames,
            kEvalSeed ^ uint64_t(2 * idx[size_t(i)] + 1));
        vc_sim +=
            speaker_similarity(r.features, probe, ckpt.target_speaker_id);
      }
      rows.push_back({"eval", "vc", sp.speaker_id, "target_similarity",
                      vc_sim / cap});
    }
  }

  if (!votes_path.empty()) {
    const std::vector<VoteRow> votes = read_votes_csv(votes_path);
    for (const PairTally& t : tally_votes(votes)) {
      const PreferenceResult p = preference_analysis(t.wins_a, t.wins_b);
      const std::string pair = t.system_a + " vs " + t.system_b;
      rows.push_back({"preference", pair, -1, "n", double(p.n)});
      rows.push_back({"preference", pair, -1, "share_a", p.share_a});
      rows.push_back({"preference", pair, -1, "ci_lo", p.ci_95.lo});
      rows.push_back({"preference", pair, -1, "ci_hi", p.ci_95.hi});
      rows.push_back({"preference", pair, -1, "p_exact", p.p_exact});
    }
  }

  write_metrics_csv(rows, out_csv);
}

namespace {

// Randomly sized but always-valid model for gradient checking; dimensions
// stay small so central differences over every parameter finish quickly.
ModelConfig small_config(uint64_t seed) {
  Rng rng = Rng::substream(seed, 77);
  ModelConfig cfg;
  cfg.feature_dim = 3 + int(rng.range(3));
  cfg.latent_dim = 2 + int(rng.range(3));
  cfg.embed_dim = 3 + int(rng.range(2));
  cfg.speaker_dim = 2;
  cfg.vocab_size = 5 + int(rng.range(3));
  cfg.max_speakers = 3;
  cfg.enc_layers = 1 + int(rng.range(2));
  cfg.enc_kernel = 3;
  cfg.enc_channels = 3 + int(rng.range(2));
  cfg.tdec_kernel = 3;
  cfg.dec_hidden = 3 + int(rng.range(2));
  cfg.voc_channels = 3;
  cfg.voc_kernel = 2;
  cfg.voc_dilations = {1, 2};
  cfg.samples_per_frame = 2;
  cfg.num_codes = 256;
  cfg.validate();
  return cfg;
}

Utterance check_utterance(const ModelConfig& cfg, uint64_t seed,
                          bool transcribed) {
  Rng rng = Rng::substream(seed, 78);
  Utterance u;
  u.utterance_id = "gradcheck";
  u.speaker_id = 0;
  u.language_id = 0;
  u.transcribed = transcribed;
  PhonemeSequence x;
  const int n = 2 + int(rng.range(2));
  for (int i = 0; i < n; ++i) {
    x.symbols.push_back(int(rng.range(uint64_t(cfg.vocab_size))));
    x.durations.push_back(1 + int(rng.range(3)));
  }
  if (transcribed) u.maybe_phonemes = x;
  const int t = x.total_frames();
  u.features.frames = Mat(t, cfg.feature_dim);
  for (double& v : u.features.frames.a) v = 0.5 * rng.normal();
  u.waveform.samples_per_frame = cfg.samples_per_frame;
  u.waveform.codes.resize(size_t(t) * size_t(cfg.samples_per_frame));
  for (uint8_t& c : u.waveform.codes)
    c = uint8_t(rng.range(uint64_t(cfg.num_codes)));
  return u;
}

// Forward/backward pair for one loss expression, swept by grad_check.
template <class Builder>
GradReport fd_report(const ParamSet& ps, const Builder& build, double eps) {
  ValueFn vf = [&](const ParamSet& p) {
    Tape tp;
    const BoundParams bp = bind_params(tp, p);
    return tp.scalar(build(tp, bp));
  };
  GradFn gf = [&](const ParamSet& p) {
    Tape tp;
    const BoundParams bp = bind_params(tp, p);
    tp.backward(build(tp, bp));
    std::vector<Mat> g;
    g.reserve(p.t.size());
    for (const ParamTensor& t : p.t)
      g.emplace_back(t.value.rows, t.value.cols);
    tp.add_param_grads(g);
    return g;
  };
  return grad_check(vf, gf, ps, eps);
}

}  // namespace

bool GradCheckSummary::all_ok() const {
  return std::all_of(items.begin(), items.end(), [&](const GradCheckItem& i) {
    return i.report.max_rel_err <= tolerance;
  });
}

const GradCheckItem& GradCheckSummary::worst() const {
  LLEVC_CHECK(!items.empty(), "gradient check ran no items");
  return *std::max_element(items.begin(), items.end(),
                           [](const GradCheckItem& a, const GradCheckItem& b) {
                             return a.report.max_rel_err <
                                    b.report.max_rel_err;
                           });
}

GradCheckSummary run_grad_check(const LossWeights& weights, uint64_t seed0,
                                int n_seeds) {
  constexpr double kEps = 1e-5;
  GradCheckSummary summary;
  for (int s = 0; s < n_seeds; ++s) {
    const uint64_t seed = seed0 + uint64_t(s);
    const ModelConfig cfg = small_config(seed);
    const ParamSet ps = init_params(cfg, seed);
    const Utterance u = check_utterance(cfg, seed, true);
    const Utterance u2 = check_utterance(cfg, seed + 101, true);
    const int t = u.features.frames.rows;

    const auto add = [&](const std::string& name, const GradReport& r) {
      summary.items.push_back({name, seed, r});
    };
    for (const Chain chain :
         {Chain::tts, Chain::sts, Chain::stt, Chain::ttt}) {
      const Mat noise = chain_noise(seed, 0, chain, t, cfg.latent_dim);
      add(std::string("chain_") + chain_name(chain),
          fd_report(ps,
                    [&](Tape& tp, const BoundParams& bp) {
                      return chain_loss_graph(tp, bp, cfg, chain, u, 0,
                                              noise);
                    },
                    kEps));
    }
    add("tie", fd_report(ps,
                         [&](Tape& tp, const BoundParams& bp) {
                           return tie_loss_graph(tp, bp, cfg, u);
                         },
                         kEps));
    {
      const Mat noise = chain_noise(seed, 0, Chain::sts, t, cfg.latent_dim);
      add("cycle", fd_report(ps,
                             [&](Tape& tp, const BoundParams& bp) {
                               return cycle_loss_graph(
                                   tp, bp, cfg, u.features.frames, 0, noise);
                             },
                             kEps));
    }
    add("vocoder", fd_report(ps,
                             [&](Tape& tp, const BoundParams& bp) {
                               return vocoder_loss_graph(tp, bp, cfg, u, 0);
                             },
                             kEps));
    const std::vector<BatchItem> batch = {{&u, 0}, {&u2, 1}};
    for (const Phase phase : {Phase::train, Phase::adapt, Phase::weld}) {
      add(std::string("composite_") + phase_name(phase),
          fd_report(ps,
                    [&](Tape& tp, const BoundParams& bp) {
                      return composite_loss_graph(tp, bp, cfg, phase, batch,
                                                  weights, seed)
                          .total;
                    },
                    kEps));
    }
  }
  return summary;
}

}  // namespace llevc
