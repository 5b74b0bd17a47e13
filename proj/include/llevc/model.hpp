// llevc/model.hpp

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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "llevc/corpus.hpp"
#include "llevc/numerics.hpp"

namespace llevc {

// Parameter groups; every trainable tensor belongs to exactly one.
enum Group : int {
  kGroupTenc = 0,
  kGroupSenc = 1,
  kGroupTdec = 2,
  kGroupSdec = 3,
  kGroupVoc = 4,
  kGroupSpeaker = 5,
};
const char* group_name(int group);
int group_from_name(const std::string& name);

struct ModelConfig {
  int feature_dim = 8;    // D
  int latent_dim = 16;    // L
  int embed_dim = 16;     // symbol embedding width
  int speaker_dim = 8;    // S
  int vocab_size = 28;    // union inventory
  int max_speakers = 16;  // speaker_table rows, pre-allocated
  int enc_layers = 3;
  int enc_kernel = 5;
  int enc_channels = 32;
  int tdec_kernel = 3;
  int dec_hidden = 32;
  int voc_channels = 32;
  int voc_kernel = 2;
  std::vector<int> voc_dilations = {1, 2, 4, 8};
  int samples_per_frame = 16;
  int num_codes = 256;

  bool operator==(const ModelConfig&) const = default;

  void validate() const;
  // frames on either side of a span that encoder output may depend on
  int encoder_receptive_radius() const {
    return enc_layers * (enc_kernel / 2);
  }
};

// Per-frame diagonal-Gaussian latents; z in the notation of the loss module.
using LLE = DiagGaussianSeq;

ParamSet init_params(const ModelConfig& cfg, uint64_t seed);

// --- tape graph builders (training path) ---

// every tensor of `ps` bound into the tape once, index-aligned
struct BoundParams {
  const ParamSet* ps = nullptr;
  std::vector<Tape::Ref> refs;
  Tape::Ref operator()(std::string_view name) const;
};
BoundParams bind_params(Tape& t, const ParamSet& ps);

std::vector<int> frame_symbols(const PhonemeSequence& x, int vocab_size);

struct EncRefs {
  Tape::Ref mean = -1;
  Tape::Ref log_var = -1;  // clamped inside the graph
};
EncRefs tenc_graph(Tape& t, const BoundParams& bp, const ModelConfig& cfg,
                   const PhonemeSequence& x);
EncRefs senc_graph(Tape& t, const BoundParams& bp, const ModelConfig& cfg,
                   const Mat& y);
// speech encoder over a live node, e.g. reconstructed features; gradients
// flow into whatever produced the input
EncRefs senc_graph_ref(Tape& t, const BoundParams& bp, const ModelConfig& cfg,
                       Tape::Ref y);
// z (T x L) -> logits (T x V)
Tape::Ref tdec_logits_graph(Tape& t, const BoundParams& bp,
                            const ModelConfig& cfg, Tape::Ref z);
// teacher-forced frame prediction: z (T x L), previous-frame input shifted
// from y_teacher; output T x D
Tape::Ref sdec_tf_graph(Tape& t, const BoundParams& bp, const ModelConfig& cfg,
                        Tape::Ref z, int speaker_row, const Mat& y_teacher);
// same decoder with the previous-frame inputs given directly (row t holds
// whatever should precede frame t); scheduled sampling builds prev from a
// mix of teacher frames and earlier predictions
Tape::Ref sdec_prev_graph(Tape& t, const BoundParams& bp,
                          const ModelConfig& cfg, Tape::Ref z, int speaker_row,
                          const Mat& prev);
// teacher-forced next-code logits: conditioning features may be a constant or
// a live graph node (welding feeds predicted features through here); output
// (T*samples_per_frame) x num_codes
Tape::Ref voc_logits_graph(Tape& t, const BoundParams& bp,
                           const ModelConfig& cfg, Tape::Ref cond_features,
                           int speaker_row, const std::vector<uint8_t>& codes);

// --- inference path (no tape, bit-identical math to the graphs) ---

LLE encode_text(const ModelConfig& cfg, const ParamSet& ps,
                const PhonemeSequence& x);
LLE encode_speech(const ModelConfig& cfg, const ParamSet& ps, const Mat& y);
Mat decode_speech_tf(const ModelConfig& cfg, const ParamSet& ps, const Mat& z,
                     int speaker_row, const Mat& y_teacher);
Mat decode_speech_free(const ModelConfig& cfg, const ParamSet& ps,
                       const Mat& z, int speaker_row);
Mat tdec_posterior(const ModelConfig& cfg, const ParamSet& ps, const Mat& z);
Mat vocode_logits_tf(const ModelConfig& cfg, const ParamSet& ps,
                     const Mat& features, int speaker_row,
                     const std::vector<uint8_t>& codes);
// incremental evaluation over a provided code history; matches the batched
// pass sample for sample
Mat vocode_logits_free(const ModelConfig& cfg, const ParamSet& ps,
                       const Mat& features, int speaker_row,
                       const std::vector<uint8_t>& codes);
std::vector<uint8_t> vocode_free(const ModelConfig& cfg, const ParamSet& ps,
                                 const Mat& features, int speaker_row,
                                 Rng& rng);

// --- checkpoints ---

enum class Stage : uint8_t { initial = 0, adapted = 1, welded = 2 };
const char* stage_name(Stage s);

// mid-run position, so an interrupted phase can resume exactly
struct RunState {
  bool in_progress = false;
  std::string phase;
  uint32_t step = 0;
};

struct Checkpoint {
  ModelConfig cfg;  // serialized with the checkpoint so inference needs no
                    // separate config file
  Stage stage = Stage::initial;
  std::array<uint8_t, 32> config_hash{};
  ParamSet params;
  Rng rng{};
  int target_speaker_id = -1;
  std::vector<int> speaker_ids;  // table row -> corpus speaker id
  RunState run;
};

int speaker_row(const Checkpoint& ckpt, int speaker_id);  // throws unknown
int register_speaker(Checkpoint& ckpt, int speaker_id);   // allocates a row

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     bool f32_payload = false);
// Loads with the model configuration embedded in the file. The two-argument
// form additionally requires the embedded configuration to equal `cfg`. The
// config_hash inside the file is returned as-is for verification against the
// caller's run configuration.
Checkpoint load_checkpoint(const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& cfg);

bool params_bit_equal(const ParamSet& a, const ParamSet& b);

// --- end-to-end inference ---

struct InferResult {
  AcousticFeatures features;
  Waveform waveform;
};

// speaker_id must be registered; synthesizing the adaptation target requires
// stage >= adapted
InferResult tts_infer(const Checkpoint& ckpt, const PhonemeSequence& x,
                      int speaker_id, uint64_t seed);
// conversion to the adaptation target; requires stage >= adapted
InferResult vc_infer(const Checkpoint& ckpt, const Mat& y_src, uint64_t seed);

}  // namespace llevc
