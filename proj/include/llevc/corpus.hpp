// llevc/corpus.hpp

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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "llevc/mat.hpp"

namespace llevc {

struct PhonemeSequence {
  std::vector<int> symbols;
  std::vector<int> durations;  // frames per symbol, all >= 1

  int total_frames() const;
  void validate() const;
};

struct AcousticFeatures {
  Mat frames;  // T x D, entries snapped to f32 so blob round-trips bit-exactly
};

struct Waveform {
  std::vector<uint8_t> codes;  // 8-bit mu-law
  int samples_per_frame = 0;
};

// Synthetic ground truth for one voice. Models never read transform_A/bias_b;
// they exist so evaluation can render reference audio for any content.
struct SpeakerProfile {
  int speaker_id = -1;
  int language_id = -1;
  Mat transform_A;              // D x D, condition number < 10 by construction
  std::vector<double> bias_b;   // D
  double f0 = 1.0;              // carried on the last feature channel
};

struct Utterance {
  std::string utterance_id;
  int speaker_id = -1;
  int language_id = -1;
  bool transcribed = false;
  std::optional<PhonemeSequence> maybe_phonemes;  // absent when untranscribed
  AcousticFeatures features;
  Waveform waveform;

  // The only sanctioned path to the transcription; untranscribed utterances
  // refuse it.
  const PhonemeSequence& phonemes() const;
};

struct CorpusSpec {
  // language A owns symbol ids [0, lang_a_inventory); language B borrows the
  // top lang_b_shared of those and adds (lang_b_inventory - lang_b_shared)
  // fresh ids above them
  int lang_a_inventory = 20;
  int lang_b_inventory = 24;
  int lang_b_shared = 16;
  int speakers_a = 8;
  int speakers_b = 1;
  int utts_per_speaker_a = 50;
  int utts_per_speaker_b = 70;
  bool transcribed_a = true;
  bool transcribed_b = false;
  int min_symbols = 4;
  int max_symbols = 8;
  int min_duration = 2;   // frames per phoneme
  int max_duration = 6;
  int feature_dim = 8;
  int samples_per_frame = 16;
  double noise_sigma = 0.05;

  void validate() const;
  std::vector<int> language_symbols(int language_id) const;
  int vocab_size() const;  // size of the union inventory
};

struct Corpus {
  std::vector<SpeakerProfile> speakers;
  std::vector<Utterance> utts;

  int feature_dim() const;
  const SpeakerProfile& speaker(int speaker_id) const;
  std::vector<int> utts_of_speaker(int speaker_id) const;  // indices into utts
};

// Train/held-out split by utterance id: the last `held_out_per_speaker`
// utterances of every speaker (by id order) are held out. The two index sets
// partition the corpus.
struct Split {
  std::vector<int> train;
  std::vector<int> held_out;
};
Split split_by_utterance(const Corpus& corpus, int held_out_per_speaker);

// fixed per-symbol prototype, independent of corpus seed; last channel is 1
// so the f0 block of transform_A turns it into the pitch track
std::vector<double> symbol_prototype(int symbol_id, int dim);
// deterministic within-phoneme envelope at frame i of dur, in (0, 1]
double phoneme_envelope(int i, int dur);

Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed);

AcousticFeatures render_features(const SpeakerProfile& speaker,
                                 const PhonemeSequence& phonemes, double sigma,
                                 uint64_t noise_seed);

Waveform render_waveform(const AcousticFeatures& features,
                         const SpeakerProfile& speaker,
                         int samples_per_frame = 16);

uint8_t mu_law_encode(double x);   // x clipped to [-1, 1], 0 -> code 128
double mu_law_decode(uint8_t code);

// Plain text, one "<symbol> <duration>" pair per line.
void write_phoneme_file(const std::string& path, const PhonemeSequence& ph);
PhonemeSequence read_phoneme_file(const std::string& path);

void write_feature_blob(const std::string& path, const Mat& frames);
Mat read_feature_blob(const std::string& path);
void write_waveform_blob(const std::string& path, const Waveform& w);
Waveform read_waveform_blob(const std::string& path);

void write_corpus(const Corpus& corpus, const std::string& directory);
Corpus read_corpus(const std::string& directory);

bool corpus_equal(const Corpus& a, const Corpus& b);

}  // namespace llevc
