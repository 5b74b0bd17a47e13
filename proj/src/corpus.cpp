// llevc/src/corpus.cpp

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

#include "llevc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "llevc/common.hpp"

namespace llevc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint32_t kBlobVersion = 1;

constexpr double kMuLawLn256 = 5.545177444479562;  // ln(256)

double snap_f32(double v) { return double(float(v)); }

std::string speaker_name(int speaker_id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02d", speaker_id);
  return buf;
}

std::string utt_name(int speaker_id, int utt_index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "s%02d_u%04d", speaker_id, utt_index);
  return buf;
}

// orthonormal columns via modified Gram-Schmidt on a random Gaussian matrix
Mat random_orthogonal(Rng& rng, int n) {
  Mat Q(n, n);
  for (double& v : Q.a) v = rng.normal();
  for (int c = 0; c < n; ++c) {
    for (int p = 0; p < c; ++p) {
      double dot = 0;
      for (int r = 0; r < n; ++r) dot += Q(r, c) * Q(r, p);
      for (int r = 0; r < n; ++r) Q(r, c) -= dot * Q(r, p);
    }
    double norm = 0;
    for (int r = 0; r < n; ++r) norm += Q(r, c) * Q(r, c);
    norm = std::sqrt(norm);
    LLEVC_CHECK(norm > 1e-8, "random_orthogonal: degenerate draw");
    for (int r = 0; r < n; ++r) Q(r, c) /= norm;
  }
  return Q;
}

// A is block diagonal: a well-conditioned (D-1)x(D-1) spectral block over the
// timbre channels and the scalar f0 on the last channel. Singular values are
// the block's singulars plus f0 itself, so cond(A) <= 1.8/0.6 = 3.
Mat speaker_transform(Rng& rng, int dim, double f0) {
  const int m = dim - 1;
  Mat A(dim, dim);
  if (m > 0) {
    Mat Q1 = random_orthogonal(rng, m);
    Mat Q2 = random_orthogonal(rng, m);
    std::vector<double> sing(static_cast<size_t>(m));
    for (double& s : sing) s = 0.7 + 0.8 * rng.uniform();
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        double acc = 0;
        for (int k = 0; k < m; ++k) acc += Q1(r, k) * sing[size_t(k)] * Q2(c, k);
        A(r, c) = acc;
      }
  }
  A(dim - 1, dim - 1) = f0;
  return A;
}

// f0 is drawn from a jittered stratum of (0.5, 2.0) so any two voices in one
// corpus stay at least 0.75/n_speakers apart in pitch. Independent draws can
// land arbitrarily close, which makes two speakers observationally identical
// on the pitch channel and breaks the corpus's role as a speaker oracle.
SpeakerProfile make_speaker(Rng& rng, int speaker_id, int language_id,
                            int n_speakers, int dim) {
  SpeakerProfile sp;
  sp.speaker_id = speaker_id;
  sp.language_id = language_id;
  sp.f0 = 0.5 + 1.5 * (speaker_id + 0.25 + 0.5 * rng.uniform()) / n_speakers;
  sp.transform_A = speaker_transform(rng, dim, sp.f0);
  sp.bias_b.assign(size_t(dim), 0.0);
  for (int d = 0; d < dim - 1; ++d) sp.bias_b[size_t(d)] = 0.8 * rng.normal();
  return sp;
}

}  // namespace

// Plain-text one pair per line: "<symbol> <duration>".
void write_phoneme_file(const std::string& path, const PhonemeSequence& ph) {
  std::ostringstream os;
  for (size_t i = 0; i < ph.symbols.size(); ++i)
    os << ph.symbols[i] << ' ' << ph.durations[i] << '\n';
  write_file_bytes(path, os.str());
}

PhonemeSequence read_phoneme_file(const std::string& path) {
  std::istringstream is(read_file_bytes(path));
  PhonemeSequence ph;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int sym = 0, dur = 0;
    LLEVC_CHECK(bool(ls >> sym >> dur),
                "phoneme file " << path << ": bad line '" << line << "'");
    ph.symbols.push_back(sym);
    ph.durations.push_back(dur);
  }
  ph.validate();
  return ph;
}

int PhonemeSequence::total_frames() const {
  int t = 0;
  for (int d : durations) t += d;
  return t;
}

void PhonemeSequence::validate() const {
  LLEVC_CHECK(!symbols.empty(), "PhonemeSequence: empty");
  LLEVC_CHECK(symbols.size() == durations.size(),
              "PhonemeSequence: " << symbols.size() << " symbols vs "
                                  << durations.size() << " durations");
  for (int d : durations)
    LLEVC_CHECK(d >= 1, "PhonemeSequence: duration " << d << " < 1");
}

const PhonemeSequence& Utterance::phonemes() const {
  LLEVC_CHECK(transcribed, "utterance " << utterance_id
                                        << " is untranscribed; no phonemes");
  LLEVC_CHECK(maybe_phonemes.has_value(),
              "utterance " << utterance_id << " lacks phoneme data");
  return *maybe_phonemes;
}

void CorpusSpec::validate() const {
  LLEVC_CHECK(lang_a_inventory >= 1, "CorpusSpec: empty language-A inventory");
  LLEVC_CHECK(lang_b_inventory >= 1, "CorpusSpec: empty language-B inventory");
  LLEVC_CHECK(lang_b_shared >= 0 && lang_b_shared <= lang_b_inventory &&
                  lang_b_shared <= lang_a_inventory,
              "CorpusSpec: lang_b_shared out of range");
  LLEVC_CHECK(speakers_a >= 1 && speakers_b >= 0, "CorpusSpec: speaker counts");
  LLEVC_CHECK(utts_per_speaker_a >= 1 &&
                  (speakers_b == 0 || utts_per_speaker_b >= 1),
              "CorpusSpec: utterance counts");
  LLEVC_CHECK(1 <= min_symbols && min_symbols <= max_symbols,
              "CorpusSpec: symbol count bounds");
  LLEVC_CHECK(1 <= min_duration && min_duration <= max_duration,
              "CorpusSpec: duration bounds");
  LLEVC_CHECK(feature_dim >= 2, "CorpusSpec: feature_dim must be >= 2");
  LLEVC_CHECK(samples_per_frame >= 1, "CorpusSpec: samples_per_frame");
  LLEVC_CHECK(noise_sigma >= 0.0, "CorpusSpec: negative noise_sigma");
}

std::vector<int> CorpusSpec::language_symbols(int language_id) const {
  std::vector<int> out;
  if (language_id == 0) {
    for (int s = 0; s < lang_a_inventory; ++s) out.push_back(s);
  } else if (language_id == 1) {
    for (int s = lang_a_inventory - lang_b_shared; s < lang_a_inventory; ++s)
      out.push_back(s);
    const int fresh = lang_b_inventory - lang_b_shared;
    for (int s = 0; s < fresh; ++s) out.push_back(lang_a_inventory + s);
  } else {
    LLEVC_CHECK(false, "language_symbols: unknown language " << language_id);
  }
  return out;
}

int CorpusSpec::vocab_size() const {
  return lang_a_inventory + (lang_b_inventory - lang_b_shared);
}

int Corpus::feature_dim() const {
  LLEVC_CHECK(!utts.empty(), "Corpus::feature_dim: empty corpus");
  return utts[0].features.frames.cols;
}

const SpeakerProfile& Corpus::speaker(int speaker_id) const {
  for (const SpeakerProfile& sp : speakers)
    if (sp.speaker_id == speaker_id) return sp;
  throw Error("Corpus::speaker: unknown speaker " +
              std::to_string(speaker_id));
}

std::vector<int> Corpus::utts_of_speaker(int speaker_id) const {
  std::vector<int> out;
  for (size_t i = 0; i < utts.size(); ++i)
    if (utts[i].speaker_id == speaker_id) out.push_back(int(i));
  return out;
}

Split split_by_utterance(const Corpus& corpus, int held_out_per_speaker) {
  LLEVC_CHECK(held_out_per_speaker >= 0, "split: negative hold-out");
  Split split;
  for (const SpeakerProfile& sp : corpus.speakers) {
    std::vector<int> ids = corpus.utts_of_speaker(sp.speaker_id);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      return corpus.utts[size_t(a)].utterance_id <
             corpus.utts[size_t(b)].utterance_id;
    });
    LLEVC_CHECK(int(ids.size()) > held_out_per_speaker,
                "split: speaker " << sp.speaker_id << " has only "
                                  << ids.size() << " utterances");
    const size_t cut = ids.size() - size_t(held_out_per_speaker);
    for (size_t i = 0; i < ids.size(); ++i)
      (i < cut ? split.train : split.held_out).push_back(ids[i]);
  }
  return split;
}

std::vector<double> symbol_prototype(int symbol_id, int dim) {
  LLEVC_CHECK(symbol_id >= 0, "symbol_prototype: negative symbol");
  LLEVC_CHECK(dim >= 2, "symbol_prototype: dim must be >= 2");
  Rng rng = Rng::substream(0x70726f746fULL, uint64_t(symbol_id));
  std::vector<double> p(static_cast<size_t>(dim));
  for (int d = 0; d < dim - 1; ++d) p[size_t(d)] = 2.0 * rng.uniform() - 1.0;
  p[size_t(dim) - 1] = 1.0;
  return p;
}

// The envelope range is kept narrow so that per-utterance loudness variation
// stays below the between-speaker spacing of the pitch channel; a wider range
// makes distinct voices overlap observationally.
double phoneme_envelope(int i, int dur) {
  const double tau = (double(i) + 0.5) / double(dur);
  return 0.75 + 0.25 * std::sin(3.141592653589793 * tau);
}

AcousticFeatures render_features(const SpeakerProfile& speaker,
                                 const PhonemeSequence& phonemes, double sigma,
                                 uint64_t noise_seed) {
  phonemes.validate();
  const int D = speaker.transform_A.rows;
  LLEVC_CHECK(D >= 2 && speaker.transform_A.cols == D,
              "render_features: bad transform shape");
  LLEVC_CHECK(int(speaker.bias_b.size()) == D, "render_features: bias size");
  Rng noise = Rng::substream(noise_seed, 0);
  Mat Y(phonemes.total_frames(), D);
  int t = 0;
  for (size_t p = 0; p < phonemes.symbols.size(); ++p) {
    const std::vector<double> proto = symbol_prototype(phonemes.symbols[p], D);
    for (int i = 0; i < phonemes.durations[p]; ++i, ++t) {
      const double env = phoneme_envelope(i, phonemes.durations[p]);
      for (int d = 0; d < D; ++d) {
        double acc = speaker.bias_b[size_t(d)];
        for (int k = 0; k < D; ++k)
          acc += speaker.transform_A(d, k) * proto[size_t(k)] * env;
        if (sigma > 0.0) acc += sigma * noise.normal();
        Y(t, d) = snap_f32(acc);
      }
    }
  }
  AcousticFeatures out;
  out.frames = std::move(Y);
  return out;
}

uint8_t mu_law_encode(double x) {
  x = std::min(1.0, std::max(-1.0, x));
  const double y = (x < 0 ? -1.0 : 1.0) *
                   std::log1p(255.0 * std::abs(x)) / kMuLawLn256;
  const long code = std::lround(y * 127.5 + 127.5);
  return uint8_t(std::min(255L, std::max(0L, code)));
}

double mu_law_decode(uint8_t code) {
  const double y = (double(code) - 127.5) / 127.5;
  return (y < 0 ? -1.0 : 1.0) * (std::exp(std::abs(y) * kMuLawLn256) - 1.0) /
         255.0;
}

Waveform render_waveform(const AcousticFeatures& features,
                         const SpeakerProfile& speaker,
                         int samples_per_frame) {
  LLEVC_CHECK(samples_per_frame >= 1, "render_waveform: samples_per_frame");
  const Mat& F = features.frames;
  LLEVC_CHECK(F.rows >= 1 && F.cols >= 1, "render_waveform: empty features");
  const int harmonics = std::min(3, F.cols - 1);
  Waveform w;
  w.samples_per_frame = samples_per_frame;
  w.codes.resize(size_t(F.rows) * size_t(samples_per_frame));
  size_t n = 0;
  for (int t = 0; t < F.rows; ++t) {
    for (int s = 0; s < samples_per_frame; ++s, ++n) {
      double x = 0.0;
      for (int h = 0; h <= harmonics; ++h) {
        const double amp = h < harmonics ? F(t, h) : F(t, F.cols - 1);
        const double phase = 2.0 * 3.141592653589793 * speaker.f0 *
                             double(h + 1) * double(n) / 32.0;
        x += amp * std::sin(phase);
      }
      w.codes[n] = mu_law_encode(0.2 * x);
    }
  }
  return w;
}

Corpus generate_corpus(const CorpusSpec& spec, uint64_t seed) {
  spec.validate();
  Corpus corpus;
  Rng speaker_rng = Rng::substream(seed, 1);

  struct LangPlan {
    int language_id;
    int speakers;
    int utts;
    bool transcribed;
  };
  const LangPlan plans[2] = {
      {0, spec.speakers_a, spec.utts_per_speaker_a, spec.transcribed_a},
      {1, spec.speakers_b, spec.utts_per_speaker_b, spec.transcribed_b}};

  int next_speaker = 0;
  for (const LangPlan& plan : plans) {
    const std::vector<int> inventory = spec.language_symbols(plan.language_id);
    for (int s = 0; s < plan.speakers; ++s) {
      const int speaker_id = next_speaker++;
      corpus.speakers.push_back(make_speaker(speaker_rng, speaker_id,
                                             plan.language_id,
                                             spec.speakers_a + spec.speakers_b,
                                             spec.feature_dim));
      const SpeakerProfile& sp = corpus.speakers.back();
      Rng content = Rng::substream(seed, 1000 + uint64_t(speaker_id));
      for (int u = 0; u < plan.utts; ++u) {
        PhonemeSequence ph;
        const int n_sym =
            spec.min_symbols +
            int(content.range(uint64_t(spec.max_symbols - spec.min_symbols) +
                              1));
        for (int i = 0; i < n_sym; ++i) {
          ph.symbols.push_back(inventory[content.range(inventory.size())]);
          ph.durations.push_back(
              spec.min_duration +
              int(content.range(
                  uint64_t(spec.max_duration - spec.min_duration) + 1)));
        }
        uint64_t mix = seed ^ (uint64_t(speaker_id) << 32 | uint64_t(u));
        const uint64_t noise_seed = splitmix64(mix);
        Utterance utt;
        utt.utterance_id = utt_name(speaker_id, u);
        utt.speaker_id = speaker_id;
        utt.language_id = plan.language_id;
        utt.transcribed = plan.transcribed;
        utt.features = render_features(sp, ph, spec.noise_sigma, noise_seed);
        utt.waveform =
            render_waveform(utt.features, sp, spec.samples_per_frame);
        if (plan.transcribed) utt.maybe_phonemes = std::move(ph);
        corpus.utts.push_back(std::move(utt));
      }
    }
  }
  return corpus;
}

void write_feature_blob(const std::string& path, const Mat& frames) {
  LLEVC_CHECK(frames.rows >= 1 && frames.cols >= 1,
              "write_feature_blob: empty");
  std::string out;
  out.append("LLEF", 4);
  bin::put_u32(out, kBlobVersion);
  bin::put_u32(out, uint32_t(frames.rows));
  bin::put_u32(out, uint32_t(frames.cols));
  for (double v : frames.a) bin::put_f32(out, float(v));
  write_file_bytes(path, out);
}

Mat read_feature_blob(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  bin::Reader r{bytes, 0, path};
  r.expect_magic("LLEF");
  const uint32_t version = r.u32();
  LLEVC_CHECK(version == kBlobVersion,
              path << ": unsupported feature blob version " << version);
  const uint32_t T = r.u32();
  const uint32_t D = r.u32();
  LLEVC_CHECK(T >= 1 && D >= 1 && T < (1u << 24) && D < (1u << 16),
              path << ": implausible feature shape " << T << "x" << D);
  Mat m(static_cast<int>(T), static_cast<int>(D));
  for (double& v : m.a) v = double(r.f32());
  LLEVC_CHECK(r.done(), path << ": trailing bytes in feature blob");
  return m;
}

void write_waveform_blob(const std::string& path, const Waveform& w) {
  LLEVC_CHECK(!w.codes.empty() && w.samples_per_frame >= 1,
              "write_waveform_blob: empty");
  std::string out;
  out.append("LLEW", 4);
  bin::put_u32(out, kBlobVersion);
  bin::put_u32(out, uint32_t(w.codes.size()));
  bin::put_u32(out, uint32_t(w.samples_per_frame));
  out.append(reinterpret_cast<const char*>(w.codes.data()), w.codes.size());
  write_file_bytes(path, out);
}

Waveform read_waveform_blob(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  bin::Reader r{bytes, 0, path};
  r.expect_magic("LLEW");
  const uint32_t version = r.u32();
  LLEVC_CHECK(version == kBlobVersion,
              path << ": unsupported waveform blob version " << version);
  const uint32_t n = r.u32();
  Waveform w;
  w.samples_per_frame = int(r.u32());
  LLEVC_CHECK(w.samples_per_frame >= 1, path << ": bad samples_per_frame");
  w.codes.resize(n);
  for (uint32_t i = 0; i < n; ++i) w.codes[i] = r.u8();
  LLEVC_CHECK(r.done(), path << ": trailing bytes in waveform blob");
  return w;
}

void write_corpus(const Corpus& corpus, const std::string& directory) {
  LLEVC_CHECK(!corpus.utts.empty() && !corpus.speakers.empty(),
              "write_corpus: empty corpus");
  fs::create_directories(fs::path(directory) / "data");

  json spk = json::object();
  spk["version"] = 1;
  spk["speakers"] = json::array();
  for (const SpeakerProfile& sp : corpus.speakers) {
    json j;
    j["speaker_id"] = sp.speaker_id;
    j["language_id"] = sp.language_id;
    j["f0"] = sp.f0;
    j["dim"] = sp.transform_A.rows;
    j["transform_A"] = sp.transform_A.a;
    j["bias_b"] = sp.bias_b;
    spk["speakers"].push_back(j);
  }
  write_file_bytes((fs::path(directory) / "speakers.json").string(),
                   spk.dump(2) + "\n");

  std::ostringstream manifest;
  for (const Utterance& u : corpus.utts) {
    const std::string feat = "data/" + u.utterance_id + ".feat";
    const std::string wave = "data/" + u.utterance_id + ".wave";
    write_feature_blob((fs::path(directory) / feat).string(),
                       u.features.frames);
    write_waveform_blob((fs::path(directory) / wave).string(), u.waveform);
    json j;
    j["utterance_id"] = u.utterance_id;
    j["speaker_id"] = u.speaker_id;
    j["language_id"] = u.language_id;
    j["transcribed"] = u.transcribed;
    j["feature_file"] = feat;
    j["waveform_file"] = wave;
    if (u.transcribed) {
      const std::string ph = "data/" + u.utterance_id + ".ph";
      write_phoneme_file((fs::path(directory) / ph).string(), u.phonemes());
      j["phoneme_file"] = ph;
    }
    manifest << j.dump() << '\n';
  }
  write_file_bytes((fs::path(directory) / "manifest.jsonl").string(),
                   manifest.str());
}

Corpus read_corpus(const std::string& directory) {
  Corpus corpus;
  const std::string spk_path =
      (fs::path(directory) / "speakers.json").string();
  const std::string spk_bytes = read_file_bytes(spk_path);
  json spk;
  try {
    spk = json::parse(spk_bytes);
  } catch (const json::exception& e) {
    LLEVC_CHECK(false, spk_path << ": " << e.what());
  }
  LLEVC_CHECK(spk.value("version", 0) == 1,
              spk_path << ": unsupported speaker table version");
  for (const json& j : spk.at("speakers")) {
    SpeakerProfile sp;
    sp.speaker_id = j.at("speaker_id").get<int>();
    sp.language_id = j.at("language_id").get<int>();
    sp.f0 = j.at("f0").get<double>();
    const int dim = j.at("dim").get<int>();
    sp.transform_A = Mat(dim, dim);
    const auto flat = j.at("transform_A").get<std::vector<double>>();
    LLEVC_CHECK(int(flat.size()) == dim * dim,
                spk_path << ": transform_A size mismatch");
    sp.transform_A.a = flat;
    sp.bias_b = j.at("bias_b").get<std::vector<double>>();
    LLEVC_CHECK(int(sp.bias_b.size()) == dim,
                spk_path << ": bias_b size mismatch");
    corpus.speakers.push_back(std::move(sp));
  }

  const std::string man_path =
      (fs::path(directory) / "manifest.jsonl").string();
  std::istringstream man(read_file_bytes(man_path));
  std::string line;
  int line_no = 0;
  while (std::getline(man, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      LLEVC_CHECK(false,
                  man_path << ":" << line_no << ": " << e.what());
    }
    Utterance u;
    u.utterance_id = j.at("utterance_id").get<std::string>();
    u.speaker_id = j.at("speaker_id").get<int>();
    u.language_id = j.at("language_id").get<int>();
    u.transcribed = j.at("transcribed").get<bool>();
    try {
      u.features.frames = read_feature_blob(
          (fs::path(directory) / j.at("feature_file").get<std::string>())
              .string());
      u.waveform = read_waveform_blob(
          (fs::path(directory) / j.at("waveform_file").get<std::string>())
              .string());
      if (u.transcribed)
        u.maybe_phonemes = read_phoneme_file(
            (fs::path(directory) / j.at("phoneme_file").get<std::string>())
                .string());
    } catch (const Error& e) {
      LLEVC_CHECK(false,
                  "utterance " << u.utterance_id << ": " << e.what());
    }
    corpus.utts.push_back(std::move(u));
  }
  LLEVC_CHECK(!corpus.utts.empty(), man_path << ": no utterances");
  return corpus;
}

bool corpus_equal(const Corpus& a, const Corpus& b) {
  if (a.speakers.size() != b.speakers.size()) return false;
  if (a.utts.size() != b.utts.size()) return false;
  for (size_t i = 0; i < a.speakers.size(); ++i) {
    const SpeakerProfile& x = a.speakers[i];
    const SpeakerProfile& y = b.speakers[i];
    if (x.speaker_id != y.speaker_id || x.language_id != y.language_id ||
        x.f0 != y.f0 || !bit_equal(x.transform_A, y.transform_A) ||
        x.bias_b != y.bias_b)
      return false;
  }
  for (size_t i = 0; i < a.utts.size(); ++i) {
    const Utterance& x = a.utts[i];
    const Utterance& y = b.utts[i];
    if (x.utterance_id != y.utterance_id || x.speaker_id != y.speaker_id ||
        x.language_id != y.language_id || x.transcribed != y.transcribed)
      return false;
    if (!bit_equal(x.features.frames, y.features.frames)) return false;
    if (x.waveform.codes != y.waveform.codes ||
        x.waveform.samples_per_frame != y.waveform.samples_per_frame)
      return false;
    if (x.maybe_phonemes.has_value() != y.maybe_phonemes.has_value())
      return false;
    if (x.maybe_phonemes &&
        (x.maybe_phonemes->symbols != y.maybe_phonemes->symbols ||
         x.maybe_phonemes->durations != y.maybe_phonemes->durations))
      return false;
  }
  return true;
}

}  // namespace llevc
