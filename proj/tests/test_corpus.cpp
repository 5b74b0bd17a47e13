// llevc/tests/test_corpus.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "llevc/common.hpp"
#include "llevc/corpus.hpp"

using namespace llevc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("llevc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str() const { return path.string(); }
};

CorpusSpec tiny_spec() {
  CorpusSpec spec;
  spec.speakers_a = 2;
  spec.speakers_b = 1;
  spec.utts_per_speaker_a = 3;
  spec.utts_per_speaker_b = 3;
  return spec;
}

// Jacobi eigenvalue iteration on A^T A; an oracle for singular values that
// shares nothing with the generator's QR construction.
std::vector<double> singular_values(const Mat& A) {
  const int n = A.cols;
  Mat G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < A.rows; ++k) s += A(k, i) * A(k, j);
      G(i, j) = s;
    }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += G(p, q) * G(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(G(p, q)) < 1e-20) continue;
        const double tau = (G(q, q) - G(p, p)) / (2.0 * G(p, q));
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double gkp = G(k, p), gkq = G(k, q);
          G(k, p) = c * gkp - s * gkq;
          G(k, q) = s * gkp + c * gkq;
        }
        for (int k = 0; k < n; ++k) {
          const double gpk = G(p, k), gqk = G(q, k);
          G(p, k) = c * gpk - s * gqk;
          G(q, k) = s * gpk + c * gqk;
        }
      }
  }
  std::vector<double> sv(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) sv[size_t(i)] = std::sqrt(std::max(0.0, G(i, i)));
  std::sort(sv.begin(), sv.end());
  return sv;
}

// least-squares fit Y2 ~= Y1 * M^T + c via normal equations with partial
// pivoting; returns RMSE over all entries
double affine_fit_residual(const Mat& Y1, const Mat& Y2) {
  REQUIRE(Y1.rows == Y2.rows);
  const int T = Y1.rows, D = Y1.cols, E = Y2.cols;
  const int n = D + 1;  // unknowns per output dim, bias included
  Mat G(n, n);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      double s = 0;
      for (int t = 0; t < T; ++t) s += Y1(t, i) * Y1(t, j);
      G(i, j) = s;
    }
  for (int i = 0; i < D; ++i) {
    double s = 0;
    for (int t = 0; t < T; ++t) s += Y1(t, i);
    G(i, D) = s;
    G(D, i) = s;
  }
  G(D, D) = T;

  double sq_err = 0;
  for (int e = 0; e < E; ++e) {
    std::vector<double> rhs(size_t(n), 0.0);
    for (int i = 0; i < D; ++i)
      for (int t = 0; t < T; ++t) rhs[size_t(i)] += Y1(t, i) * Y2(t, e);
    for (int t = 0; t < T; ++t) rhs[size_t(D)] += Y2(t, e);

    Mat A = G;
    std::vector<double> b = rhs;
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[size_t(i)] = i;
    for (int col = 0; col < n; ++col) {
      int piv = col;
      for (int r = col + 1; r < n; ++r)
        if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
      if (piv != col) {
        for (int c = 0; c < n; ++c) std::swap(A(col, c), A(piv, c));
        std::swap(b[size_t(col)], b[size_t(piv)]);
      }
      REQUIRE(std::abs(A(col, col)) > 1e-12);
      for (int r = col + 1; r < n; ++r) {
        const double f = A(r, col) / A(col, col);
        for (int c = col; c < n; ++c) A(r, c) -= f * A(col, c);
        b[size_t(r)] -= f * b[size_t(col)];
      }
    }
    std::vector<double> w(static_cast<size_t>(n));
    for (int r = n - 1; r >= 0; --r) {
      double s = b[size_t(r)];
      for (int c = r + 1; c < n; ++c) s -= A(r, c) * w[size_t(c)];
      w[size_t(r)] = s / A(r, r);
    }
    for (int t = 0; t < T; ++t) {
      double pred = w[size_t(D)];
      for (int i = 0; i < D; ++i) pred += w[size_t(i)] * Y1(t, i);
      const double d = Y2(t, e) - pred;
      sq_err += d * d;
    }
  }
  return std::sqrt(sq_err / (double(T) * double(E)));
}

std::string dir_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const fs::path& f : files) {
    all += fs::relative(f, root).string();
    all += '\0';
    all += read_file_bytes(f.string());
    all += '\0';
  }
  return hex_string(sha256(all));
}

}  // namespace

TEST_CASE("generate_corpus counts and ids") {
  CorpusSpec spec = tiny_spec();
  spec.speakers_b = 0;
  Corpus c = generate_corpus(spec, 7);
  CHECK(c.utts.size() == 6);  // 2 speakers x 3 utterances
  CHECK(c.speakers.size() == 2);
  std::set<std::string> ids;
  for (const Utterance& u : c.utts) ids.insert(u.utterance_id);
  CHECK(ids.size() == 6);
  CHECK(c.utts[0].utterance_id == "s00_u0000");
}

TEST_CASE("generation is a pure function of spec and seed") {
  CorpusSpec spec = tiny_spec();
  Corpus c1 = generate_corpus(spec, 42);
  Corpus c2 = generate_corpus(spec, 42);
  CHECK(corpus_equal(c1, c2));
  Corpus c3 = generate_corpus(spec, 43);
  CHECK(!corpus_equal(c1, c3));

  TempDir d1, d2;
  write_corpus(c1, d1.str());
  write_corpus(c2, d2.str());
  CHECK(dir_digest(d1.path) == dir_digest(d2.path));
}

TEST_CASE("language B uses symbols absent from language A") {
  CorpusSpec spec = tiny_spec();
  const std::vector<int> a = spec.language_symbols(0);
  const std::vector<int> b = spec.language_symbols(1);
  CHECK(int(a.size()) == spec.lang_a_inventory);
  CHECK(int(b.size()) == spec.lang_b_inventory);
  const std::set<int> a_set(a.begin(), a.end());
  int fresh = 0;
  for (int s : b) fresh += a_set.count(s) ? 0 : 1;
  CHECK(fresh == spec.lang_b_inventory - spec.lang_b_shared);

  // and a generated B corpus actually exercises them
  spec.transcribed_b = true;
  spec.utts_per_speaker_b = 20;
  Corpus c = generate_corpus(spec, 5);
  bool found = false;
  for (const Utterance& u : c.utts)
    if (u.language_id == 1)
      for (int s : u.phonemes().symbols)
        if (!a_set.count(s)) found = true;
  CHECK(found);
}

TEST_CASE("identity speaker renders the bare prototypes") {
  const int D = 8;
  SpeakerProfile sp;
  sp.speaker_id = 0;
  sp.language_id = 0;
  sp.f0 = 1.0;
  sp.transform_A = Mat(D, D);
  for (int i = 0; i < D; ++i) sp.transform_A(i, i) = 1.0;
  sp.bias_b.assign(D, 0.0);

  PhonemeSequence ph;
  ph.symbols = {3, 11, 3};
  ph.durations = {2, 4, 3};
  AcousticFeatures f = render_features(sp, ph, 0.0, 99);
  CHECK(f.frames.rows == 9);
  int t = 0;
  for (size_t p = 0; p < ph.symbols.size(); ++p) {
    const std::vector<double> proto = symbol_prototype(ph.symbols[p], D);
    for (int i = 0; i < ph.durations[p]; ++i, ++t)
      for (int d = 0; d < D; ++d) {
        const double want =
            double(float(proto[size_t(d)] * phoneme_envelope(i, ph.durations[p])));
        CHECK(f.frames(t, d) == want);
      }
  }
  // repeated symbol means repeated prototype: frame 0 of phonemes 0 and 2
  // differ only via the envelope when durations differ
  CHECK(f.frames(0, 0) / phoneme_envelope(0, 2) ==
        doctest::Approx(f.frames(6, 0) / phoneme_envelope(0, 3))
            .epsilon(1e-6));
}

TEST_CASE("duration contract holds for random inputs") {
  Rng rng = Rng::substream(31, 0);
  CorpusSpec spec = tiny_spec();
  Corpus c = generate_corpus(spec, 3);
  const SpeakerProfile& sp = c.speakers[0];
  for (int it = 0; it < 50; ++it) {
    PhonemeSequence ph;
    const int n = 1 + int(rng.range(10));
    int total = 0;
    for (int i = 0; i < n; ++i) {
      ph.symbols.push_back(int(rng.range(20)));
      const int dur = 1 + int(rng.range(7));
      ph.durations.push_back(dur);
      total += dur;
    }
    AcousticFeatures f = render_features(sp, ph, 0.05, uint64_t(it));
    CHECK(f.frames.rows == total);
    CHECK(all_finite(f.frames));
    Waveform w = render_waveform(f, sp, 16);
    CHECK(w.codes.size() == size_t(total) * 16);
  }
}

TEST_CASE("render_features rejects bad inputs") {
  CorpusSpec spec = tiny_spec();
  Corpus c = generate_corpus(spec, 3);
  PhonemeSequence empty;
  CHECK_THROWS_AS(render_features(c.speakers[0], empty, 0.05, 1), Error);
  PhonemeSequence bad;
  bad.symbols = {1};
  bad.durations = {0};
  CHECK_THROWS_AS(render_features(c.speakers[0], bad, 0.05, 1), Error);
  CHECK_THROWS_AS(symbol_prototype(-1, 8), Error);
}

TEST_CASE("speaker transforms are well conditioned") {
  CorpusSpec spec = tiny_spec();
  spec.speakers_a = 6;
  spec.speakers_b = 2;
  for (uint64_t seed : {1u, 2u, 3u}) {
    Corpus c = generate_corpus(spec, seed);
    for (const SpeakerProfile& sp : c.speakers) {
      const std::vector<double> sv = singular_values(sp.transform_A);
      CHECK(sv.front() > 1e-6);
      const double cond = sv.back() / sv.front();
      CAPTURE(sp.speaker_id);
      CHECK(cond < 10.0);
      CHECK(sp.f0 >= 0.5);
      CHECK(sp.f0 <= 2.0);
    }
  }
}

TEST_CASE("matched content across speakers is affinely related") {
  CorpusSpec spec = tiny_spec();
  Corpus c = generate_corpus(spec, 11);
  const SpeakerProfile& s1 = c.speakers[0];
  const SpeakerProfile& s2 = c.speakers[1];

  Rng rng = Rng::substream(32, 0);
  PhonemeSequence ph;
  for (int i = 0; i < 40; ++i) {
    ph.symbols.push_back(int(rng.range(20)));
    ph.durations.push_back(2 + int(rng.range(5)));
  }
  const double sigma = spec.noise_sigma;
  AcousticFeatures f1 = render_features(s1, ph, sigma, 100);
  AcousticFeatures f2 = render_features(s2, ph, sigma, 200);
  const double resid = affine_fit_residual(f1.frames, f2.frames);
  CHECK(resid < 3.0 * sigma);

  // noise-free renders are exactly affinely related up to f32 snapping
  AcousticFeatures g1 = render_features(s1, ph, 0.0, 0);
  AcousticFeatures g2 = render_features(s2, ph, 0.0, 0);
  CHECK(affine_fit_residual(g1.frames, g2.frames) < 1e-5);
}

TEST_CASE("mu-law codec") {
  CHECK(mu_law_encode(0.0) == 128);
  for (int c = 0; c < 256; ++c)
    CHECK(mu_law_encode(mu_law_decode(uint8_t(c))) == c);
  CHECK(mu_law_encode(1.0) == 255);
  CHECK(mu_law_encode(-1.0) == 0);
  CHECK(mu_law_encode(5.0) == 255);   // clipped
  CHECK(mu_law_encode(-5.0) == 0);
  // monotone on a grid
  int prev = -1;
  for (int i = 0; i <= 1000; ++i) {
    const int code = mu_law_encode(-1.0 + 2.0 * i / 1000.0);
    CHECK(code >= prev);
    prev = code;
  }
}

TEST_CASE("all-zero features yield constant mid-scale codes") {
  SpeakerProfile sp;
  sp.f0 = 1.3;
  sp.transform_A = Mat(8, 8);
  sp.bias_b.assign(8, 0.0);
  AcousticFeatures f;
  f.frames = Mat(5, 8);
  Waveform w = render_waveform(f, sp, 16);
  CHECK(w.codes.size() == 80);
  for (uint8_t c : w.codes) CHECK(int(c) == 128);
}

TEST_CASE("feature blob round-trips bit-exactly") {
  TempDir dir;
  Rng rng = Rng::substream(33, 0);
  Mat m(13, 8);
  for (double& v : m.a) v = double(float(rng.normal()));  // f32-snapped
  const std::string path = (dir.path / "x.feat").string();
  write_feature_blob(path, m);
  Mat back = read_feature_blob(path);
  CHECK(bit_equal(m, back));
}

TEST_CASE("blob readers reject corruption") {
  TempDir dir;
  Mat m(4, 3);
  m(1, 2) = 0.5;
  const std::string path = (dir.path / "x.feat").string();
  write_feature_blob(path, m);

  SUBCASE("bad magic") {
    std::string bytes = read_file_bytes(path);
    bytes[0] = 'X';
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(read_feature_blob(path),
                         doctest::Contains("magic"), Error);
  }
  SUBCASE("unsupported version") {
    std::string bytes = read_file_bytes(path);
    bytes[4] = 2;
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(read_feature_blob(path),
                         doctest::Contains("version"), Error);
  }
  SUBCASE("truncation") {
    std::string bytes = read_file_bytes(path);
    bytes.resize(bytes.size() / 2);
    write_file_bytes(path, bytes);
    CHECK_THROWS_AS(read_feature_blob(path), Error);
  }
  SUBCASE("trailing garbage") {
    std::string bytes = read_file_bytes(path);
    bytes += "zz";
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(read_feature_blob(path),
                         doctest::Contains("trailing"), Error);
  }
}

TEST_CASE("corpus write/read round trip") {
  CorpusSpec spec = tiny_spec();
  Corpus c = generate_corpus(spec, 17);
  TempDir dir;
  write_corpus(c, dir.str());
  Corpus back = read_corpus(dir.str());
  CHECK(corpus_equal(c, back));
  CHECK(back.feature_dim() == spec.feature_dim);

  SUBCASE("missing blob names the utterance") {
    fs::remove(dir.path / "data" / "s01_u0002.feat");
    CHECK_THROWS_WITH_AS(read_corpus(dir.str()),
                         doctest::Contains("s01_u0002"), Error);
  }
  SUBCASE("missing manifest") {
    fs::remove(dir.path / "manifest.jsonl");
    CHECK_THROWS_AS(read_corpus(dir.str()), Error);
  }
}

TEST_CASE("untranscribed utterances expose no phonemes") {
  CorpusSpec spec = tiny_spec();
  Corpus c = generate_corpus(spec, 19);
  TempDir dir;
  write_corpus(c, dir.str());
  Corpus back = read_corpus(dir.str());
  int untranscribed = 0;
  for (const Utterance& u : back.utts) {
    if (u.language_id == 1) {
      CHECK(!u.transcribed);
      CHECK(!u.maybe_phonemes.has_value());
      CHECK_THROWS_WITH_AS(u.phonemes(),
                           doctest::Contains(u.utterance_id.c_str()), Error);
      CHECK(!fs::exists(dir.path / "data" / (u.utterance_id + ".ph")));
      ++untranscribed;
    } else {
      CHECK(u.transcribed);
      CHECK(u.phonemes().symbols.size() == u.phonemes().durations.size());
    }
  }
  CHECK(untranscribed == 3);
}

TEST_CASE("split partitions the corpus with disjoint halves") {
  CorpusSpec spec = tiny_spec();
  spec.utts_per_speaker_a = 5;
  spec.utts_per_speaker_b = 4;
  Corpus c = generate_corpus(spec, 23);
  Split split = split_by_utterance(c, 2);
  CHECK(split.train.size() + split.held_out.size() == c.utts.size());
  std::set<int> train(split.train.begin(), split.train.end());
  for (int i : split.held_out) CHECK(!train.count(i));
  // held-out utterances are the tail of each speaker's numbering
  for (int i : split.held_out) {
    const Utterance& u = c.utts[size_t(i)];
    const int idx = std::stoi(u.utterance_id.substr(5));
    const int count =
        u.language_id == 0 ? spec.utts_per_speaker_a : spec.utts_per_speaker_b;
    CHECK(idx >= count - 2);
  }
  CHECK_THROWS_AS(split_by_utterance(c, 10), Error);
}

TEST_CASE("spec validation rejects bad fields") {
  CorpusSpec spec = tiny_spec();
  spec.feature_dim = 1;
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
  spec = tiny_spec();
  spec.min_duration = 0;
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
  spec = tiny_spec();
  spec.lang_b_shared = 30;
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
  spec = tiny_spec();
  spec.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
}
