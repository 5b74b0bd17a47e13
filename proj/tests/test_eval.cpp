// llevc/tests/test_eval.cpp

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
#include <cstdio>
#include <string>
#include <vector>

#include "llevc/common.hpp"
#include "llevc/eval.hpp"

using namespace llevc;

namespace {

AcousticFeatures random_features(int rows, int cols, uint64_t seed) {
  AcousticFeatures f;
  f.frames = Mat(rows, cols);
  Rng rng(seed);
  for (double& v : f.frames.a) v = rng.normal();
  return f;
}

// Default-scale corpus: 8 transcribed speakers plus one untranscribed target.
const Corpus& oracle_corpus() {
  static const Corpus c = generate_corpus(CorpusSpec{}, 2024);
  return c;
}

struct ProbeFixture {
  Corpus train;  // probe training side of the split
  std::vector<int> held;  // held-out utterance indices into oracle_corpus()
  SpeakerProbe probe;
};

const ProbeFixture& probe_fixture() {
  static const ProbeFixture f = [] {
    ProbeFixture fx;
    const Corpus& c = oracle_corpus();
    const Split split = split_by_utterance(c, 4);
    fx.train.speakers = c.speakers;
    for (int i : split.train) fx.train.utts.push_back(c.utts[size_t(i)]);
    fx.held = split.held_out;
    fx.probe = train_speaker_probe(fx.train);
    return fx;
  }();
  return f;
}

// Exhaustive two-tail oracle with Pascal-triangle binomials, exact in double
// for n <= 30.
double two_tail_oracle(int wins_a, int wins_b) {
  const int n = wins_a + wins_b;
  std::vector<double> binom(size_t(n) + 1, 1.0);
  for (int r = 1; r <= n; ++r)
    for (int k = r - 1; k >= 1; --k) binom[size_t(k)] += binom[size_t(k) - 1];
  const double scale = std::pow(0.5, n);
  const int lo = std::min(wins_a, wins_b);
  const int hi = std::max(wins_a, wins_b);
  double p = 0.0;
  for (int k = 0; k <= lo; ++k) p += binom[size_t(k)] * scale;
  for (int k = hi; k <= n; ++k) p += binom[size_t(k)] * scale;
  if (lo == hi) p -= binom[size_t(lo)] * scale;  // counted the center twice
  return std::min(1.0, p);
}

std::string temp_path(const std::string& name) {
  return "/tmp/llevc_eval_" + name;
}

}  // namespace

TEST_CASE("mel distortion basics") {
  const AcousticFeatures a = random_features(12, 6, 1);

  SUBCASE("identical sequences score zero") {
    CHECK(mel_distortion(a, a) == 0.0);
  }
  SUBCASE("constant offset scores its norm") {
    const std::vector<double> c = {0.3, -1.2, 0.5, 2.0, -0.25, 1.0};
    AcousticFeatures b = a;
    for (int t = 0; t < b.frames.rows; ++t)
      for (int d = 0; d < b.frames.cols; ++d) b.frames(t, d) += c[size_t(d)];
    double norm = 0.0;
    for (double v : c) norm += v * v;
    norm = std::sqrt(norm);
    CHECK(mel_distortion(a, b) == doctest::Approx(norm).epsilon(1e-12));
  }
  SUBCASE("symmetric") {
    const AcousticFeatures b = random_features(12, 6, 2);
    CHECK(mel_distortion(a, b) == mel_distortion(b, a));
    CHECK(mel_distortion(a, b) > 0.0);
  }
  SUBCASE("shape mismatch is an error") {
    CHECK_THROWS_AS(mel_distortion(a, random_features(11, 6, 3)), Error);
    CHECK_THROWS_AS(mel_distortion(a, random_features(12, 5, 3)), Error);
  }
}

TEST_CASE("speaker probe separates the synthetic speakers") {
  const ProbeFixture& fx = probe_fixture();
  const Corpus& c = oracle_corpus();

  SUBCASE("posterior rows are normalized") {
    const Mat post =
        probe_posteriors(fx.probe, c.utts[size_t(fx.held[0])].features);
    for (int t = 0; t < post.rows; ++t) {
      double sum = 0.0;
      for (int s = 0; s < post.cols; ++s) {
        sum += post(t, s);
        CHECK(post(t, s) >= 0.0);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }

  SUBCASE("top-1 accuracy on held-out natural features is at least 95%") {
    int correct = 0;
    for (int i : fx.held) {
      const Utterance& u = c.utts[size_t(i)];
      int best = -1;
      double best_sim = -1.0;
      for (int sid : fx.probe.speaker_ids) {
        const double sim = speaker_similarity(u.features, fx.probe, sid);
        if (sim > best_sim) {
          best_sim = sim;
          best = sid;
        }
      }
      if (best == u.speaker_id) ++correct;
    }
    CHECK(double(correct) >= 0.95 * double(fx.held.size()));
  }

  SUBCASE("pure noise lands near chance for every speaker") {
    const AcousticFeatures noise = random_features(400, 8, 99);
    const double chance = 1.0 / double(fx.probe.classes());
    for (int sid : fx.probe.speaker_ids) {
      const double sim = speaker_similarity(noise, fx.probe, sid);
      CHECK(std::abs(sim - chance) <= 0.1);
    }
  }

  SUBCASE("posteriors cover one row per pooled window") {
    const Utterance& u = c.utts[size_t(fx.held[1])];
    const int t = u.features.frames.rows;
    const int w = fx.probe.window;
    const Mat post = probe_posteriors(fx.probe, u.features);
    CHECK(post.rows == (t + w - 1) / w);
  }

  SUBCASE("similarity is invariant to window order") {
    const int w = fx.probe.window;
    const Utterance* full = nullptr;
    for (int i : fx.held) {
      const Utterance& u = c.utts[size_t(i)];
      if (u.features.frames.rows % w == 0) full = &u;
    }
    REQUIRE(full != nullptr);  // some held-out utterance has T divisible by w
    const Mat& frames = full->features.frames;
    const int blocks = frames.rows / w;
    AcousticFeatures shuffled;
    shuffled.frames = Mat(frames.rows, frames.cols);
    for (int bi = 0; bi < blocks; ++bi) {
      const int src_block = blocks - 1 - bi;
      for (int t = 0; t < w; ++t)
        for (int d = 0; d < frames.cols; ++d)
          shuffled.frames(bi * w + t, d) = frames(src_block * w + t, d);
    }
    const int sid = full->speaker_id;
    CHECK(speaker_similarity(full->features, fx.probe, sid) ==
          doctest::Approx(speaker_similarity(shuffled, fx.probe, sid))
              .epsilon(1e-12));
  }

  SUBCASE("similarity lies in the unit interval") {
    for (int i : fx.held) {
      const double sim = speaker_similarity(
          c.utts[size_t(i)].features, fx.probe, fx.probe.speaker_ids[0]);
      CHECK(sim >= 0.0);
      CHECK(sim <= 1.0);
    }
  }

  SUBCASE("unknown speakers are rejected") {
    CHECK_THROWS_WITH_AS(
        speaker_similarity(c.utts[0].features, fx.probe, 4321),
        doctest::Contains("not covered"), Error);
  }

  SUBCASE("probe training is deterministic") {
    const SpeakerProbe again = train_speaker_probe(fx.train);
    CHECK(bit_equal(again.w, fx.probe.w));
    CHECK(bit_equal(again.b, fx.probe.b));
  }
}

TEST_CASE("tie gap ties to the per-utterance loss") {
  ModelConfig cfg;
  cfg.feature_dim = 8;
  cfg.latent_dim = 5;
  cfg.embed_dim = 6;
  cfg.speaker_dim = 4;
  cfg.vocab_size = CorpusSpec{}.vocab_size();
  cfg.max_speakers = 12;
  cfg.enc_layers = 2;
  cfg.enc_kernel = 3;
  cfg.enc_channels = 10;
  cfg.tdec_kernel = 3;
  cfg.dec_hidden = 10;
  cfg.voc_channels = 8;
  cfg.voc_kernel = 2;
  cfg.voc_dilations = {1, 2};
  cfg.samples_per_frame = 16;

  Checkpoint ckpt;
  ckpt.cfg = cfg;
  ckpt.params = init_params(cfg, 7);

  std::vector<const Utterance*> pairs;
  for (int i = 0; i < 6; ++i) pairs.push_back(&oracle_corpus().utts[size_t(i)]);

  SUBCASE("equals the mean of the tied loss") {
    double mean = 0.0;
    for (const Utterance* u : pairs) mean += tie_loss(cfg, ckpt.params, *u);
    mean /= double(pairs.size());
    CHECK(tie_gap(pairs, ckpt) == mean);
  }
  SUBCASE("nonnegative across random parameter draws") {
    for (uint64_t seed : {11u, 12u, 13u}) {
      ckpt.params = init_params(cfg, seed);
      CHECK(tie_gap(pairs, ckpt) >= 0.0);
    }
  }
  SUBCASE("zero when both encoders emit identical distributions") {
    for (ParamTensor& t : ckpt.params.t) {
      const bool enc = t.name.rfind("tenc.", 0) == 0 ||
                       t.name.rfind("senc.", 0) == 0;
      if (!enc) continue;
      if (t.name.find("mean_b") != std::string::npos) {
        t.value.fill(0.25);
      } else if (t.name.find("logvar_b") != std::string::npos) {
        t.value.fill(-0.5);
      } else {
        t.value.fill(0.0);
      }
    }
    CHECK(tie_gap(pairs, ckpt) == 0.0);
  }
  SUBCASE("empty pair set is an error") {
    CHECK_THROWS_AS(tie_gap({}, ckpt), Error);
  }
}

TEST_CASE("preference analysis matches the exhaustive binomial oracle") {
  for (int n = 1; n <= 30; ++n) {
    for (int a = 0; a <= n; ++a) {
      const PreferenceResult r = preference_analysis(a, n - a);
      CHECK(r.p_exact == doctest::Approx(two_tail_oracle(a, n - a))
                             .epsilon(1e-12));
      CHECK(r.share_a == doctest::Approx(double(a) / n).epsilon(1e-15));
      CHECK(r.p_exact > 0.0);
      CHECK(r.p_exact <= 1.0);
      CHECK(r.ci_95.lo <= r.share_a);
      CHECK(r.share_a <= r.ci_95.hi);
      CHECK(r.ci_95.lo >= -1e-12);
      CHECK(r.ci_95.hi <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("preference analysis spot values") {
  SUBCASE("even split of 300 votes") {
    const PreferenceResult r = preference_analysis(150, 150);
    CHECK(r.share_a == 0.5);
    CHECK(r.p_exact == 1.0);
  }
  SUBCASE("unanimous 300") {
    const PreferenceResult r = preference_analysis(300, 0);
    CHECK(r.share_a == 1.0);
    CHECK(r.p_exact < 1e-80);
    CHECK(r.ci_95.hi == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("0 of 10") {
    const PreferenceResult r = preference_analysis(0, 10);
    CHECK(r.share_a == 0.0);
    CHECK(r.p_exact == doctest::Approx(0.001953125).epsilon(1e-9));
  }
  SUBCASE("wilson interval for 5 of 10") {
    const PreferenceResult r = preference_analysis(5, 5);
    CHECK(r.ci_95.lo == doctest::Approx(0.2366).epsilon(1e-3));
    CHECK(r.ci_95.hi == doctest::Approx(0.7634).epsilon(1e-3));
  }
  SUBCASE("degenerate inputs") {
    CHECK_THROWS_AS(preference_analysis(0, 0), Error);
    CHECK_THROWS_AS(preference_analysis(-1, 5), Error);
  }
}

TEST_CASE("metrics csv round trips") {
  const std::string path = temp_path("metrics.csv");

  SUBCASE("empty set writes a header-only file") {
    write_metrics_csv({}, path);
    CHECK(read_file_bytes(path) == "experiment,system,speaker,metric,value\n");
    CHECK(read_metrics_csv(path).empty());
  }

  SUBCASE("write, read, write is byte-stable and value-faithful") {
    std::vector<MetricRow> rows;
    rows.push_back(MetricRow{"adapt", "vc", 8, "similarity", 0.8731});
    rows.push_back(MetricRow{"adapt", "tts", 8, "distortion", 1.0 / 3.0});
    rows.push_back(MetricRow{"train", "model", -1, "tie_gap", 2.5e-17});
    rows.push_back(MetricRow{"train", "model", -1, "loss", -12345.678901});
    write_metrics_csv(rows, path);
    const std::vector<MetricRow> back = read_metrics_csv(path);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].experiment == rows[i].experiment);
      CHECK(back[i].system == rows[i].system);
      CHECK(back[i].speaker == rows[i].speaker);
      CHECK(back[i].metric == rows[i].metric);
      const double rel = std::abs(back[i].value - rows[i].value) /
                         std::max(1.0, std::abs(rows[i].value));
      CHECK(rel <= 1e-9);
    }
    const std::string first = read_file_bytes(path);
    write_metrics_csv(back, path);
    CHECK(read_file_bytes(path) == first);
  }

  SUBCASE("unwritable path is an error") {
    CHECK_THROWS_AS(write_metrics_csv({}, "/nonexistent_dir/x.csv"), Error);
  }

  SUBCASE("malformed files are rejected") {
    write_file_bytes(path, "wrong,header\n");
    CHECK_THROWS_AS(read_metrics_csv(path), Error);
    write_file_bytes(path,
                     "experiment,system,speaker,metric,value\nonly,four,3,x\n");
    CHECK_THROWS_AS(read_metrics_csv(path), Error);
  }
  std::remove(path.c_str());
}

TEST_CASE("vote csv and tallies") {
  const std::string path = temp_path("votes.csv");
  std::vector<VoteRow> votes;
  votes.push_back(VoteRow{"q1", "tts", "vc", "tts"});
  votes.push_back(VoteRow{"q2", "tts", "vc", "vc"});
  votes.push_back(VoteRow{"q3", "tts", "vc", "tts"});
  votes.push_back(VoteRow{"q4", "vc", "oracle", "oracle"});

  SUBCASE("round trip preserves rows") {
    write_votes_csv(votes, path);
    const std::vector<VoteRow> back = read_votes_csv(path);
    REQUIRE(back.size() == votes.size());
    for (size_t i = 0; i < votes.size(); ++i) {
      CHECK(back[i].question_id == votes[i].question_id);
      CHECK(back[i].winner == votes[i].winner);
    }
  }

  SUBCASE("tallies count wins per pair in first-appearance order") {
    const std::vector<PairTally> t = tally_votes(votes);
    REQUIRE(t.size() == 2);
    CHECK(t[0].system_a == "tts");
    CHECK(t[0].system_b == "vc");
    CHECK(t[0].wins_a == 2);
    CHECK(t[0].wins_b == 1);
    CHECK(t[1].system_a == "vc");
    CHECK(t[1].system_b == "oracle");
    CHECK(t[1].wins_a == 0);
    CHECK(t[1].wins_b == 1);
  }

  SUBCASE("a winner from neither side is rejected") {
    write_file_bytes(path,
                     "question_id,system_a,system_b,winner\nq1,tts,vc,nats\n");
    CHECK_THROWS_WITH_AS(read_votes_csv(path), doctest::Contains("neither"),
                         Error);
  }
  std::remove(path.c_str());
}
