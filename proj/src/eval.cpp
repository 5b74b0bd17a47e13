// llevc/src/eval.cpp

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

#include "llevc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "llevc/common.hpp"
#include "llevc/kernels.hpp"

namespace llevc {

double mel_distortion(const AcousticFeatures& a, const AcousticFeatures& b) {
  LLEVC_CHECK(a.frames.rows == b.frames.rows && a.frames.cols == b.frames.cols,
              "mel_distortion: shape mismatch, " << a.frames.rows << "x"
                                                 << a.frames.cols << " vs "
                                                 << b.frames.rows << "x"
                                                 << b.frames.cols);
  LLEVC_CHECK(a.frames.rows > 0, "mel_distortion: empty feature sequences");
  double sum = 0.0;
  for (int t = 0; t < a.frames.rows; ++t) {
    double sq = 0.0;
    for (int d = 0; d < a.frames.cols; ++d) {
      const double diff = a.frames(t, d) - b.frames(t, d);
      sq += diff * diff;
    }
    sum += std::sqrt(sq);
  }
  return sum / double(a.frames.rows);
}

int SpeakerProbe::class_of(int speaker_id) const {
  for (size_t i = 0; i < speaker_ids.size(); ++i)
    if (speaker_ids[i] == speaker_id) return int(i);
  return -1;
}

namespace {

// Non-overlapping mean-pooled windows; the tail window may be shorter.
Mat pool_windows(const Mat& frames, int window) {
  const int n = (frames.rows + window - 1) / window;
  Mat pooled(n, frames.cols);
  for (int i = 0; i < n; ++i) {
    const int lo = i * window;
    const int hi = std::min(frames.rows, lo + window);
    for (int c = 0; c < frames.cols; ++c) {
      double m = 0.0;
      for (int t = lo; t < hi; ++t) m += frames(t, c);
      pooled(i, c) = m / double(hi - lo);
    }
  }
  return pooled;
}

// Noise calibration set: mixed-in windows with a uniform target, sized and
// weighted so speech accuracy survives while non-speech posteriors flatten.
constexpr uint64_t kProbeNoiseSeed = 0x0bfu;
constexpr double kNoiseWindowFraction = 0.375;
constexpr double kNoiseLossWeight = 0.25;

}  // namespace

SpeakerProbe train_speaker_probe(const Corpus& corpus, int steps,
                                 double learning_rate) {
  LLEVC_CHECK(!corpus.speakers.empty(), "probe training needs speakers");
  LLEVC_CHECK(steps >= 1 && learning_rate > 0.0,
              "probe training needs positive steps and learning rate");
  const int dim = corpus.feature_dim();

  SpeakerProbe probe;
  for (const SpeakerProfile& sp : corpus.speakers)
    probe.speaker_ids.push_back(sp.speaker_id);
  const int classes = probe.classes();

  int speech = 0;
  for (const Utterance& u : corpus.utts)
    speech += (u.features.frames.rows + probe.window - 1) / probe.window;
  LLEVC_CHECK(speech > 0, "probe training needs nonempty features");

  const int noise = int(kNoiseWindowFraction * speech);
  const int rows_total = speech + noise;
  Mat X(rows_total, dim);
  std::vector<int> label(static_cast<size_t>(rows_total), -1);  // -1: uniform
  int row = 0;
  for (const Utterance& u : corpus.utts) {
    const int cls = probe.class_of(u.speaker_id);
    LLEVC_CHECK(cls >= 0, "utterance speaker " << u.speaker_id
                                               << " missing from profiles");
    const Mat pooled = pool_windows(u.features.frames, probe.window);
    for (int t = 0; t < pooled.rows; ++t, ++row) {
      for (int d = 0; d < dim; ++d) X(row, d) = pooled(t, d);
      label[size_t(row)] = cls;
    }
  }
  if (noise > 0) {
    Rng rng = Rng::substream(kProbeNoiseSeed, 0);
    Mat noise_frames(noise * probe.window, dim);
    for (double& v : noise_frames.a) v = rng.normal();
    const Mat pooled = pool_windows(noise_frames, probe.window);
    for (int t = 0; t < pooled.rows; ++t, ++row)
      for (int d = 0; d < dim; ++d) X(row, d) = pooled(t, d);
  }

  probe.w = Mat(classes, dim);
  probe.b = Mat(1, classes);
  Mat logits(rows_total, classes), post(rows_total, classes);
  Mat dw(classes, dim), db(1, classes);
  const double speech_scale = 1.0 / double(speech);
  const double noise_scale =
      noise > 0 ? kNoiseLossWeight / double(noise) : 0.0;
  for (int step = 0; step < steps; ++step) {
    kernels::affine_nt(X, probe.w, probe.b, logits);
    kernels::softmax_rows(logits, post);
    Mat& dlogits = post;  // (p - target) * weight, reusing the buffer
    for (int r = 0; r < rows_total; ++r) {
      const int cls = label[size_t(r)];
      if (cls >= 0) {
        for (int c = 0; c < classes; ++c) dlogits(r, c) *= speech_scale;
        dlogits(r, cls) -= speech_scale;
      } else {
        for (int c = 0; c < classes; ++c)
          dlogits(r, c) = (dlogits(r, c) - 1.0 / double(classes)) *
                          noise_scale;
      }
    }
    dw.fill(0.0);
    db.fill(0.0);
    kernels::affine_grad_w(dlogits, X, dw, db);
    for (size_t j = 0; j < probe.w.a.size(); ++j)
      probe.w.a[j] -= learning_rate * dw.a[j];
    for (size_t j = 0; j < probe.b.a.size(); ++j)
      probe.b.a[j] -= learning_rate * db.a[j];
  }
  return probe;
}

Mat probe_posteriors(const SpeakerProbe& probe, const AcousticFeatures& f) {
  LLEVC_CHECK(f.frames.cols == probe.w.cols,
              "probe expects " << probe.w.cols << " feature dims, got "
                               << f.frames.cols);
  LLEVC_CHECK(probe.window >= 1, "probe window must be positive");
  const Mat pooled = pool_windows(f.frames, probe.window);
  Mat logits(pooled.rows, probe.classes());
  kernels::affine_nt(pooled, probe.w, probe.b, logits);
  Mat post(pooled.rows, probe.classes());
  kernels::softmax_rows(logits, post);
  return post;
}

double speaker_similarity(const AcousticFeatures& f, const SpeakerProbe& probe,
                          int speaker_id) {
  const int cls = probe.class_of(speaker_id);
  LLEVC_CHECK(cls >= 0,
              "speaker " << speaker_id << " is not covered by the probe");
  LLEVC_CHECK(f.frames.rows > 0, "speaker_similarity: empty features");
  const Mat post = probe_posteriors(probe, f);
  double mean = 0.0;
  for (int t = 0; t < post.rows; ++t) mean += post(t, cls);
  return mean / double(post.rows);
}

double tie_gap(const std::vector<const Utterance*>& pairs,
               const Checkpoint& ckpt) {
  LLEVC_CHECK(!pairs.empty(), "tie_gap needs at least one utterance");
  double mean = 0.0;
  for (const Utterance* u : pairs) mean += tie_loss(ckpt.cfg, ckpt.params, *u);
  return mean / double(pairs.size());
}

namespace {

// P(X <= k) for X ~ Binomial(n, 1/2), via log-space terms
double binom_half_cdf(int n, int k) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  const double log_half_n = -double(n) * std::log(2.0);
  double sum = 0.0;
  for (int i = 0; i <= k; ++i)
    sum += std::exp(std::lgamma(double(n) + 1.0) -
                    std::lgamma(double(i) + 1.0) -
                    std::lgamma(double(n - i) + 1.0) + log_half_n);
  return std::min(sum, 1.0);
}

}  // namespace

PreferenceResult preference_analysis(int wins_a, int wins_b) {
  LLEVC_CHECK(wins_a >= 0 && wins_b >= 0, "negative win counts");
  const int n = wins_a + wins_b;
  LLEVC_CHECK(n >= 1, "preference_analysis needs at least one vote");

  PreferenceResult r;
  r.n = n;
  r.share_a = double(wins_a) / double(n);

  // Wilson score interval; valid at the small n of desk-scale tests, unlike
  // the normal approximation.
  const double z = 1.959963984540054;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / double(n);
  const double center = (r.share_a + z2 / (2.0 * double(n))) / denom;
  const double half =
      z *
      std::sqrt(r.share_a * (1.0 - r.share_a) / double(n) +
                z2 / (4.0 * double(n) * double(n))) /
      denom;
  // exact endpoints are tangent to the sample share at 0 and 1; rounding can
  // push them a few ulps inside, so widen to keep the share covered
  r.ci_95 = Interval{std::max(0.0, std::min(center - half, r.share_a)),
                     std::min(1.0, std::max(center + half, r.share_a))};

  // Exact two-sided test against 0.5: the null is symmetric, so the two-sided
  // p-value is twice the lower tail of the smaller count, clamped to 1.
  r.p_exact = std::min(1.0, 2.0 * binom_half_cdf(n, std::min(wins_a, wins_b)));
  return r;
}

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Minimal CSV splitting; fields in these files never contain commas or
// quotes, and readers reject lines with the wrong field count.
std::vector<std::string> split_csv_line(const std::string& line,
                                        size_t expect, const char* what) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  LLEVC_CHECK(out.size() == expect, what << ": expected " << expect
                                         << " fields, got " << out.size()
                                         << " in line \"" << line << "\"");
  return out;
}

std::vector<std::string> csv_lines(const std::string& text,
                                   const std::string& header,
                                   const char* what) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  LLEVC_CHECK(!lines.empty() && lines.front() == header,
              what << ": expected header \"" << header << "\"");
  lines.erase(lines.begin());
  return lines;
}

constexpr const char* kMetricsHeader = "experiment,system,speaker,metric,value";
constexpr const char* kVotesHeader = "question_id,system_a,system_b,winner";

}  // namespace

void write_metrics_csv(const std::vector<MetricRow>& rows,
                       const std::string& path) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const MetricRow& r : rows)
    os << r.experiment << ',' << r.system << ',' << r.speaker << ','
       << r.metric << ',' << format_value(r.value) << '\n';
  write_file_bytes(path, os.str());
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::vector<MetricRow> rows;
  for (const std::string& line :
       csv_lines(read_file_bytes(path), kMetricsHeader, "metrics csv")) {
    const std::vector<std::string> f =
        split_csv_line(line, 5, "metrics csv");
    MetricRow r;
    r.experiment = f[0];
    r.system = f[1];
    r.speaker = std::stoi(f[2]);
    r.metric = f[3];
    r.value = std::stod(f[4]);
    rows.push_back(r);
  }
  return rows;
}

void write_votes_csv(const std::vector<VoteRow>& rows,
                     const std::string& path) {
  std::ostringstream os;
  os << kVotesHeader << '\n';
  for (const VoteRow& r : rows)
    os << r.question_id << ',' << r.system_a << ',' << r.system_b << ','
       << r.winner << '\n';
  write_file_bytes(path, os.str());
}

std::vector<VoteRow> read_votes_csv(const std::string& path) {
  std::vector<VoteRow> rows;
  for (const std::string& line :
       csv_lines(read_file_bytes(path), kVotesHeader, "votes csv")) {
    const std::vector<std::string> f = split_csv_line(line, 4, "votes csv");
    VoteRow r{f[0], f[1], f[2], f[3]};
    LLEVC_CHECK(r.winner == r.system_a || r.winner == r.system_b,
                "votes csv: winner \"" << r.winner << "\" is neither \""
                                       << r.system_a << "\" nor \""
                                       << r.system_b << "\"");
    rows.push_back(r);
  }
  return rows;
}

std::vector<PairTally> tally_votes(const std::vector<VoteRow>& votes) {
  std::vector<PairTally> tallies;
  for (const VoteRow& v : votes) {
    PairTally* t = nullptr;
    for (PairTally& cand : tallies)
      if (cand.system_a == v.system_a && cand.system_b == v.system_b)
        t = &cand;
    if (!t) {
      tallies.push_back(PairTally{v.system_a, v.system_b, 0, 0});
      t = &tallies.back();
    }
    LLEVC_CHECK(v.winner == v.system_a || v.winner == v.system_b,
                "vote winner \"" << v.winner << "\" is neither side");
    if (v.winner == v.system_a)
      t->wins_a += 1;
    else
      t->wins_b += 1;
  }
  return tallies;
}

}  // namespace llevc
