// llevc/src/model.cpp

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

#include "llevc/model.hpp"

#include <algorithm>
#include <cmath>

#include "llevc/kernels.hpp"

namespace llevc {

namespace {

constexpr const char* kGroupNames[] = {"tenc", "senc", "tdec",
                                       "sdec", "voc",  "speaker"};
constexpr int kNumGroups = 6;

constexpr uint64_t kStreamTtsVocoder = 1;
constexpr uint64_t kStreamVcVocoder = 2;

struct TensorSpec {
  std::string name;
  int group = 0;
  int rows = 0;
  int cols = 0;
};

void push_encoder_spec(std::vector<TensorSpec>& s, const ModelConfig& cfg,
                       const std::string& prefix, int group, int input_dim) {
  const int C = cfg.enc_channels;
  for (int l = 1; l <= cfg.enc_layers; ++l) {
    const int in = (l == 1) ? input_dim : C;
    const std::string n = prefix + ".conv" + std::to_string(l);
    s.push_back({n + "_w", group, C, in * cfg.enc_kernel});
    s.push_back({n + "_b", group, 1, C});
  }
  s.push_back({prefix + ".mean_w", group, cfg.latent_dim, C});
  s.push_back({prefix + ".mean_b", group, 1, cfg.latent_dim});
  s.push_back({prefix + ".logvar_w", group, cfg.latent_dim, C});
  s.push_back({prefix + ".logvar_b", group, 1, cfg.latent_dim});
}

std::vector<TensorSpec> param_spec(const ModelConfig& cfg) {
  cfg.validate();
  const int D = cfg.feature_dim, L = cfg.latent_dim, H = cfg.dec_hidden,
            S = cfg.speaker_dim, V = cfg.vocab_size, C = cfg.enc_channels,
            Cv = cfg.voc_channels, Kv = cfg.voc_kernel;
  std::vector<TensorSpec> s;
  s.push_back({"tenc.embed", kGroupTenc, V, cfg.embed_dim});
  push_encoder_spec(s, cfg, "tenc", kGroupTenc, cfg.embed_dim);
  push_encoder_spec(s, cfg, "senc", kGroupSenc, D);
  s.push_back({"tdec.conv_w", kGroupTdec, C, L * cfg.tdec_kernel});
  s.push_back({"tdec.conv_b", kGroupTdec, 1, C});
  s.push_back({"tdec.out_w", kGroupTdec, V, C});
  s.push_back({"tdec.out_b", kGroupTdec, 1, V});
  s.push_back({"sdec.in_w", kGroupSdec, H, L + D});
  s.push_back({"sdec.in_b", kGroupSdec, 1, H});
  s.push_back({"sdec.spk_w", kGroupSdec, H, S});
  s.push_back({"sdec.h_w", kGroupSdec, H, H});
  s.push_back({"sdec.h_b", kGroupSdec, 1, H});
  s.push_back({"sdec.out_w", kGroupSdec, D, H});
  s.push_back({"sdec.out_b", kGroupSdec, 1, D});
  for (size_t l = 0; l < cfg.voc_dilations.size(); ++l) {
    const int in = (l == 0) ? (D + 1) : Cv;
    const std::string n = "voc.conv" + std::to_string(l + 1);
    s.push_back({n + "_w", kGroupVoc, Cv, in * Kv});
    s.push_back({n + "_b", kGroupVoc, 1, Cv});
  }
  s.push_back({"voc.spk_w", kGroupVoc, Cv, S});
  s.push_back({"voc.out_w", kGroupVoc, cfg.num_codes, Cv});
  s.push_back({"voc.out_b", kGroupVoc, 1, cfg.num_codes});
  s.push_back({"spk.table", kGroupSpeaker, cfg.max_speakers, S});
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

Mat init_tensor(const TensorSpec& spec, Rng& rng) {
  Mat m(spec.rows, spec.cols);
  // moderate initial variance: tight enough that latents are informative,
  // loose enough that the 1/sigma^2 terms of the symmetric KLD stay
  // well-conditioned for plain SGD
  if (ends_with(spec.name, "logvar_b")) {
    m.fill(-1.0);
    return m;
  }
  if (ends_with(spec.name, "_b")) return m;  // zeros
  // embeddings carry unit variance; weight matrices scale by fan-in; output
  // heads start an order smaller so initial predictions sit near zero and
  // initial posteriors near uniform
  const bool table = spec.name == "tenc.embed" || spec.name == "spk.table";
  const bool head = ends_with(spec.name, "out_w");
  const double scale = (table ? 1.0 : 1.0 / std::sqrt(double(spec.cols))) *
                       (head ? 0.1 : 1.0);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

}  // namespace

const char* group_name(int group) {
  LLEVC_CHECK(group >= 0 && group < kNumGroups, "unknown parameter group "
                                                    << group);
  return kGroupNames[group];
}

int group_from_name(const std::string& name) {
  for (int g = 0; g < kNumGroups; ++g)
    if (name == kGroupNames[g]) return g;
  throw Error("unknown parameter group name: " + name);
}

void ModelConfig::validate() const {
  LLEVC_CHECK(feature_dim >= 1 && latent_dim >= 1 && embed_dim >= 1 &&
                  speaker_dim >= 1 && dec_hidden >= 1 && enc_channels >= 1 &&
                  voc_channels >= 1,
              "model dims must be positive");
  LLEVC_CHECK(vocab_size >= 2, "vocab_size must be at least 2");
  LLEVC_CHECK(max_speakers >= 1, "max_speakers must be positive");
  LLEVC_CHECK(enc_layers >= 1, "enc_layers must be positive");
  LLEVC_CHECK(enc_kernel >= 1 && enc_kernel % 2 == 1,
              "enc_kernel must be odd");
  LLEVC_CHECK(tdec_kernel >= 1 && tdec_kernel % 2 == 1,
              "tdec_kernel must be odd");
  LLEVC_CHECK(voc_kernel >= 1, "voc_kernel must be positive");
  LLEVC_CHECK(!voc_dilations.empty(), "voc_dilations must be nonempty");
  for (int d : voc_dilations)
    LLEVC_CHECK(d >= 1, "voc dilations must be positive");
  LLEVC_CHECK(samples_per_frame >= 1, "samples_per_frame must be positive");
  LLEVC_CHECK(num_codes == 256, "the waveform codec is 8-bit; num_codes"
                                " must be 256");
}

ParamSet init_params(const ModelConfig& cfg, uint64_t seed) {
  const std::vector<TensorSpec> spec = param_spec(cfg);
  ParamSet ps;
  for (size_t i = 0; i < spec.size(); ++i) {
    Rng rng = Rng::substream(seed, uint64_t(i));
    ps.add(spec[i].name, spec[i].group, init_tensor(spec[i], rng));
  }
  return ps;
}

Tape::Ref BoundParams::operator()(std::string_view name) const {
  LLEVC_CHECK(ps != nullptr, "BoundParams used before bind_params");
  return refs[size_t(ps->require(name))];
}

BoundParams bind_params(Tape& tp, const ParamSet& ps) {
  BoundParams bp;
  bp.ps = &ps;
  bp.refs.reserve(ps.t.size());
  for (size_t i = 0; i < ps.t.size(); ++i)
    bp.refs.push_back(tp.param(ps, int(i)));
  return bp;
}

std::vector<int> frame_symbols(const PhonemeSequence& x, int vocab_size) {
  x.validate();
  std::vector<int> syms;
  syms.reserve(size_t(x.total_frames()));
  for (size_t i = 0; i < x.symbols.size(); ++i) {
    LLEVC_CHECK(x.symbols[i] >= 0 && x.symbols[i] < vocab_size,
                "symbol id " << x.symbols[i] << " outside vocabulary of size "
                             << vocab_size);
    for (int d = 0; d < x.durations[i]; ++d) syms.push_back(x.symbols[i]);
  }
  return syms;
}

namespace {

EncRefs enc_graph_from(Tape& tp, const BoundParams& bp, const ModelConfig& cfg,
                       const std::string& prefix, Tape::Ref input) {
  Tape::Ref h = input;
  for (int l = 1; l <= cfg.enc_layers; ++l) {
    const std::string n = prefix + ".conv" + std::to_string(l);
    h = tp.tanh_(tp.conv_same(h, bp(n + "_w"), bp(n + "_b"), cfg.enc_kernel));
  }
  EncRefs out;
  out.mean = tp.affine(h, bp(prefix + ".mean_w"), bp(prefix + ".mean_b"));
  out.log_var =
      tp.clamp(tp.affine(h, bp(prefix + ".logvar_w"), bp(prefix + ".logvar_b")),
               -kLogVarClamp, kLogVarClamp);
  return out;
}

}  // namespace

EncRefs tenc_graph(Tape& tp, const BoundParams& bp, const ModelConfig& cfg,
                   const PhonemeSequence& x) {
  const std::vector<int> syms = frame_symbols(x, cfg.vocab_size);
  Tape::Ref e = tp.gather_rows(bp("tenc.embed"), syms);
  return enc_graph_from(tp, bp, cfg, "tenc", e);
}

EncRefs senc_graph(Tape& tp, const BoundParams& bp, const ModelConfig& cfg,
                   const Mat& y) {
  LLEVC_CHECK(y.rows >= 1 && y.cols == cfg.feature_dim,
              "senc_graph: features must be T x feature_dim");
  return enc_graph_from(tp, bp, cfg, "senc", tp.constant(y));
}

EncRefs senc_graph_ref(Tape& tp, const BoundParams& bp, const ModelConfig& cfg,
                       Tape::Ref y) {
  const Mat& v = tp.val(y);
  LLEVC_CHECK(v.rows >= 1 && v.cols == cfg.feature_dim,
              "senc_graph_ref: features must be T x feature_dim");
  return enc_graph_from(tp, bp, cfg, "senc", y);
}

Tape::Ref tdec_logits_graph(Tape& tp, const BoundParams& bp,
                            const ModelConfig& cfg, Tape::Ref z) {
  Tape::Ref h = tp.tanh_(
      tp.conv_same(z, bp("tdec.conv_w"), bp("tdec.conv_b"), cfg.tdec_kernel));
  return tp.affine(h, bp("tdec.out_w"), bp("tdec.out_b"));
}

namespace {

Mat shifted_prev(const Mat& y_teacher) {
  Mat prev(y_teacher.rows, y_teacher.cols);
  for (int t = 1; t < y_teacher.rows; ++t)
    for (int c = 0; c < y_teacher.cols; ++c) prev(t, c) = y_teacher(t - 1, c);
  return prev;
}

std::vector<double> prev_code_values(const std::vector<uint8_t>& codes) {
  std::vector<double> v(codes.size());
  v[0] = mu_law_decode(128);  // mid-scale: silence before the first sample
  for (size_t n = 1; n < codes.size(); ++n) v[n] = mu_law_decode(codes[n - 1]);
  return v;
}

}  // namespace

Tape::Ref sdec_tf_graph(Tape& tp, const BoundParams& bp,
                        const ModelConfig& cfg, Tape::Ref z, int speaker_row,
                        const Mat& y_teacher) {
  const Mat& zv = tp.val(z);
  LLEVC_CHECK(y_teacher.rows == zv.rows && y_teacher.cols == cfg.feature_dim,
              "sdec_tf_graph: teacher frames do not match latents");
  return sdec_prev_graph(tp, bp, cfg, z, speaker_row,
                         shifted_prev(y_teacher));
}

Tape::Ref sdec_prev_graph(Tape& tp, const BoundParams& bp,
                          const ModelConfig& cfg, Tape::Ref z, int speaker_row,
                          const Mat& prev) {
  const Mat& zv = tp.val(z);
  LLEVC_CHECK(zv.cols == cfg.latent_dim, "sdec_prev_graph: bad latent width");
  LLEVC_CHECK(prev.rows == zv.rows && prev.cols == cfg.feature_dim,
              "sdec_prev_graph: prev frames do not match latents");
  Tape::Ref in = tp.concat_cols(z, tp.constant(prev));
  Tape::Ref srow = tp.gather_rows(bp("spk.table"), {speaker_row});
  Tape::Ref sbias =
      tp.affine(srow, bp("sdec.spk_w"), tp.constant(Mat(1, cfg.dec_hidden)));
  Tape::Ref h1 = tp.tanh_(tp.add_rowvec(
      tp.affine(in, bp("sdec.in_w"), bp("sdec.in_b")), sbias));
  Tape::Ref h2 = tp.tanh_(tp.affine(h1, bp("sdec.h_w"), bp("sdec.h_b")));
  return tp.affine(h2, bp("sdec.out_w"), bp("sdec.out_b"));
}

Tape::Ref voc_logits_graph(Tape& tp, const BoundParams& bp,
                           const ModelConfig& cfg, Tape::Ref cond_features,
                           int speaker_row, const std::vector<uint8_t>& codes) {
  const Mat& cond = tp.val(cond_features);
  LLEVC_CHECK(cond.cols == cfg.feature_dim,
              "voc_logits_graph: bad conditioning width");
  LLEVC_CHECK(int(codes.size()) == cond.rows * cfg.samples_per_frame,
              "voc_logits_graph: code count must be frames*samples_per_frame");
  const int N = int(codes.size());
  Mat prev(N, 1);
  const std::vector<double> pv = prev_code_values(codes);
  for (int n = 0; n < N; ++n) prev(n, 0) = pv[size_t(n)];
  Tape::Ref in = tp.concat_cols(
      tp.constant(prev), tp.upsample_rows(cond_features, cfg.samples_per_frame));
  Tape::Ref srow = tp.gather_rows(bp("spk.table"), {speaker_row});
  Tape::Ref sbias =
      tp.affine(srow, bp("voc.spk_w"), tp.constant(Mat(1, cfg.voc_channels)));
  Tape::Ref h = tp.tanh_(tp.add_rowvec(
      tp.conv_causal(in, bp("voc.conv1_w"), bp("voc.conv1_b"), cfg.voc_kernel,
                     cfg.voc_dilations[0]),
      sbias));
  for (size_t l = 1; l < cfg.voc_dilations.size(); ++l) {
    const std::string n = "voc.conv" + std::to_string(l + 1);
    h = tp.tanh_(tp.conv_causal(h, bp(n + "_w"), bp(n + "_b"), cfg.voc_kernel,
                                cfg.voc_dilations[l]));
  }
  return tp.affine(h, bp("voc.out_w"), bp("voc.out_b"));
}

namespace {

// speaker embedding row passed through a bias projection; shared by the
// decoder and the vocoder paths
Mat speaker_bias(const ParamSet& ps, const char* w_name, int speaker_row,
                 int out_dim, int max_speakers, int speaker_dim) {
  LLEVC_CHECK(speaker_row >= 0 && speaker_row < max_speakers,
              "speaker row " << speaker_row << " out of range");
  const Mat& table = ps.value("spk.table");
  LLEVC_CHECK(table.rows == max_speakers && table.cols == speaker_dim,
              "speaker table shape mismatch");
  Mat srow(1, speaker_dim);
  for (int c = 0; c < speaker_dim; ++c) srow(0, c) = table(speaker_row, c);
  Mat out(1, out_dim);
  kernels::affine_nt(srow, ps.value(w_name), Mat(1, out_dim), out);
  return out;
}

Mat enc_forward(const ModelConfig& cfg, const ParamSet& ps,
                const std::string& prefix, const Mat& input) {
  Mat h = input;
  for (int l = 1; l <= cfg.enc_layers; ++l) {
    const std::string n = prefix + ".conv" + std::to_string(l);
    Mat pre(h.rows, cfg.enc_channels);
    kernels::conv1d_same(h, ps.value(n + "_w"), ps.value(n + "_b"),
                         cfg.enc_kernel, pre);
    Mat act(pre.rows, pre.cols);
    kernels::tanh_fwd(pre, act);
    h = std::move(act);
  }
  return h;
}

LLE enc_heads(const ModelConfig& cfg, const ParamSet& ps,
              const std::string& prefix, const Mat& h) {
  Mat mean(h.rows, cfg.latent_dim);
  kernels::affine_nt(h, ps.value(prefix + ".mean_w"),
                     ps.value(prefix + ".mean_b"), mean);
  Mat lv(h.rows, cfg.latent_dim);
  kernels::affine_nt(h, ps.value(prefix + ".logvar_w"),
                     ps.value(prefix + ".logvar_b"), lv);
  for (int r = 0; r < lv.rows; ++r)
    for (int c = 0; c < lv.cols; ++c)
      lv(r, c) = std::min(kLogVarClamp, std::max(-kLogVarClamp, lv(r, c)));
  return LLE(std::move(mean), std::move(lv));
}

}  // namespace

LLE encode_text(const ModelConfig& cfg, const ParamSet& ps,
                const PhonemeSequence& x) {
  const std::vector<int> syms = frame_symbols(x, cfg.vocab_size);
  const Mat& embed = ps.value("tenc.embed");
  Mat e(int(syms.size()), cfg.embed_dim);
  for (size_t t = 0; t < syms.size(); ++t)
    for (int c = 0; c < cfg.embed_dim; ++c)
      e(int(t), c) = embed(syms[t], c);
  return enc_heads(cfg, ps, "tenc", enc_forward(cfg, ps, "tenc", e));
}

LLE encode_speech(const ModelConfig& cfg, const ParamSet& ps, const Mat& y) {
  LLEVC_CHECK(y.rows >= 1 && y.cols == cfg.feature_dim,
              "encode_speech: features must be T x feature_dim");
  return enc_heads(cfg, ps, "senc", enc_forward(cfg, ps, "senc", y));
}

Mat decode_speech_tf(const ModelConfig& cfg, const ParamSet& ps, const Mat& z,
                     int speaker_row, const Mat& y_teacher) {
  LLEVC_CHECK(z.cols == cfg.latent_dim && y_teacher.rows == z.rows &&
                  y_teacher.cols == cfg.feature_dim,
              "decode_speech_tf: shape mismatch");
  const int T = z.rows;
  const Mat prev = shifted_prev(y_teacher);
  Mat in(T, cfg.latent_dim + cfg.feature_dim);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < cfg.latent_dim; ++c) in(t, c) = z(t, c);
    for (int c = 0; c < cfg.feature_dim; ++c)
      in(t, cfg.latent_dim + c) = prev(t, c);
  }
  const Mat sbias = speaker_bias(ps, "sdec.spk_w", speaker_row, cfg.dec_hidden,
                                 cfg.max_speakers, cfg.speaker_dim);
  Mat pre1(T, cfg.dec_hidden);
  kernels::affine_nt(in, ps.value("sdec.in_w"), ps.value("sdec.in_b"), pre1);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < cfg.dec_hidden; ++c) pre1(t, c) += sbias(0, c);
  Mat h1(T, cfg.dec_hidden);
  kernels::tanh_fwd(pre1, h1);
  Mat pre2(T, cfg.dec_hidden);
  kernels::affine_nt(h1, ps.value("sdec.h_w"), ps.value("sdec.h_b"), pre2);
  Mat h2(T, cfg.dec_hidden);
  kernels::tanh_fwd(pre2, h2);
  Mat out(T, cfg.feature_dim);
  kernels::affine_nt(h2, ps.value("sdec.out_w"), ps.value("sdec.out_b"), out);
  return out;
}

Mat decode_speech_free(const ModelConfig& cfg, const ParamSet& ps,
                       const Mat& z, int speaker_row) {
  LLEVC_CHECK(z.cols == cfg.latent_dim, "decode_speech_free: bad latents");
  const int T = z.rows, D = cfg.feature_dim, H = cfg.dec_hidden;
  const Mat sbias = speaker_bias(ps, "sdec.spk_w", speaker_row, H,
                                 cfg.max_speakers, cfg.speaker_dim);
  Mat out(T, D);
  Mat prev(1, D);  // zero frame before the first prediction
  Mat in(1, cfg.latent_dim + D), pre1(1, H), h1(1, H), pre2(1, H), h2(1, H),
      orow(1, D);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < cfg.latent_dim; ++c) in(0, c) = z(t, c);
    for (int c = 0; c < D; ++c) in(0, cfg.latent_dim + c) = prev(0, c);
    kernels::affine_nt(in, ps.value("sdec.in_w"), ps.value("sdec.in_b"), pre1);
    for (int c = 0; c < H; ++c) pre1(0, c) += sbias(0, c);
    kernels::tanh_fwd(pre1, h1);
    kernels::affine_nt(h1, ps.value("sdec.h_w"), ps.value("sdec.h_b"), pre2);
    kernels::tanh_fwd(pre2, h2);
    kernels::affine_nt(h2, ps.value("sdec.out_w"), ps.value("sdec.out_b"),
                       orow);
    for (int c = 0; c < D; ++c) {
      out(t, c) = orow(0, c);
      prev(0, c) = orow(0, c);
    }
  }
  return out;
}

Mat tdec_posterior(const ModelConfig& cfg, const ParamSet& ps, const Mat& z) {
  LLEVC_CHECK(z.cols == cfg.latent_dim, "tdec_posterior: bad latents");
  Mat pre(z.rows, cfg.enc_channels);
  kernels::conv1d_same(z, ps.value("tdec.conv_w"), ps.value("tdec.conv_b"),
                       cfg.tdec_kernel, pre);
  Mat h(pre.rows, pre.cols);
  kernels::tanh_fwd(pre, h);
  Mat logits(z.rows, cfg.vocab_size);
  kernels::affine_nt(h, ps.value("tdec.out_w"), ps.value("tdec.out_b"), logits);
  Mat probs(logits.rows, logits.cols);
  kernels::softmax_rows(logits, probs);
  return probs;
}

namespace {

// Incremental vocoder state. Layer activations are kept as growing history
// matrices so the causal convolutions see exactly the rows the batched pass
// sees; bit-for-bit agreement with vocode_logits_tf is load-bearing for the
// teacher-forced/free-running consistency tests.
struct VocRunner {
  const ModelConfig& cfg;
  const ParamSet& ps;
  int N;
  Mat sbias;
  Mat h0;               // N x (1 + D): previous sample value, then features
  std::vector<Mat> h;   // per-layer post-activation history, N x Cv
  Mat pre;              // shared pre-activation scratch, N x Cv
  Mat head_in;          // 1 x Cv
  Mat logits_row;       // 1 x num_codes

  VocRunner(const ModelConfig& cfg_in, const ParamSet& ps_in,
            const Mat& features, int speaker_row)
      : cfg(cfg_in),
        ps(ps_in),
        N(features.rows * cfg_in.samples_per_frame),
        sbias(speaker_bias(ps_in, "voc.spk_w", speaker_row,
                           cfg_in.voc_channels, cfg_in.max_speakers,
                           cfg_in.speaker_dim)),
        h0(features.rows * cfg_in.samples_per_frame, 1 + cfg_in.feature_dim),
        pre(features.rows * cfg_in.samples_per_frame, cfg_in.voc_channels),
        head_in(1, cfg_in.voc_channels),
        logits_row(1, cfg_in.num_codes) {
    LLEVC_CHECK(features.cols == cfg.feature_dim,
                "vocoder conditioning width mismatch");
    for (int n = 0; n < N; ++n)
      for (int d = 0; d < cfg.feature_dim; ++d)
        h0(n, 1 + d) = features(n / cfg.samples_per_frame, d);
    h.assign(cfg.voc_dilations.size(), Mat(N, cfg.voc_channels));
  }

  // logits for sample n given the decoded previous code
  const Mat& step(int n, uint8_t prev_code) {
    h0(n, 0) = (n == 0) ? mu_law_decode(128) : mu_law_decode(prev_code);
    const Mat* x = &h0;
    for (size_t l = 0; l < cfg.voc_dilations.size(); ++l) {
      const std::string nm = "voc.conv" + std::to_string(l + 1);
      kernels::serial::conv1d_causal_row(*x, ps.value(nm + "_w"),
                                         ps.value(nm + "_b"), cfg.voc_kernel,
                                         cfg.voc_dilations[l], n, pre);
      Mat& hl = h[l];
      if (l == 0) {
        for (int c = 0; c < cfg.voc_channels; ++c)
          hl(n, c) = std::tanh(pre(n, c) + sbias(0, c));
      } else {
        for (int c = 0; c < cfg.voc_channels; ++c)
          hl(n, c) = std::tanh(pre(n, c));
      }
      x = &hl;
    }
    for (int c = 0; c < cfg.voc_channels; ++c) head_in(0, c) = h.back()(n, c);
    kernels::affine_nt(head_in, ps.value("voc.out_w"), ps.value("voc.out_b"),
                       logits_row);
    return logits_row;
  }
};

}  // namespace

Mat vocode_logits_tf(const ModelConfig& cfg, const ParamSet& ps,
                     const Mat& features, int speaker_row,
                     const std::vector<uint8_t>& codes) {
  LLEVC_CHECK(features.cols == cfg.feature_dim,
              "vocode_logits_tf: bad conditioning width");
  const int N = features.rows * cfg.samples_per_frame;
  LLEVC_CHECK(int(codes.size()) == N,
              "vocode_logits_tf: code count must be frames*samples_per_frame");
  Mat in(N, 1 + cfg.feature_dim);
  const std::vector<double> pv = prev_code_values(codes);
  for (int n = 0; n < N; ++n) {
    in(n, 0) = pv[size_t(n)];
    for (int d = 0; d < cfg.feature_dim; ++d)
      in(n, 1 + d) = features(n / cfg.samples_per_frame, d);
  }
  const Mat sbias = speaker_bias(ps, "voc.spk_w", speaker_row,
                                 cfg.voc_channels, cfg.max_speakers,
                                 cfg.speaker_dim);
  Mat pre(N, cfg.voc_channels);
  kernels::conv1d_causal(in, ps.value("voc.conv1_w"), ps.value("voc.conv1_b"),
                         cfg.voc_kernel, cfg.voc_dilations[0], pre);
  Mat hcur(N, cfg.voc_channels);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < cfg.voc_channels; ++c)
      hcur(n, c) = std::tanh(pre(n, c) + sbias(0, c));
  for (size_t l = 1; l < cfg.voc_dilations.size(); ++l) {
    const std::string nm = "voc.conv" + std::to_string(l + 1);
    kernels::conv1d_causal(hcur, ps.value(nm + "_w"), ps.value(nm + "_b"),
                           cfg.voc_kernel, cfg.voc_dilations[l], pre);
    kernels::tanh_fwd(pre, hcur);
  }
  Mat logits(N, cfg.num_codes);
  kernels::affine_nt(hcur, ps.value("voc.out_w"), ps.value("voc.out_b"),
                     logits);
  return logits;
}

Mat vocode_logits_free(const ModelConfig& cfg, const ParamSet& ps,
                       const Mat& features, int speaker_row,
                       const std::vector<uint8_t>& codes) {
  VocRunner run(cfg, ps, features, speaker_row);
  LLEVC_CHECK(int(codes.size()) == run.N,
              "vocode_logits_free: code count mismatch");
  Mat logits(run.N, cfg.num_codes);
  for (int n = 0; n < run.N; ++n) {
    const Mat& row = run.step(n, n == 0 ? uint8_t(128) : codes[size_t(n) - 1]);
    for (int c = 0; c < cfg.num_codes; ++c) logits(n, c) = row(0, c);
  }
  return logits;
}

std::vector<uint8_t> vocode_free(const ModelConfig& cfg, const ParamSet& ps,
                                 const Mat& features, int speaker_row,
                                 Rng& rng) {
  VocRunner run(cfg, ps, features, speaker_row);
  std::vector<uint8_t> codes(size_t(run.N));
  Mat probs(1, cfg.num_codes);
  uint8_t prev = 128;
  for (int n = 0; n < run.N; ++n) {
    const Mat& logits = run.step(n, prev);
    kernels::softmax_rows(logits, probs);
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = cfg.num_codes - 1;
    for (int c = 0; c < cfg.num_codes; ++c) {
      cum += probs(0, c);
      if (u < cum) {
        pick = c;
        break;
      }
    }
    codes[size_t(n)] = uint8_t(pick);
    prev = uint8_t(pick);
  }
  return codes;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::initial: return "initial";
    case Stage::adapted: return "adapted";
    case Stage::welded: return "welded";
  }
  throw Error("unknown stage byte");
}

int speaker_row(const Checkpoint& ckpt, int speaker_id) {
  for (size_t i = 0; i < ckpt.speaker_ids.size(); ++i)
    if (ckpt.speaker_ids[i] == speaker_id) return int(i);
  throw Error("speaker " + std::to_string(speaker_id) +
              " is not registered in this checkpoint");
}

int register_speaker(Checkpoint& ckpt, int speaker_id) {
  LLEVC_CHECK(speaker_id >= 0, "speaker ids must be nonnegative");
  for (size_t i = 0; i < ckpt.speaker_ids.size(); ++i)
    if (ckpt.speaker_ids[i] == speaker_id) return int(i);
  LLEVC_CHECK(int(ckpt.speaker_ids.size()) < ckpt.cfg.max_speakers,
              "speaker table is full (max_speakers="
                  << ckpt.cfg.max_speakers << ")");
  ckpt.speaker_ids.push_back(speaker_id);
  return int(ckpt.speaker_ids.size()) - 1;
}

namespace {

void put_model_config(std::string& out, const ModelConfig& cfg) {
  bin::put_u32(out, uint32_t(cfg.feature_dim));
  bin::put_u32(out, uint32_t(cfg.latent_dim));
  bin::put_u32(out, uint32_t(cfg.embed_dim));
  bin::put_u32(out, uint32_t(cfg.speaker_dim));
  bin::put_u32(out, uint32_t(cfg.vocab_size));
  bin::put_u32(out, uint32_t(cfg.max_speakers));
  bin::put_u32(out, uint32_t(cfg.enc_layers));
  bin::put_u32(out, uint32_t(cfg.enc_kernel));
  bin::put_u32(out, uint32_t(cfg.enc_channels));
  bin::put_u32(out, uint32_t(cfg.tdec_kernel));
  bin::put_u32(out, uint32_t(cfg.dec_hidden));
  bin::put_u32(out, uint32_t(cfg.voc_channels));
  bin::put_u32(out, uint32_t(cfg.voc_kernel));
  bin::put_u32(out, uint32_t(cfg.voc_dilations.size()));
  for (int d : cfg.voc_dilations) bin::put_u32(out, uint32_t(d));
  bin::put_u32(out, uint32_t(cfg.samples_per_frame));
  bin::put_u32(out, uint32_t(cfg.num_codes));
}

ModelConfig read_model_config(bin::Reader& r) {
  ModelConfig cfg;
  cfg.feature_dim = int(r.u32());
  cfg.latent_dim = int(r.u32());
  cfg.embed_dim = int(r.u32());
  cfg.speaker_dim = int(r.u32());
  cfg.vocab_size = int(r.u32());
  cfg.max_speakers = int(r.u32());
  cfg.enc_layers = int(r.u32());
  cfg.enc_kernel = int(r.u32());
  cfg.enc_channels = int(r.u32());
  cfg.tdec_kernel = int(r.u32());
  cfg.dec_hidden = int(r.u32());
  cfg.voc_channels = int(r.u32());
  cfg.voc_kernel = int(r.u32());
  const uint32_t nd = r.u32();
  LLEVC_CHECK(nd >= 1 && nd <= 64, "implausible dilation count " << nd);
  cfg.voc_dilations.resize(nd);
  for (uint32_t i = 0; i < nd; ++i) cfg.voc_dilations[i] = int(r.u32());
  cfg.samples_per_frame = int(r.u32());
  cfg.num_codes = int(r.u32());
  cfg.validate();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     bool f32_payload) {
  std::string out;
  out.append("LLEC", 4);
  bin::put_u32(out, 2);  // format version
  bin::put_u8(out, uint8_t(ckpt.stage));
  out.append(reinterpret_cast<const char*>(ckpt.config_hash.data()),
             ckpt.config_hash.size());
  put_model_config(out, ckpt.cfg);
  bin::put_u32(out, uint32_t(ckpt.params.t.size()));
  for (const ParamTensor& t : ckpt.params.t) {
    bin::put_str(out, t.name);
    bin::put_u8(out, uint8_t(t.group));
    bin::put_u32(out, uint32_t(t.value.rows));
    bin::put_u32(out, uint32_t(t.value.cols));
    bin::put_u8(out, f32_payload ? 1 : 0);
    for (double v : t.value.a) {
      if (f32_payload)
        bin::put_f32(out, float(v));
      else
        bin::put_f64(out, v);
    }
  }
  for (uint64_t w : ckpt.rng.s) bin::put_u64(out, w);
  bin::put_u8(out, ckpt.run.in_progress ? 1 : 0);
  bin::put_str(out, ckpt.run.phase);
  bin::put_u32(out, ckpt.run.step);
  bin::put_u32(out, uint32_t(int32_t(ckpt.target_speaker_id)));
  bin::put_u32(out, uint32_t(ckpt.speaker_ids.size()));
  for (int id : ckpt.speaker_ids) bin::put_u32(out, uint32_t(int32_t(id)));
  write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  bin::Reader r{bytes, 0, path};
  r.expect_magic("LLEC");
  const uint32_t version = r.u32();
  LLEVC_CHECK(version == 2, "unsupported checkpoint version " << version);
  Checkpoint ckpt;
  const uint8_t stage_byte = r.u8();
  LLEVC_CHECK(stage_byte <= 2, "bad stage byte " << int(stage_byte));
  ckpt.stage = Stage(stage_byte);
  for (size_t i = 0; i < ckpt.config_hash.size(); ++i)
    ckpt.config_hash[i] = r.u8();
  ckpt.cfg = read_model_config(r);
  const ModelConfig& cfg = ckpt.cfg;
  const uint32_t count = r.u32();
  LLEVC_CHECK(count <= 4096, "implausible tensor count " << count);
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const uint8_t group = r.u8();
    LLEVC_CHECK(group < kNumGroups, "bad group byte for tensor " << name);
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    LLEVC_CHECK(rows >= 1 && rows < (1u << 24) && cols >= 1 &&
                    cols < (1u << 24),
                "implausible tensor shape for " << name);
    const uint8_t dtype = r.u8();
    LLEVC_CHECK(dtype <= 1, "bad dtype byte for tensor " << name);
    Mat m(static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : m.a) v = (dtype == 1) ? double(r.f32()) : r.f64();
    ckpt.params.add(name, int(group), std::move(m));
  }
  for (uint64_t& w : ckpt.rng.s) w = r.u64();
  ckpt.run.in_progress = r.u8() != 0;
  ckpt.run.phase = r.str();
  ckpt.run.step = r.u32();
  ckpt.target_speaker_id = int(int32_t(r.u32()));
  const uint32_t nspk = r.u32();
  LLEVC_CHECK(int(nspk) <= cfg.max_speakers,
              "checkpoint registers more speakers than the table holds");
  ckpt.speaker_ids.resize(nspk);
  for (uint32_t i = 0; i < nspk; ++i)
    ckpt.speaker_ids[i] = int(int32_t(r.u32()));
  LLEVC_CHECK(r.done(), "trailing bytes in checkpoint " << path);

  const std::vector<TensorSpec> spec = param_spec(cfg);
  LLEVC_CHECK(ckpt.params.t.size() == spec.size(),
              "checkpoint tensor inventory does not match the model config");
  for (const TensorSpec& s : spec) {
    const int idx = ckpt.params.find(s.name);
    LLEVC_CHECK(idx >= 0, "checkpoint is missing tensor " << s.name);
    const ParamTensor& t = ckpt.params.t[size_t(idx)];
    LLEVC_CHECK(t.group == s.group && t.value.rows == s.rows &&
                    t.value.cols == s.cols,
                "checkpoint tensor " << s.name
                                     << " does not match the model config");
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(path);
  LLEVC_CHECK(ckpt.cfg == cfg,
              "model config embedded in " << path
                                          << " does not match the requested one");
  return ckpt;
}

bool params_bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.t.size() != b.t.size()) return false;
  for (size_t i = 0; i < a.t.size(); ++i) {
    if (a.t[i].name != b.t[i].name || a.t[i].group != b.t[i].group)
      return false;
    if (!bit_equal(a.t[i].value, b.t[i].value)) return false;
  }
  return true;
}

InferResult tts_infer(const Checkpoint& ckpt, const PhonemeSequence& x,
                      int speaker_id, uint64_t seed) {
  const int row = speaker_row(ckpt, speaker_id);
  if (speaker_id == ckpt.target_speaker_id)
    LLEVC_CHECK(ckpt.stage >= Stage::adapted,
                "synthesis for the adaptation target requires a checkpoint at"
                " stage adapted or later");
  const LLE lle = encode_text(ckpt.cfg, ckpt.params, x);
  Mat feats = decode_speech_free(ckpt.cfg, ckpt.params, lle.mean, row);
  Rng rng = Rng::substream(seed, kStreamTtsVocoder);
  std::vector<uint8_t> codes =
      vocode_free(ckpt.cfg, ckpt.params, feats, row, rng);
  InferResult res;
  res.features.frames = std::move(feats);
  res.waveform.codes = std::move(codes);
  res.waveform.samples_per_frame = ckpt.cfg.samples_per_frame;
  return res;
}

InferResult vc_infer(const Checkpoint& ckpt, const Mat& y_src, uint64_t seed) {
  LLEVC_CHECK(ckpt.stage >= Stage::adapted,
              "voice conversion requires a checkpoint at stage adapted or"
              " later");
  LLEVC_CHECK(ckpt.target_speaker_id >= 0,
              "checkpoint has no adaptation target speaker");
  const int row = speaker_row(ckpt, ckpt.target_speaker_id);
  const LLE lle = encode_speech(ckpt.cfg, ckpt.params, y_src);
  Mat feats = decode_speech_free(ckpt.cfg, ckpt.params, lle.mean, row);
  Rng rng = Rng::substream(seed, kStreamVcVocoder);
  std::vector<uint8_t> codes =
      vocode_free(ckpt.cfg, ckpt.params, feats, row, rng);
  InferResult res;
  res.features.frames = std::move(feats);
  res.waveform.codes = std::move(codes);
  res.waveform.samples_per_frame = ckpt.cfg.samples_per_frame;
  return res;
}

}  // namespace llevc
