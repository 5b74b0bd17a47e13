// llevc/src/config.cpp

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

#include "llevc/config.hpp"

#include <json.hpp>

#include "llevc/common.hpp"

namespace llevc {
namespace {

using nlohmann::json;

double as_number(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_number(), "config key \"" << path << "\" must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_number_integer(),
              "config key \"" << path << "\" must be an integer");
  return v.get<int>();
}

uint64_t as_u64(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_number_integer() || v.is_number_unsigned(),
              "config key \"" << path << "\" must be an integer");
  LLEVC_CHECK(v.is_number_unsigned() || v.get<int64_t>() >= 0,
              "config key \"" << path << "\" must be non-negative");
  return v.get<uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_boolean(),
              "config key \"" << path << "\" must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_string(), "config key \"" << path << "\" must be a string");
  return v.get<std::string>();
}

[[noreturn]] void unknown_key(const std::string& path) {
  LLEVC_CHECK(false, "unknown config key \"" << path << "\"");
  std::abort();  // LLEVC_CHECK(false, ...) always throws
}

void expect_object(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_object(),
              "config key \"" << path << "\" must be an object");
}

std::vector<int> as_int_array(const json& v, const std::string& path) {
  LLEVC_CHECK(v.is_array(), "config key \"" << path << "\" must be an array");
  std::vector<int> out;
  out.reserve(v.size());
  for (const json& e : v) out.push_back(as_int(e, path));
  return out;
}

std::vector<std::string> as_string_array(const json& v,
                                         const std::string& path) {
  LLEVC_CHECK(v.is_array(), "config key \"" << path << "\" must be an array");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const json& e : v) out.push_back(as_string(e, path));
  return out;
}

void parse_paths(const json& j, const std::string& path, RunPaths& p) {
  expect_object(j, path);
  for (const auto& [k, v] : j.items()) {
    const std::string kp = path + "." + k;
    if (k == "corpus")
      p.corpus = as_string(v, kp);
    else if (k == "checkpoints")
      p.checkpoints = as_string(v, kp);
    else if (k == "outputs")
      p.outputs = as_string(v, kp);
    else
      unknown_key(kp);
  }
}

void parse_model(const json& j, const std::string& path, ModelConfig& m) {
  expect_object(j, path);
  for (const auto& [k, v] : j.items()) {
    const std::string kp = path + "." + k;
    if (k == "feature_dim")
      m.feature_dim = as_int(v, kp);
    else if (k == "latent_dim")
      m.latent_dim = as_int(v, kp);
    else if (k == "embed_dim")
      m.embed_dim = as_int(v, kp);
    else if (k == "speaker_dim")
      m.speaker_dim = as_int(v, kp);
    else if (k == "vocab_size")
      m.vocab_size = as_int(v, kp);
    else if (k == "max_speakers")
      m.max_speakers = as_int(v, kp);
    else if (k == "enc_layers")
      m.enc_layers = as_int(v, kp);
    else if (k == "enc_kernel")
      m.enc_kernel = as_int(v, kp);
    else if (k == "enc_channels")
      m.enc_channels = as_int(v, kp);
    else if (k == "tdec_kernel")
      m.tdec_kernel = as_int(v, kp);
    else if (k == "dec_hidden")
      m.dec_hidden = as_int(v, kp);
    else if (k == "voc_channels")
      m.voc_channels = as_int(v, kp);
    else if (k == "voc_kernel")
      m.voc_kernel = as_int(v, kp);
    else if (k == "voc_dilations")
      m.voc_dilations = as_int_array(v, kp);
    else if (k == "samples_per_frame")
      m.samples_per_frame = as_int(v, kp);
    else if (k == "num_codes")
      m.num_codes = as_int(v, kp);
    else
      unknown_key(kp);
  }
}

void parse_weights(const json& j, const std::string& path, LossWeights& w) {
  expect_object(j, path);
  for (const auto& [k, v] : j.items()) {
    const std::string kp = path + "." + k;
    if (k == "alpha_sts")
      w.alpha_sts = as_number(v, kp);
    else if (k == "alpha_stt")
      w.alpha_stt = as_number(v, kp);
    else if (k == "alpha_ttt")
      w.alpha_ttt = as_number(v, kp);
    else if (k == "beta_tie")
      w.beta_tie = as_number(v, kp);
    else if (k == "beta_cycle")
      w.beta_cycle = as_number(v, kp);
    else if (k == "gamma")
      w.gamma = as_number(v, kp);
    else
      unknown_key(kp);
  }
}

void parse_stage(const json& j, const std::string& path, StageConfig& s) {
  expect_object(j, path);
  for (const auto& [k, v] : j.items()) {
    const std::string kp = path + "." + k;
    if (k == "learning_rate")
      s.learning_rate = as_number(v, kp);
    else if (k == "step_count")
      s.step_count = as_int(v, kp);
    else if (k == "batch_size")
      s.batch_size = as_int(v, kp);
    else if (k == "weights")
      parse_weights(v, kp, s.weights);
    else if (k == "freeze")
      s.freeze = as_string_array(v, kp);
    else if (k == "seed")
      s.seed = as_u64(v, kp);
    else if (k == "eval_every")
      s.eval_every = as_int(v, kp);
    else if (k == "held_out_per_speaker")
      s.held_out_per_speaker = as_int(v, kp);
    else if (k == "voc_learning_rate")
      s.voc_learning_rate = as_number(v, kp);
    else if (k == "voc_step_count")
      s.voc_step_count = as_int(v, kp);
    else if (k == "voc_batch_size")
      s.voc_batch_size = as_int(v, kp);
    else
      unknown_key(kp);
  }
}

json parse_text(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  LLEVC_CHECK(!j.is_discarded(), what << " is not valid JSON");
  LLEVC_CHECK(j.is_object(), what << " must be a JSON object");
  return j;
}

json weights_json(const LossWeights& w) {
  json j;
  j["alpha_sts"] = w.alpha_sts;
  j["alpha_stt"] = w.alpha_stt;
  j["alpha_ttt"] = w.alpha_ttt;
  j["beta_tie"] = w.beta_tie;
  j["beta_cycle"] = w.beta_cycle;
  j["gamma"] = w.gamma;
  return j;
}

json model_json(const ModelConfig& m) {
  json j;
  j["feature_dim"] = m.feature_dim;
  j["latent_dim"] = m.latent_dim;
  j["embed_dim"] = m.embed_dim;
  j["speaker_dim"] = m.speaker_dim;
  j["vocab_size"] = m.vocab_size;
  j["max_speakers"] = m.max_speakers;
  j["enc_layers"] = m.enc_layers;
  j["enc_kernel"] = m.enc_kernel;
  j["enc_channels"] = m.enc_channels;
  j["tdec_kernel"] = m.tdec_kernel;
  j["dec_hidden"] = m.dec_hidden;
  j["voc_channels"] = m.voc_channels;
  j["voc_kernel"] = m.voc_kernel;
  j["voc_dilations"] = m.voc_dilations;
  j["samples_per_frame"] = m.samples_per_frame;
  j["num_codes"] = m.num_codes;
  return j;
}

json stage_json(const StageConfig& s) {
  json j;
  j["learning_rate"] = s.learning_rate;
  j["step_count"] = s.step_count;
  j["batch_size"] = s.batch_size;
  j["weights"] = weights_json(s.weights);
  j["freeze"] = s.freeze;
  j["seed"] = s.seed;
  j["eval_every"] = s.eval_every;
  j["held_out_per_speaker"] = s.held_out_per_speaker;
  j["voc_learning_rate"] = s.voc_learning_rate;
  j["voc_step_count"] = s.voc_step_count;
  j["voc_batch_size"] = s.voc_batch_size;
  return j;
}

}  // namespace

StageConfig default_weld_stage() {
  StageConfig cfg;
  cfg.learning_rate = 0.002;
  return cfg;
}

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  train.validate();
  adapt.validate();
  weld.validate();
}

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_text(text, "run config");
  RunConfig cfg;
  // Global seed and weights first, so every stage inherits them regardless
  // of key order in the file.
  if (j.contains("seed")) cfg.seed = as_u64(j["seed"], "seed");
  if (j.contains("weights")) parse_weights(j["weights"], "weights", cfg.weights);
  cfg.train.weights = cfg.weights;
  cfg.adapt.weights = cfg.weights;
  cfg.weld.weights = cfg.weights;
  cfg.train.seed = cfg.adapt.seed = cfg.weld.seed = cfg.seed;
  for (const auto& [k, v] : j.items()) {
    if (k == "seed" || k == "weights") continue;
    if (k == "paths")
      parse_paths(v, "paths", cfg.paths);
    else if (k == "model")
      parse_model(v, "model", cfg.model);
    else if (k == "train")
      parse_stage(v, "train", cfg.train);
    else if (k == "adapt")
      parse_stage(v, "adapt", cfg.adapt);
    else if (k == "weld")
      parse_stage(v, "weld", cfg.weld);
    else
      unknown_key(k);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file_bytes(path));
}

void override_seed(RunConfig& cfg, uint64_t seed) {
  cfg.seed = seed;
  cfg.train.seed = cfg.adapt.seed = cfg.weld.seed = seed;
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"] = model_json(cfg.model);
  j["weights"] = weights_json(cfg.weights);
  j["train"] = stage_json(cfg.train);
  j["adapt"] = stage_json(cfg.adapt);
  j["weld"] = stage_json(cfg.weld);
  return j.dump();
}

std::array<uint8_t, 32> run_config_hash(const RunConfig& cfg) {
  return sha256(run_config_json(cfg));
}

CorpusSpecFile parse_corpus_spec(const std::string& text) {
  const json j = parse_text(text, "corpus spec");
  CorpusSpecFile f;
  CorpusSpec& s = f.spec;
  for (const auto& [k, v] : j.items()) {
    if (k == "seed")
      f.seed = as_u64(v, k);
    else if (k == "lang_a_inventory")
      s.lang_a_inventory = as_int(v, k);
    else if (k == "lang_b_inventory")
      s.lang_b_inventory = as_int(v, k);
    else if (k == "lang_b_shared")
      s.lang_b_shared = as_int(v, k);
    else if (k == "speakers_a")
      s.speakers_a = as_int(v, k);
    else if (k == "speakers_b")
      s.speakers_b = as_int(v, k);
    else if (k == "utts_per_speaker_a")
      s.utts_per_speaker_a = as_int(v, k);
    else if (k == "utts_per_speaker_b")
      s.utts_per_speaker_b = as_int(v, k);
    else if (k == "transcribed_a")
      s.transcribed_a = as_bool(v, k);
    else if (k == "transcribed_b")
      s.transcribed_b = as_bool(v, k);
    else if (k == "min_symbols")
      s.min_symbols = as_int(v, k);
    else if (k == "max_symbols")
      s.max_symbols = as_int(v, k);
    else if (k == "min_duration")
      s.min_duration = as_int(v, k);
    else if (k == "max_duration")
      s.max_duration = as_int(v, k);
    else if (k == "feature_dim")
      s.feature_dim = as_int(v, k);
    else if (k == "samples_per_frame")
      s.samples_per_frame = as_int(v, k);
    else if (k == "noise_sigma")
      s.noise_sigma = as_number(v, k);
    else
      unknown_key(k);
  }
  s.validate();
  return f;
}

CorpusSpecFile load_corpus_spec(const std::string& path) {
  return parse_corpus_spec(read_file_bytes(path));
}

}  // namespace llevc
