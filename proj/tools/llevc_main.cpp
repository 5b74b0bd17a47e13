// llevc/tools/llevc_main.cpp

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

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "llevc/common.hpp"
#include "llevc/pipeline.hpp"

namespace {

using namespace llevc;

std::optional<uint64_t> env_seed() {
  const char* s = std::getenv("LLE_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s, &end, 10);
  LLEVC_CHECK(errno == 0 && end != s && *end == '\0' && *s != '-',
              "LLE_SEED must be a non-negative integer, got \"" << s << "\"");
  return v;
}

// Flag beats environment beats config file beats the built-in default.
uint64_t resolve_seed(const std::optional<uint64_t>& flag,
                      const std::optional<uint64_t>& file_default,
                      uint64_t fallback) {
  if (flag) return *flag;
  if (const std::optional<uint64_t> env = env_seed()) return *env;
  if (file_default) return *file_default;
  return fallback;
}

struct StageArgs {
  std::string config;
  std::string in_path;
  std::string data;
  std::string out;
  std::optional<uint64_t> seed;
  int speaker = -1;  // adapt only
};

// Applies seed overrides and fills --data/--out from the config's paths.
RunConfig stage_config(StageArgs& a, const char* stage_name) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed)
    override_seed(cfg, *a.seed);
  else if (const std::optional<uint64_t> env = env_seed())
    override_seed(cfg, *env);
  if (a.data.empty()) a.data = cfg.paths.corpus;
  LLEVC_CHECK(!a.data.empty(),
              "no corpus directory: pass --data or set paths.corpus");
  const std::string ckpt_dir = cfg.paths.checkpoints;
  if (a.out.empty()) {
    LLEVC_CHECK(!ckpt_dir.empty(),
                "no output path: pass --out or set paths.checkpoints");
    a.out = ckpt_dir + "/" + stage_name + ".ckpt";
  }
  if (a.in_path.empty() && !ckpt_dir.empty()) {
    // adapt and weld continue the previous stage's default artifact
    const std::map<std::string, std::string> prev = {{"adapt", "train"},
                                                     {"weld", "adapt"}};
    const auto it = prev.find(stage_name);
    if (it != prev.end()) a.in_path = ckpt_dir + "/" + it->second + ".ckpt";
  }
  return cfg;
}

void add_stage_options(CLI::App* cmd, StageArgs& a, bool with_speaker) {
  cmd->add_option("--config", a.config, "run configuration file (JSON)")
      ->required();
  cmd->add_option("--in", a.in_path,
                  "start or mid-run checkpoint (train: resume only)");
  cmd->add_option("--data", a.data,
                  "corpus directory (default: paths.corpus)");
  cmd->add_option("--out", a.out,
                  "output checkpoint (default: under paths.checkpoints)");
  cmd->add_option("--seed", a.seed, "override every seed in the config");
  if (with_speaker)
    cmd->add_option("--speaker", a.speaker,
                    "adaptation target (default: the untranscribed speaker)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-lingual voice cloning on latent linguistic embeddings"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  std::optional<uint64_t> seed_flag;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a corpus");
  gen->add_option("--spec", spec_path, "corpus spec file (JSON)")->required();
  gen->add_option("--out", out_dir, "output corpus directory")->required();
  gen->add_option("--seed", seed_flag, "corpus seed");

  StageArgs train_args, adapt_args, weld_args;
  CLI::App* train_cmd =
      app.add_subcommand("train", "initial multi-speaker training");
  add_stage_options(train_cmd, train_args, false);
  CLI::App* adapt_cmd =
      app.add_subcommand("adapt", "adapt to an untranscribed speaker");
  add_stage_options(adapt_cmd, adapt_args, true);
  CLI::App* weld_cmd =
      app.add_subcommand("weld", "joint decoder/vocoder fine-tuning");
  add_stage_options(weld_cmd, weld_args, false);

  std::string ckpt_path, phonemes_path, source_path, out_path, render_path;
  std::optional<uint64_t> infer_seed;
  int tts_speaker = -1;
  CLI::App* tts_cmd = app.add_subcommand("tts", "synthesize from phonemes");
  tts_cmd->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  tts_cmd->add_option("--phonemes", phonemes_path,
                      "phoneme file: one \"symbol duration\" pair per line")
      ->required();
  tts_cmd->add_option("--out", out_path, "output waveform blob")->required();
  tts_cmd->add_option("--speaker", tts_speaker,
                      "speaker id (default: the adaptation target)");
  tts_cmd->add_option("--seed", infer_seed, "sampling seed");
  tts_cmd->add_option("--render", render_path, "also write a 16-bit PCM WAV");

  CLI::App* vc_cmd = app.add_subcommand("vc", "convert source features");
  vc_cmd->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  vc_cmd->add_option("--source", source_path, "source feature blob")
      ->required();
  vc_cmd->add_option("--out", out_path, "output waveform blob")->required();
  vc_cmd->add_option("--seed", infer_seed, "sampling seed");
  vc_cmd->add_option("--render", render_path, "also write a 16-bit PCM WAV");

  std::string corpus_dir, votes_path;
  int eval_cap = 10;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  eval_cmd->add_option("--corpus", corpus_dir, "corpus directory")
      ->required();
  eval_cmd->add_option("--out", out_path, "output metrics CSV")->required();
  eval_cmd->add_option("--votes", votes_path,
                       "preference votes CSV to tally and append");
  eval_cmd->add_option("--cap", eval_cap,
                       "max scored utterances per speaker and system");

  std::string gc_config;
  CLI::App* gc_cmd =
      app.add_subcommand("grad-check", "finite-difference gradient check");
  gc_cmd->add_option("--config", gc_config, "run configuration file (JSON)")
      ->required();

  try {
    app.parse(argc, argv);

    if (*gen) {
      const CorpusSpecFile f = load_corpus_spec(spec_path);
      const uint64_t seed = resolve_seed(seed_flag, f.seed, 1);
      std::printf("%d\n", run_gen_data(f.spec, seed, out_dir));
    } else if (*train_cmd) {
      const RunConfig cfg = stage_config(train_args, "train");
      run_train(cfg, train_args.data, train_args.in_path, train_args.out);
    } else if (*adapt_cmd) {
      const RunConfig cfg = stage_config(adapt_args, "adapt");
      run_adapt(cfg, adapt_args.data, adapt_args.in_path, adapt_args.out,
                adapt_args.speaker);
    } else if (*weld_cmd) {
      const RunConfig cfg = stage_config(weld_args, "weld");
      run_weld(cfg, weld_args.data, weld_args.in_path, weld_args.out);
    } else if (*tts_cmd) {
      const uint64_t seed = resolve_seed(infer_seed, std::nullopt, 1);
      run_tts(ckpt_path, phonemes_path, out_path, tts_speaker, seed,
              render_path);
    } else if (*vc_cmd) {
      const uint64_t seed = resolve_seed(infer_seed, std::nullopt, 1);
      run_vc(ckpt_path, source_path, out_path, seed, render_path);
    } else if (*eval_cmd) {
      run_eval(ckpt_path, corpus_dir, out_path, votes_path, eval_cap);
    } else if (*gc_cmd) {
      const RunConfig cfg = load_run_config(gc_config);
      const GradCheckSummary s = run_grad_check(cfg.weights, cfg.seed);
      const GradCheckItem& w = s.worst();
      std::printf("%zu gradient checks, worst %s (seed %llu): %.3g\n",
                  s.items.size(), w.name.c_str(),
                  (unsigned long long)w.seed, w.report.max_rel_err);
      if (!s.all_ok()) {
        std::fprintf(stderr, "gradient check failed tolerance %.1g\n",
                     s.tolerance);
        return 1;
      }
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
