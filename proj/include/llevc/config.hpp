// llevc/config.hpp

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
#include <optional>
#include <string>

#include "llevc/corpus.hpp"
#include "llevc/protocol.hpp"

namespace llevc {

// Filesystem locations for a run. Excluded from the config hash: moving a
// run between machines must not invalidate its checkpoints.
struct RunPaths {
  std::string corpus;       // corpus directory
  std::string checkpoints;  // checkpoint directory
  std::string outputs;      // reports, metrics, renders
};

// Welding fine-tunes an already trained model jointly with its vocoder, so
// its default step size is a tenth of the other stages'.
StageConfig default_weld_stage();

// Declarative description of one run: every knob the pipeline reads comes
// from this struct, after flag and environment overrides are applied to it.
struct RunConfig {
  RunPaths paths;
  uint64_t seed = 1;
  ModelConfig model;
  LossWeights weights;  // stage weights default to these
  StageConfig train;
  StageConfig adapt;
  StageConfig weld = default_weld_stage();

  void validate() const;
};

// Parses JSON text into a RunConfig. Every key is optional and defaults to
// the struct defaults. The top-level "weights" object seeds all three stage
// weight sets before per-stage "weights" overrides are applied, and stage
// seeds default to the global seed the same way; the key order in the file
// does not matter. Unknown keys anywhere raise an Error naming the dotted
// path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Sets the global seed and all per-stage seeds. Used for the --seed flag and
// the LLE_SEED environment variable, which replace every seed in the file; a
// partial override would silently mix two seed regimes.
void override_seed(RunConfig& cfg, uint64_t seed);

// Canonical serialization (sorted keys, effective values) of everything
// except paths, and its SHA-256. The hash is stored in checkpoints, so two
// config files with the same effective settings interoperate while any
// hyperparameter change is caught at load time.
std::string run_config_json(const RunConfig& cfg);
std::array<uint8_t, 32> run_config_hash(const RunConfig& cfg);

// Corpus generation spec file, with the same JSON conventions. An optional
// "seed" key supplies the default when the command line passes none.
struct CorpusSpecFile {
  CorpusSpec spec;
  std::optional<uint64_t> seed;
};
CorpusSpecFile parse_corpus_spec(const std::string& text);
CorpusSpecFile load_corpus_spec(const std::string& path);

}  // namespace llevc
