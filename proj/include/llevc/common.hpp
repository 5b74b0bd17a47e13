// llevc/common.hpp

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
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace llevc {

// Domain error: anything that violates an operation contract or an on-disk
// format. CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LLEVC_CHECK(cond, msg)                           \
  do {                                                   \
    if (!(cond)) {                                       \
      std::ostringstream os__;                           \
      os__ << msg;                                       \
      throw ::llevc::Error(os__.str());                  \
    }                                                    \
  } while (0)

// xoshiro256** with splitmix64 seeding. Hand-rolled so that the full state is
// four u64 words, serializable bit-exactly into checkpoints; std distributions
// keep hidden state and are not portable across standard libraries.
struct Rng {
  std::array<uint64_t, 4> s{};

  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // uniform in [0, 1) with 53 random bits
  double uniform();
  // standard normal via Box-Muller; always consumes exactly two uniforms
  double normal();
  // uniform integer in [0, n)
  uint32_t range(uint32_t n);

  // independent deterministic substream (seed, stream) -> fresh generator
  static Rng substream(uint64_t seed, uint64_t stream);
};

uint64_t splitmix64(uint64_t& state);

// SHA-256 of a byte string (config hashing, checkpoint provenance).
std::array<uint8_t, 32> sha256(const void* data, size_t len);
std::array<uint8_t, 32> sha256(const std::string& s);
std::string hex_string(const std::array<uint8_t, 32>& h);

// Little-endian binary helpers shared by the blob and checkpoint writers.
namespace bin {
void put_u8(std::string& out, uint8_t v);
void put_u32(std::string& out, uint32_t v);
void put_u64(std::string& out, uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
void put_str(std::string& out, const std::string& s);  // u32 length + bytes

// Cursor over an in-memory blob; throws Error on truncation.
struct Reader {
  const std::string& buf;
  size_t pos = 0;
  std::string context;  // used in error messages

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  std::string str();
  void expect_magic(const char magic[4]);
  bool done() const { return pos == buf.size(); }

 private:
  void need(size_t n);
};
}  // namespace bin

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace llevc
