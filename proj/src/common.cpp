// llevc/src/common.cpp

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

#include "llevc/common.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace llevc {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(uint64_t seed) {
  uint64_t sm = seed;
  for (auto& w : s) w = splitmix64(sm);
}

Rng Rng::substream(uint64_t seed, uint64_t stream) {
  uint64_t sm = seed;
  uint64_t mixed = splitmix64(sm) ^ (0xa0761d6478bd642fULL * (stream + 1));
  return Rng(mixed);
}

static inline uint64_t rotl(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s[1] * 5, 7) * 9;
  const uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double Rng::uniform() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint32_t Rng::range(uint32_t n) {
  LLEVC_CHECK(n > 0, "Rng::range: n must be positive");
  // modulo with rejection to avoid bias
  uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return uint32_t(v % n);
}

std::array<uint8_t, 32> sha256(const void* data, size_t len) {
  std::array<uint8_t, 32> out{};
  unsigned int out_len = 0;
  int ok = EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr);
  LLEVC_CHECK(ok == 1 && out_len == 32, "sha256: EVP_Digest failed");
  return out;
}

std::array<uint8_t, 32> sha256(const std::string& s) {
  return sha256(s.data(), s.size());
}

std::string hex_string(const std::array<uint8_t, 32>& h) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (uint8_t b : h) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

namespace bin {

void put_u8(std::string& out, uint8_t v) { out.push_back(char(v)); }

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, uint32_t(s.size()));
  out.append(s);
}

void Reader::need(size_t n) {
  LLEVC_CHECK(pos + n <= buf.size(),
              "truncated blob" << (context.empty() ? "" : " (" + context + ")")
                               << ": need " << n << " bytes at offset " << pos
                               << ", have " << buf.size() - pos);
}

uint8_t Reader::u8() {
  need(1);
  return uint8_t(buf[pos++]);
}

uint32_t Reader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

uint64_t Reader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

float Reader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double Reader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string Reader::str() {
  uint32_t n = u32();
  need(n);
  std::string s = buf.substr(pos, n);
  pos += n;
  return s;
}

void Reader::expect_magic(const char magic[4]) {
  need(4);
  bool ok = std::memcmp(buf.data() + pos, magic, 4) == 0;
  LLEVC_CHECK(ok, "bad magic"
                      << (context.empty() ? "" : " (" + context + ")")
                      << ": expected \"" << std::string(magic, 4) << "\"");
  pos += 4;
}

}  // namespace bin

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  LLEVC_CHECK(in.good(), "cannot open file: " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  LLEVC_CHECK(out.good(), "cannot write file: " << path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  LLEVC_CHECK(out.good(), "short write: " << path);
}

}  // namespace llevc
