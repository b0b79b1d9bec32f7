// Copyright 2026 The FGDM Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fgdm/codec/ppm.h"

#include <array>
#include <cctype>

#include "fgdm/codec/codec.h"
#include "fgdm/numerics/checkpoint.h"

namespace fgdm {
namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

// Reads one whitespace-delimited header token, skipping comments.
std::string HeaderToken(const std::string& s, size_t& pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw FormatError("ppm: truncated header");
  return s.substr(start, pos - start);
}

int HeaderInt(const std::string& s, size_t& pos) {
  const std::string tok = HeaderToken(s, pos);
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FormatError("ppm: bad header field '" + tok + "'");
    }
  }
  if (tok.size() > 6) throw FormatError("ppm: header value too large");
  return std::stoi(tok);
}

}  // namespace

std::string EncodePpm(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) {
    throw std::invalid_argument("EncodePpm expects [H,W,3]");
  }
  std::string out = "P6\n" + std::to_string(rgb.dim(1)) + " " +
                    std::to_string(rgb.dim(0)) + "\n255\n";
  const size_t header = out.size();
  out.resize(header + rgb.numel());
  auto x = rgb.data();
  for (size_t i = 0; i < x.size(); ++i) out[header + i] = static_cast<char>(QuantizeUnit(x[i]));
  return out;
}

Tensor DecodePpm(const std::string& bytes) {
  size_t pos = 0;
  if (HeaderToken(bytes, pos) != "P6") throw FormatError("ppm: not a P6 image");
  const int w = HeaderInt(bytes, pos);
  const int h = HeaderInt(bytes, pos);
  const int maxval = HeaderInt(bytes, pos);
  if (w <= 0 || h <= 0) throw FormatError("ppm: empty image");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("ppm: missing separator after header");
  }
  ++pos;
  const size_t n = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - pos != n) throw FormatError("ppm: pixel data size mismatch");
  Tensor out({h, w, 3});
  auto o = out.mutable_data();
  for (size_t i = 0; i < n; ++i) {
    o[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0f;
  }
  return out;
}

std::string Base64Encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = (uint8_t(bytes[i]) << 16) | (uint8_t(bytes[i + 1]) << 8) |
                       uint8_t(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  const size_t rest = bytes.size() - i;
  if (rest > 0) {
    uint32_t v = uint8_t(bytes[i]) << 16;
    if (rest == 2) v |= uint8_t(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string Base64Decode(const std::string& text) {
  std::array<int, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) table[static_cast<uint8_t>(kAlphabet[i])] = i;
  std::string out;
  uint32_t acc = 0;
  int bits = 0;
  size_t padding = 0;
  for (char ch : text) {
    if (ch == '=') {
      ++padding;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    const int v = table[static_cast<uint8_t>(ch)];
    if (v < 0 || padding > 0) throw FormatError("base64: invalid input");
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xFF));
    }
  }
  if (padding > 2) throw FormatError("base64: invalid padding");
  return out;
}

}  // namespace fgdm
