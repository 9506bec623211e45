// Copyright 2026 The doatrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "doatrack/wav.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "doatrack/error.hpp"

namespace doatrack {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kFormatError, path + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, n_channels = 0, bits = 0;
  std::uint32_t fs = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) {
      // Some writers leave a bogus size on the final data chunk.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw Error(ErrorCode::kFormatError, path + ": truncated chunk");
      }
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(ErrorCode::kFormatError, path + ": short fmt chunk");
      format = read_u16(chunk + 8);
      n_channels = read_u16(chunk + 10);
      fs = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (n_channels == 0 || data == nullptr) {
    throw Error(ErrorCode::kFormatError, path + ": missing fmt or data chunk");
  }
  const bool is_pcm16 = format == kFormatPcm && bits == 16;
  const bool is_f32 = format == kFormatFloat && bits == 32;
  if (!is_pcm16 && !is_f32) {
    throw Error(ErrorCode::kFormatError, path + ": only 16-bit PCM and 32-bit float supported");
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t n_frames = data_size / (bytes_per_sample * n_channels);
  WavData wav;
  wav.fs = fs;
  wav.channels.assign(n_channels, std::vector<float>(n_frames));
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t c = 0; c < n_channels; ++c) {
      const std::uint8_t* p = data + (t * n_channels + c) * bytes_per_sample;
      if (is_f32) {
        std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, 4);
        wav.channels[c][t] = f;
      } else {
        const auto s = static_cast<std::int16_t>(read_u16(p));
        wav.channels[c][t] = static_cast<float>(s) / 32768.0f;
      }
    }
  }
  return wav;
}

void write_wav_float(const std::string& path, const WavData& wav) {
  const auto n_channels = static_cast<std::uint16_t>(wav.channels.size());
  if (n_channels == 0) throw Error(ErrorCode::kInvalidArgument, "no channels to write");
  const std::size_t n_frames = wav.num_frames();
  for (const auto& ch : wav.channels) {
    if (ch.size() != n_frames) {
      throw Error(ErrorCode::kInvalidArgument, "channels differ in length");
    }
  }
  const std::uint32_t data_size = static_cast<std::uint32_t>(n_frames * n_channels * 4);
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_size);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + data_size);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, kFormatFloat);
  put_u16(b, n_channels);
  put_u32(b, wav.fs);
  put_u32(b, wav.fs * n_channels * 4);
  put_u16(b, static_cast<std::uint16_t>(n_channels * 4));
  put_u16(b, 32);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, data_size);
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t c = 0; c < n_channels; ++c) {
      std::uint32_t u;
      std::memcpy(&u, &wav.channels[c][t], 4);
      put_u32(b, u);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace doatrack
