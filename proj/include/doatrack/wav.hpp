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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace doatrack {

struct WavData {
  std::uint32_t fs = 16000;
  std::vector<std::vector<float>> channels;  // deinterleaved, [-1, 1] scale

  std::size_t num_frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

// Reads RIFF/WAVE files with 16-bit PCM or 32-bit IEEE float samples
// (WAVE_FORMAT_EXTENSIBLE is accepted for both). Throws FormatError.
WavData read_wav(const std::string& path);

// Writes 32-bit IEEE float samples.
void write_wav_float(const std::string& path, const WavData& wav);

}  // namespace doatrack
