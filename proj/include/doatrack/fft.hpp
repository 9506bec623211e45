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

#include <complex>
#include <cstddef>
#include <span>

namespace doatrack {

// Real-input FFT of fixed length backed by FFTW. Plans are built with
// FFTW_ESTIMATE so results do not depend on planner timing.
// A RealFft object is not safe for concurrent use; create one per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& other) noexcept;
  RealFft& operator=(RealFft&&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in: n samples (shorter inputs are zero-padded). out: n/2+1 bins.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalized inverse: out = n * x for a forward/inverse round trip.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* complex_ = nullptr;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

std::size_t next_pow2(std::size_t n);

}  // namespace doatrack
