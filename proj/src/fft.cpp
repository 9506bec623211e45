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

#include "doatrack/fft.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>

#include <fftw3.h>

#include "doatrack/error.hpp"

namespace doatrack {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "FFT size 0");
  std::lock_guard<std::mutex> lock(planner_mutex());
  real_ = fftw_alloc_real(n);
  auto* cplx = fftw_alloc_complex(n / 2 + 1);
  complex_ = cplx;
  fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, cplx, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real_, FFTW_ESTIMATE);
}

RealFft::RealFft(RealFft&& other) noexcept
    : n_(other.n_), real_(other.real_), complex_(other.complex_),
      fwd_(other.fwd_), inv_(other.inv_) {
  other.real_ = nullptr;
  other.complex_ = nullptr;
  other.fwd_ = nullptr;
  other.inv_ = nullptr;
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
  if (real_) fftw_free(real_);
  if (complex_) fftw_free(complex_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() > n_ || out.size() < bins()) {
    throw Error(ErrorCode::kShapeError, "RealFft::forward buffer size");
  }
  std::copy(in.begin(), in.end(), real_);
  std::fill(real_ + in.size(), real_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(fwd_));
  std::memcpy(out.data(), complex_, bins() * sizeof(std::complex<double>));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() < bins() || out.size() < n_) {
    throw Error(ErrorCode::kShapeError, "RealFft::inverse buffer size");
  }
  // c2r destroys its input, so always work on the internal copy.
  std::memcpy(complex_, in.data(), bins() * sizeof(std::complex<double>));
  fftw_execute(static_cast<fftw_plan>(inv_));
  std::copy(real_, real_ + n_, out.begin());
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace doatrack
