// fft.cc

// Copyright 2026  dprtf authors

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

#include "dprtf/fft.hpp"

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace dprtf {

namespace {

// FFTW plans are bound to the buffers they were created with, so each cached
// plan owns a scratch buffer and execution copies through it.  The planner
// itself is not thread-safe; creation is serialized with a global mutex.
struct PlanEntry {
  fftw_plan plan = nullptr;
  fftw_complex* buf = nullptr;
  size_t n = 0;

  ~PlanEntry() {
    if (plan != nullptr) fftw_destroy_plan(plan);
    if (buf != nullptr) fftw_free(buf);
  }
};

std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

PlanEntry& GetPlan(size_t n, int sign) {
  thread_local std::map<std::pair<size_t, int>, PlanEntry> cache;
  PlanEntry& entry = cache[{n, sign}];
  if (entry.plan == nullptr) {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    entry.buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (entry.buf == nullptr) throw std::bad_alloc();
    entry.plan = fftw_plan_dft_1d(static_cast<int>(n), entry.buf, entry.buf,
                                  sign, FFTW_ESTIMATE);
    if (entry.plan == nullptr) throw std::runtime_error("fftw plan creation failed");
    entry.n = n;
  }
  return entry;
}

void Transform(std::vector<std::complex<double>>& data, int sign) {
  const size_t n = data.size();
  if (n == 0) throw std::invalid_argument("fft: empty input");
  if (n == 1) return;
  PlanEntry& entry = GetPlan(n, sign);
  // std::complex<double> is layout-compatible with fftw_complex.
  auto* raw = reinterpret_cast<fftw_complex*>(data.data());
  std::memcpy(entry.buf, raw, sizeof(fftw_complex) * n);
  fftw_execute(entry.plan);
  std::memcpy(raw, entry.buf, sizeof(fftw_complex) * n);
}

}  // namespace

void Fft(std::vector<std::complex<double>>& data) {
  Transform(data, FFTW_FORWARD);
}

void Ifft(std::vector<std::complex<double>>& data) {
  Transform(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

size_t NextPowerOfTwo(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

Eigen::VectorXd FftConvolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) {
    throw std::invalid_argument("FftConvolve: empty input");
  }
  const size_t out_len = static_cast<size_t>(a.size() + b.size() - 1);
  const size_t n = NextPowerOfTwo(out_len);
  std::vector<std::complex<double>> fa(n), fb(n);
  for (Eigen::Index i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (Eigen::Index i = 0; i < b.size(); ++i) fb[i] = b[i];
  Fft(fa);
  Fft(fb);
  for (size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  Ifft(fa);
  Eigen::VectorXd out(out_len);
  for (size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

}  // namespace dprtf
