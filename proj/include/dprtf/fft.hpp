// dprtf/fft.hpp

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

#ifndef DPRTF_FFT_HPP_
#define DPRTF_FFT_HPP_

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace dprtf {

// Forward DFT of length data.size().  Any length is accepted; powers of two
// are fastest.  Uses an internal per-thread FFTW plan cache.
void Fft(std::vector<std::complex<double>>& data);

// Inverse DFT, scaled by 1/n so that Ifft(Fft(x)) == x.
void Ifft(std::vector<std::complex<double>>& data);

// Linear convolution of two real signals via zero-padded FFT.
// Output length is a.size() + b.size() - 1.
Eigen::VectorXd FftConvolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Smallest power of two >= n.
size_t NextPowerOfTwo(size_t n);

}  // namespace dprtf

#endif  // DPRTF_FFT_HPP_
