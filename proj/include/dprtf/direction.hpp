// dprtf/direction.hpp

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

#ifndef DPRTF_DIRECTION_HPP_
#define DPRTF_DIRECTION_HPP_

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace dprtf {

// Source direction relative to the array center: azimuth counterclockwise
// from the +x axis in the horizontal plane, elevation upward from it.
struct Direction {
  double az_deg = 0.0;
  double el_deg = 0.0;
};

inline double DegToRad(double deg) { return deg * M_PI / 180.0; }
inline double RadToDeg(double rad) { return rad * 180.0 / M_PI; }

inline Eigen::Vector3d DirectionToUnit(const Direction& d) {
  const double az = DegToRad(d.az_deg);
  const double el = DegToRad(d.el_deg);
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

// Uniform grid of directions, row-major over azimuth then elevation.
inline std::vector<Direction> MakeDirectionGrid(double az_lo, double az_hi, int n_az,
                                                double el_lo, double el_hi, int n_el) {
  std::vector<Direction> grid;
  grid.reserve(static_cast<size_t>(n_az) * n_el);
  for (int i = 0; i < n_az; ++i) {
    const double az = n_az > 1 ? az_lo + (az_hi - az_lo) * i / (n_az - 1)
                               : 0.5 * (az_lo + az_hi);
    for (int j = 0; j < n_el; ++j) {
      const double el = n_el > 1 ? el_lo + (el_hi - el_lo) * j / (n_el - 1)
                                 : 0.5 * (el_lo + el_hi);
      grid.push_back({az, el});
    }
  }
  return grid;
}

}  // namespace dprtf

#endif  // DPRTF_DIRECTION_HPP_
