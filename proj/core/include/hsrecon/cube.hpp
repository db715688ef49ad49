#pragma once

// Spectral cube container and its on-disk format.
//
// File layout ("HSC1" container):
//   bytes 0..3   magic "HSC1"
//   bytes 4..7   header length, little-endian uint32
//   header       UTF-8 JSON, fixed key order: h, w, bands, wavelengths,
//                range, meta
//   payload      h*w*bands little-endian float32, band-major then row-major
//
// Values are stored as float32 and computed on as float64; writing truncates.
// Files are byte-identical across platforms for the same cube.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsrecon/common.hpp"

namespace hsrecon {

struct Cube {
  int h = 0, w = 0, bands = 0;
  std::vector<double> wavelengths;  // nm, one per band
  double range_lo = 0.0, range_hi = 1.0;
  std::vector<double> values;  // [band][y][x]

  static Cube make(int h, int w, int bands, std::vector<double> wavelengths,
                   double range_lo = 0.0, double range_hi = 1.0);

  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  std::span<double> band(int b) { return {values.data() + b * plane_size(), plane_size()}; }
  std::span<const double> band(int b) const {
    return {values.data() + b * plane_size(), plane_size()};
  }
  double& at(int b, int y, int x) { return values[(static_cast<std::size_t>(b) * h + y) * w + x]; }
  double at(int b, int y, int x) const {
    return values[(static_cast<std::size_t>(b) * h + y) * w + x];
  }
  /// Spectrum of one pixel gathered across bands.
  std::vector<double> spectrum(int y, int x) const;
};

inline constexpr int kHsiBands = 61;       // 400..1000 nm
inline constexpr double kHsiStartNm = 400.0;
inline constexpr double kHsiStepNm = 10.0;

std::vector<double> hsi_wavelengths();

/// True when the cube has the 61-band 400..1000 nm layout.
bool is_hsi_layout(const Cube& cube);
/// Throws DataError unless is_hsi_layout holds.
void require_hsi_layout(const Cube& cube, const std::string& what);

/// Reads a cube, clamping values into the header range. Non-finite payload
/// values, a bad magic, a truncated payload and a header/payload size
/// disagreement each raise a distinct DataError.
Cube read_cube(const std::string& path);
void write_cube(const Cube& cube, const std::string& path);

struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> on;  // row-major booleans

  std::size_t count() const;
  bool at(int y, int x) const { return on[static_cast<std::size_t>(y) * w + x] != 0; }
};

/// Masks travel as 1-band cubes of {0.0, 1.0}.
Mask mask_from_cube(const Cube& cube);
Cube cube_from_mask(const Mask& mask);
Mask read_mask(const std::string& path);
void write_mask(const Mask& mask, const std::string& path);

}  // namespace hsrecon
