#pragma once

// Two-layer windowed scattering transform on periodic 2-D grids.
//
// The filter bank holds Morlet bandpass filters psi[j][q] (scale 2^j,
// orientation q*pi/L) and one Gaussian low-pass phi at scale 2^J, all
// sampled directly in the Fourier domain with alias periodization. The bank
// is rescaled so its Littlewood-Paley sum stays within (0, 1], which makes
// the transform non-expansive.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "hsrecon/common.hpp"

namespace hsrecon {

struct MorletParams {
  double sigma0 = 0.8;           // Gaussian width at scale j = 0
  double xi0 = 2.356194490192345;  // center frequency 3*pi/4 at scale j = 0
  double slant_numerator = 4.0;  // envelope slant = slant_numerator / L
};

struct FilterBank {
  int J = 0;
  int L = 0;
  std::size_t h = 0, w = 0;
  MorletParams morlet;
  // Fourier-domain samples, real-valued by construction (no spatial offset).
  // psi_hat[j * L + q] and phi_hat are h*w row-major grids.
  std::vector<std::vector<double>> psi_hat;
  std::vector<double> phi_hat;

  const std::vector<double>& psi(int j, int q) const { return psi_hat[j * L + q]; }
  /// Low-pass response at frequency zero (order-0 gain for constant images).
  double dc_gain() const { return phi_hat[0]; }
};

/// Builds the normalized bank. Grid sides must be divisible by 2^J.
FilterBank build_filter_bank(int J, int L, std::size_t h, std::size_t w,
                             const MorletParams& params = {});

struct FrameBounds {
  double min = 0.0;
  double max = 0.0;
};

/// Littlewood-Paley sum |phi(w)|^2 + sum (|psi(w)|^2 + |psi(-w)|^2)/2,
/// minimized/maximized over the frequency grid.
FrameBounds littlewood_paley(const FilterBank& bank);

struct ScatteringPath {
  int order = 0;       // 0, 1 or 2
  int j = -1, q = -1;  // first layer (orders 1 and 2)
  int j2 = -1, q2 = -1;  // second layer (order 2 only, j < j2)
};

/// Paths in canonical order: the order-0 path, order-1 paths in (j,q)
/// lexicographic order, then order-2 paths in (j,q,j2,q2) order.
std::vector<ScatteringPath> scattering_paths(int J, int L);

/// 1 + J*L + L^2 * J*(J-1)/2.
std::size_t path_count(int J, int L);

/// Coefficient maps at reduced resolution (h/2^J x w/2^J). Maps are stored
/// channel-major: all paths of input channel 0 first.
struct ScatteringCoeffs {
  int J = 0, L = 0;
  std::size_t map_h = 0, map_w = 0;
  std::size_t source_channels = 0;
  std::vector<ScatteringPath> paths;  // per-channel path list
  std::vector<double> maps;           // [channel][path][y][x]

  std::size_t maps_per_channel() const { return paths.size(); }
  std::size_t total_maps() const { return paths.size() * source_channels; }
  std::size_t map_size() const { return map_h * map_w; }
  std::span<double> map(std::size_t channel, std::size_t path) {
    return {maps.data() + (channel * paths.size() + path) * map_size(), map_size()};
  }
  std::span<const double> map(std::size_t channel, std::size_t path) const {
    return {maps.data() + (channel * paths.size() + path) * map_size(), map_size()};
  }
};

/// Scattering coefficients of one channel. The image must match the bank grid.
ScatteringCoeffs scatter2d(std::span<const double> image, const FilterBank& bank);

/// Per-channel transforms concatenated channel-major. `stack` holds
/// channels * h * w values, channel-major.
ScatteringCoeffs scatter_multichannel(std::span<const double> stack, std::size_t channels,
                                      const FilterBank& bank);

/// Spatial-domain filter samples |ifft(filter_hat)| for inspection.
std::vector<double> filter_spatial_magnitude(const FilterBank& bank,
                                             const std::vector<double>& filter_hat);

}  // namespace hsrecon
