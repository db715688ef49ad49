#pragma once

// Synthetic paired MSI/HSI scene generator for desk-scale end-to-end runs.
//
// A dataset seed fixes a small spectral family: three smooth "skin" basis
// spectra and two background bases, each a baseline plus a handful of
// Gaussian bumps in wavelength. Every scene places an elliptical skin region
// whose per-pixel spectra are convex mixtures of the skin bases (weights
// varying smoothly across the image) over a background mixed from the
// background bases, plus low-amplitude per-pixel noise. Scenes are
// deterministic in (seed, scene index).

#include <cstdint>
#include <vector>

#include "hsrecon/config.hpp"
#include "hsrecon/cube.hpp"

namespace hsrecon {

struct SyntheticScene {
  Cube hsi;   // 61-band ground truth
  Cube msi;   // 4-band spectral-response projection of hsi
  Mask mask;  // skin ellipse
  std::uint64_t scene_seed = 0;
};

struct SyntheticParams {
  double noise_amp = 0.01;
  int skin_bases = 3;
  int background_bases = 2;
};

/// Linear projection of a 61-band cube through the spectral responses.
Cube msi_from_cube(const Cube& hsi, const SrfConfig& srf = {});

/// Response weights: kMsiChannels rows of kHsiBands, each row summing to 1.
std::vector<double> srf_weights(const SrfConfig& srf);

/// `offset` shifts the scene index so several calls with one seed produce
/// disjoint scenes from the same spectral family (e.g. train/test splits).
/// `size` must be divisible by 4.
std::vector<SyntheticScene> gen_synthetic(int count, int size, std::uint64_t seed,
                                          int offset = 0, const SyntheticParams& params = {},
                                          const SrfConfig& srf = {});

}  // namespace hsrecon
