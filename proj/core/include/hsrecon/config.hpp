#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hsrecon/scattering.hpp"

namespace hsrecon {

/// Gaussian spectral response functions projecting a 61-band spectrum onto
/// the four capture channels (R, G, B, NIR). Each response is normalized to
/// unit sum over the 61-band grid.
struct SrfConfig {
  std::array<double, 4> centers_nm{620.0, 540.0, 460.0, 850.0};
  double sigma_nm = 40.0;
};

inline constexpr int kMsiChannels = 4;

/// Everything tunable about the reconstruction pipeline. Defaults follow the
/// training recipe: J=2, L=4, Adam lr 0.001, matching 100 epochs (L2),
/// inverse 150 epochs (L1), MISR 30 or 60 epochs (L2).
struct PipelineConfig {
  int J = 2;
  int L = 4;
  MorletParams morlet;

  int matching_hidden = 128;
  int misr_hidden = 256;
  int inverse_c1 = 16;
  int inverse_c2 = 16;
  int conv_kernel = 3;

  double lr = 1e-3;
  int batch_size = 4;
  int matching_epochs = 100;
  int inverse_epochs = 150;
  int misr_epochs = 30;  // Model 2; 60 selects Model 3

  SrfConfig srf;

  std::uint64_t seed = 0;

  std::size_t sub_factor() const { return std::size_t{1} << J; }
};

PipelineConfig default_config();

/// JSON round-trip for --config files; unknown keys are rejected.
PipelineConfig config_from_json_file(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace hsrecon
