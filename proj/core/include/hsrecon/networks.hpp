#pragma once

// The three trainable architectures: pixelwise matching networks
// (2 linear layers, ReLU then tanh), convolutional inverse networks
// (two [upsample x2, conv, batchnorm, ReLU] blocks then conv, batchnorm,
// tanh), and the MISR spectral refinement network (same shape as a matching
// network over per-pixel spectra).

#include <cstdint>
#include <string>
#include <vector>

#include "hsrecon/scattering.hpp"
#include "hsrecon/tensor.hpp"

namespace hsrecon {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct Conv2dLayer {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
};

struct BatchNorm2dLayer {
  Tensor gamma, beta;  // [channels]
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct MatchingNet {
  int d_in = 0, d_hidden = 0, d_out = 0;
  Linear l1, l2;
};

struct InverseNet {
  int c_in = 0, c1 = 0, c2 = 0, c_out = 0, kernel = 3;
  int train_h = 0, train_w = 0;  // input map size seen in training (0 = unset)
  Conv2dLayer conv1, conv2, head;
  BatchNorm2dLayer bn1, bn2, bn_head;
};

struct MisrNet {
  int bands = 0, d_hidden = 0;
  MatchingNet core;
};

/// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
/// batchnorm gamma 1 / beta 0, running stats (0, 1). Deterministic per seed.
MatchingNet make_matching_net(int d_in, int d_hidden, int d_out, std::uint64_t seed);
InverseNet make_inverse_net(int c_in, int c1, int c2, int c_out, int kernel, std::uint64_t seed);
MisrNet make_misr_net(int bands, int d_hidden, std::uint64_t seed);

/// Trainable tensors in declaration order.
std::vector<Tensor*> parameters(MatchingNet& net);
std::vector<Tensor*> parameters(InverseNet& net);
std::vector<Tensor*> parameters(MisrNet& net);

/// tanh(l2(relu(l1(rows)))) applied row-wise; rows is [n, d_in].
Tensor matching_apply(const MatchingNet& net, const Tensor& rows);

/// Pixelwise application to coefficient maps: each reduced-resolution pixel's
/// d_in-vector maps to a d_out-vector, reassembled as maps whose feature
/// blocks are interpreted as `out_channels` channels of the same path list.
ScatteringCoeffs matching_forward(const MatchingNet& net, const ScatteringCoeffs& coeffs,
                                  std::size_t out_channels);

/// [n, c_in, h, w] -> [n, c_out, 4h, 4w]; training toggles batchnorm mode.
Tensor inverse_apply(InverseNet& net, const Tensor& x, bool training);

/// Eval-mode inversion of one coefficient stack (channel-major feature maps)
/// into a band stack of c_out planes at 4x the map resolution.
std::vector<double> inverse_forward(InverseNet& net, const ScatteringCoeffs& coeffs);

/// Row-wise spectral refinement; spectra is [n, bands], n may be zero.
Tensor misr_apply(const MisrNet& net, const Tensor& spectra);
std::vector<double> misr_forward(const MisrNet& net, const std::vector<double>& spectra,
                                 std::size_t rows);

// Checkpoint container: one line of JSON (architecture, seed, epoch,
// parameter count) terminated by '\n', then the parameters followed by the
// batchnorm running buffers as raw little-endian float64 in declaration
// order.
struct CheckpointMeta {
  std::string kind;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const MatchingNet& net, const std::string& path, std::uint64_t seed,
                     int epoch);
void save_checkpoint(const InverseNet& net, const std::string& path, std::uint64_t seed,
                     int epoch);
void save_checkpoint(const MisrNet& net, const std::string& path, std::uint64_t seed, int epoch);

MatchingNet load_matching_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
InverseNet load_inverse_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
MisrNet load_misr_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace hsrecon
