#include "hsrecon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hsrecon {

std::vector<double> srf_weights(const SrfConfig& srf) {
  const auto wl = hsi_wavelengths();
  std::vector<double> weights(static_cast<std::size_t>(kMsiChannels) * kHsiBands);
  for (int c = 0; c < kMsiChannels; ++c) {
    double sum = 0.0;
    for (int b = 0; b < kHsiBands; ++b) {
      const double d = (wl[b] - srf.centers_nm[c]) / srf.sigma_nm;
      const double v = std::exp(-0.5 * d * d);
      weights[c * kHsiBands + b] = v;
      sum += v;
    }
    for (int b = 0; b < kHsiBands; ++b) weights[c * kHsiBands + b] /= sum;
  }
  return weights;
}

Cube msi_from_cube(const Cube& hsi, const SrfConfig& srf) {
  require_hsi_layout(hsi, "msi_from_cube");
  const auto weights = srf_weights(srf);
  Cube msi = Cube::make(hsi.h, hsi.w, kMsiChannels,
                        {srf.centers_nm[0], srf.centers_nm[1], srf.centers_nm[2],
                         srf.centers_nm[3]});
  const std::size_t plane = hsi.plane_size();
  for (int c = 0; c < kMsiChannels; ++c) {
    double* out = msi.values.data() + c * plane;
    for (int b = 0; b < kHsiBands; ++b) {
      const double wgt = weights[c * kHsiBands + b];
      const double* src = hsi.values.data() + static_cast<std::size_t>(b) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[i] += wgt * src[i];
    }
  }
  return msi;
}

namespace {

// Baseline plus up to five Gaussian bumps in wavelength, rescaled into
// [lo, hi] so reflectance stays away from the tanh saturation ends.
std::vector<double> smooth_basis(Rng& rng, double lo, double hi) {
  const auto wl = hsi_wavelengths();
  std::vector<double> raw(kHsiBands, rng.next_uniform(0.2, 0.5));
  const int bumps = 3 + static_cast<int>(rng.next_below(3));  // 3..5
  for (int g = 0; g < bumps; ++g) {
    const double amp = rng.next_uniform(-0.25, 0.35);
    const double mu = rng.next_uniform(410.0, 990.0);
    const double sig = rng.next_uniform(25.0, 90.0);
    for (int b = 0; b < kHsiBands; ++b) {
      const double d = (wl[b] - mu) / sig;
      raw[b] += amp * std::exp(-0.5 * d * d);
    }
  }
  auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
  const double span = *mx - *mn;
  std::vector<double> out(kHsiBands);
  for (int b = 0; b < kHsiBands; ++b)
    out[b] = span > 1e-12 ? lo + (raw[b] - *mn) / span * (hi - lo) : 0.5 * (lo + hi);
  return out;
}

struct SmoothField {
  double fx, fy, phase;
  double operator()(double px, double py) const {
    return 1.05 + std::sin(2.0 * std::numbers::pi * (fx * px + fy * py) + phase);
  }
};

SmoothField make_field(Rng& rng) {
  return {rng.next_uniform(0.5, 2.0), rng.next_uniform(0.5, 2.0),
          rng.next_uniform(0.0, 2.0 * std::numbers::pi)};
}

}  // namespace

std::vector<SyntheticScene> gen_synthetic(int count, int size, std::uint64_t seed, int offset,
                                          const SyntheticParams& params, const SrfConfig& srf) {
  if (count < 0) throw DataError("gen_synthetic: negative count");
  if (size <= 0 || size % 4 != 0)
    throw DataError("gen_synthetic: size must be positive and divisible by 4, got " +
                    std::to_string(size));

  // The spectral family depends on the seed only, so splits generated with
  // different offsets share it.
  Rng family_rng(Rng::derive(seed, 0xFFFFFFFFULL));
  std::vector<std::vector<double>> skin(params.skin_bases), background(params.background_bases);
  for (auto& b : skin) b = smooth_basis(family_rng, 0.10, 0.88);
  for (auto& b : background) b = smooth_basis(family_rng, 0.08, 0.55);

  std::vector<SyntheticScene> scenes(static_cast<std::size_t>(count));
  parallel_for(scenes.size(), [&](std::size_t idx) {
    SyntheticScene& scene = scenes[idx];
    scene.scene_seed = Rng::derive(seed, static_cast<std::uint64_t>(offset) + idx);
    Rng rng(scene.scene_seed);

    const double cx = rng.next_uniform(0.45, 0.55);
    const double cy = rng.next_uniform(0.45, 0.55);
    const double ax = rng.next_uniform(0.28, 0.40);
    const double ay = rng.next_uniform(0.28, 0.40);
    const double angle = rng.next_uniform(0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<SmoothField> skin_fields, bg_fields;
    for (int i = 0; i < params.skin_bases; ++i) skin_fields.push_back(make_field(rng));
    for (int i = 0; i < params.background_bases; ++i) bg_fields.push_back(make_field(rng));

    Cube hsi = Cube::make(size, size, kHsiBands, hsi_wavelengths());
    Mask mask;
    mask.h = size;
    mask.w = size;
    mask.on.assign(static_cast<std::size_t>(size) * size, 0);

    std::vector<double> wts(std::max(params.skin_bases, params.background_bases));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = (x + 0.5) / size;
        const double py = (y + 0.5) / size;
        const double du = ((px - cx) * ca + (py - cy) * sa) / ax;
        const double dv = (-(px - cx) * sa + (py - cy) * ca) / ay;
        const bool inside = du * du + dv * dv <= 1.0;
        mask.on[static_cast<std::size_t>(y) * size + x] = inside ? 1 : 0;

        const auto& bases = inside ? skin : background;
        const auto& fields = inside ? skin_fields : bg_fields;
        double wsum = 0.0;
        for (std::size_t i = 0; i < bases.size(); ++i) {
          wts[i] = fields[i](px, py);
          wsum += wts[i];
        }
        for (int b = 0; b < kHsiBands; ++b) {
          double v = 0.0;
          for (std::size_t i = 0; i < bases.size(); ++i) v += wts[i] / wsum * bases[i][b];
          v += params.noise_amp * (2.0 * rng.next_unit() - 1.0);
          hsi.at(b, y, x) = std::clamp(v, 0.02, 0.98);
        }
      }
    }

    scene.hsi = std::move(hsi);
    scene.msi = msi_from_cube(scene.hsi, srf);
    scene.mask = std::move(mask);
  });
  return scenes;
}

}  // namespace hsrecon
