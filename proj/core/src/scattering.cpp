#include "hsrecon/scattering.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "fft.hpp"

namespace hsrecon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Periodized Fourier samples of a Gaussian envelope centered at frequency
// xi*(cos theta, sin theta), with width sigma along the center direction and
// sigma/slant across it. No spatial offset, so the samples are real.
std::vector<double> gaussian_hat(std::size_t h, std::size_t w, double sigma, double slant,
                                 double xi, double theta) {
  std::vector<double> out(h * w);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double var_par = sigma * sigma;
  const double var_perp = sigma * sigma / (slant * slant);
  for (std::size_t ky = 0; ky < h; ++ky) {
    const double fy = kTwoPi *
        (static_cast<double>(ky) - (ky > h / 2 ? static_cast<double>(h) : 0.0)) /
        static_cast<double>(h);
    for (std::size_t kx = 0; kx < w; ++kx) {
      const double fx = kTwoPi *
          (static_cast<double>(kx) - (kx > w / 2 ? static_cast<double>(w) : 0.0)) /
          static_cast<double>(w);
      double acc = 0.0;
      for (int ay = -3; ay <= 3; ++ay) {
        for (int ax = -3; ax <= 3; ++ax) {
          const double ox = fx + kTwoPi * ax;
          const double oy = fy + kTwoPi * ay;
          const double par = ox * ct + oy * st - xi;
          const double perp = -ox * st + oy * ct;
          acc += std::exp(-0.5 * (var_par * par * par + var_perp * perp * perp));
        }
      }
      out[ky * w + kx] = acc;
    }
  }
  return out;
}

std::size_t neg_index(std::size_t ky, std::size_t kx, std::size_t h, std::size_t w) {
  const std::size_t ny = ky == 0 ? 0 : h - ky;
  const std::size_t nx = kx == 0 ? 0 : w - kx;
  return ny * w + nx;
}

std::vector<double> littlewood_paley_grid(const FilterBank& bank) {
  std::vector<double> lp(bank.h * bank.w, 0.0);
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = bank.phi_hat[i] * bank.phi_hat[i];
  for (const auto& psi : bank.psi_hat) {
    for (std::size_t ky = 0; ky < bank.h; ++ky)
      for (std::size_t kx = 0; kx < bank.w; ++kx) {
        const std::size_t i = ky * bank.w + kx;
        const double a = psi[i];
        const double b = psi[neg_index(ky, kx, bank.h, bank.w)];
        lp[i] += 0.5 * (a * a + b * b);
      }
  }
  return lp;
}

}  // namespace

FilterBank build_filter_bank(int J, int L, std::size_t h, std::size_t w,
                             const MorletParams& params) {
  if (J < 1 || L < 1) throw ShapeError("filter bank requires J >= 1 and L >= 1");
  const std::size_t sub = std::size_t{1} << J;
  if (h == 0 || w == 0 || h % sub != 0 || w % sub != 0)
    throw ShapeError("grid " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by 2^J = " + std::to_string(sub));

  FilterBank bank;
  bank.J = J;
  bank.L = L;
  bank.h = h;
  bank.w = w;
  bank.morlet = params;
  bank.psi_hat.reserve(static_cast<std::size_t>(J) * L);

  const double slant = params.slant_numerator / static_cast<double>(L);
  for (int j = 0; j < J; ++j) {
    const double sigma = params.sigma0 * std::pow(2.0, j);
    const double xi = params.xi0 / std::pow(2.0, j);
    for (int q = 0; q < L; ++q) {
      const double theta = static_cast<double>(q) * std::numbers::pi / static_cast<double>(L);
      auto carrier = gaussian_hat(h, w, sigma, slant, xi, theta);
      auto envelope = gaussian_hat(h, w, sigma, slant, 0.0, theta);
      // Gaussian correction: subtract so the zero-frequency coefficient
      // vanishes exactly (zero-mean wavelet).
      const double kappa = carrier[0] / envelope[0];
      for (std::size_t i = 0; i < carrier.size(); ++i) carrier[i] -= kappa * envelope[i];
      bank.psi_hat.push_back(std::move(carrier));
    }
  }
  bank.phi_hat = gaussian_hat(h, w, params.sigma0 * std::pow(2.0, J), 1.0, 0.0, 0.0);

  // Rescale the whole bank so the Littlewood-Paley maximum is exactly 1,
  // which bounds the transform's Lipschitz constant by 1.
  const auto lp = littlewood_paley_grid(bank);
  const double lp_max = *std::max_element(lp.begin(), lp.end());
  const double scale = 1.0 / std::sqrt(lp_max);
  for (auto& psi : bank.psi_hat)
    for (double& v : psi) v *= scale;
  for (double& v : bank.phi_hat) v *= scale;
  return bank;
}

FrameBounds littlewood_paley(const FilterBank& bank) {
  const auto lp = littlewood_paley_grid(bank);
  auto [mn, mx] = std::minmax_element(lp.begin(), lp.end());
  return {*mn, *mx};
}

std::vector<ScatteringPath> scattering_paths(int J, int L) {
  std::vector<ScatteringPath> paths;
  paths.push_back({0, -1, -1, -1, -1});
  for (int j = 0; j < J; ++j)
    for (int q = 0; q < L; ++q) paths.push_back({1, j, q, -1, -1});
  for (int j = 0; j < J; ++j)
    for (int q = 0; q < L; ++q)
      for (int j2 = j + 1; j2 < J; ++j2)
        for (int q2 = 0; q2 < L; ++q2) paths.push_back({2, j, q, j2, q2});
  return paths;
}

std::size_t path_count(int J, int L) {
  const std::size_t jl = static_cast<std::size_t>(J) * L;
  return 1 + jl + static_cast<std::size_t>(L) * L * (static_cast<std::size_t>(J) * (J - 1) / 2);
}

namespace {

using Cplx = std::complex<double>;

void decimate_real(const std::vector<Cplx>& field, std::size_t w, std::size_t sub,
                   std::span<double> out, std::size_t map_h, std::size_t map_w) {
  for (std::size_t y = 0; y < map_h; ++y)
    for (std::size_t x = 0; x < map_w; ++x)
      out[y * map_w + x] = field[(y * sub) * w + (x * sub)].real();
}

// ifft(a_hat .* filter_hat) into `field`.
void bandpass(const std::vector<Cplx>& a_hat, const std::vector<double>& filter_hat,
              std::vector<Cplx>& field, std::size_t h, std::size_t w) {
  for (std::size_t i = 0; i < a_hat.size(); ++i) field[i] = a_hat[i] * filter_hat[i];
  fft::ifft2(field.data(), h, w);
}

void scatter_into(std::span<const double> image, const FilterBank& bank,
                  const std::vector<ScatteringPath>& paths, double* dst, std::size_t map_h,
                  std::size_t map_w) {
  const std::size_t h = bank.h, w = bank.w, hw = h * w;
  const std::size_t sub = std::size_t{1} << bank.J;
  const std::size_t map_size = map_h * map_w;

  std::vector<Cplx> x_hat(hw);
  for (std::size_t i = 0; i < hw; ++i) x_hat[i] = image[i];
  fft::fft2(x_hat.data(), h, w);

  std::vector<Cplx> field(hw), u_hat(hw);
  auto out = [&](std::size_t path_idx) {
    return std::span<double>(dst + path_idx * map_size, map_size);
  };

  // order 0: x * phi
  bandpass(x_hat, bank.phi_hat, field, h, w);
  decimate_real(field, w, sub, out(0), map_h, map_w);

  std::size_t idx2 = 1 + static_cast<std::size_t>(bank.J) * bank.L;
  for (int j = 0; j < bank.J; ++j) {
    for (int q = 0; q < bank.L; ++q) {
      // |x * psi_{j,q}| at full resolution
      bandpass(x_hat, bank.psi(j, q), field, h, w);
      for (std::size_t i = 0; i < hw; ++i) u_hat[i] = std::abs(field[i]);
      fft::fft2(u_hat.data(), h, w);

      const std::size_t idx1 = 1 + static_cast<std::size_t>(j) * bank.L + q;
      bandpass(u_hat, bank.phi_hat, field, h, w);
      decimate_real(field, w, sub, out(idx1), map_h, map_w);

      for (int j2 = j + 1; j2 < bank.J; ++j2) {
        for (int q2 = 0; q2 < bank.L; ++q2) {
          bandpass(u_hat, bank.psi(j2, q2), field, h, w);
          std::vector<Cplx> u2_hat(hw);
          for (std::size_t i = 0; i < hw; ++i) u2_hat[i] = std::abs(field[i]);
          fft::fft2(u2_hat.data(), h, w);
          bandpass(u2_hat, bank.phi_hat, field, h, w);
          assert(paths[idx2].order == 2 && paths[idx2].j == j && paths[idx2].q == q &&
                 paths[idx2].j2 == j2 && paths[idx2].q2 == q2);
          decimate_real(field, w, sub, out(idx2), map_h, map_w);
          ++idx2;
        }
      }
    }
  }
}

}  // namespace

ScatteringCoeffs scatter2d(std::span<const double> image, const FilterBank& bank) {
  return scatter_multichannel(image, 1, bank);
}

ScatteringCoeffs scatter_multichannel(std::span<const double> stack, std::size_t channels,
                                      const FilterBank& bank) {
  const std::size_t hw = bank.h * bank.w;
  if (channels == 0 || stack.size() != channels * hw)
    throw ShapeError("scatter: stack of " + std::to_string(stack.size()) +
                     " values does not match " + std::to_string(channels) + " x " +
                     std::to_string(bank.h) + "x" + std::to_string(bank.w) + " bank grid");

  ScatteringCoeffs coeffs;
  coeffs.J = bank.J;
  coeffs.L = bank.L;
  coeffs.map_h = bank.h >> bank.J;
  coeffs.map_w = bank.w >> bank.J;
  coeffs.source_channels = channels;
  coeffs.paths = scattering_paths(bank.J, bank.L);
  coeffs.maps.assign(coeffs.total_maps() * coeffs.map_size(), 0.0);

  const std::size_t block = coeffs.maps_per_channel() * coeffs.map_size();
  parallel_for(channels, [&](std::size_t c) {
    scatter_into(stack.subspan(c * hw, hw), bank, coeffs.paths, coeffs.maps.data() + c * block,
                 coeffs.map_h, coeffs.map_w);
  });
  return coeffs;
}

std::vector<double> filter_spatial_magnitude(const FilterBank& bank,
                                             const std::vector<double>& filter_hat) {
  std::vector<std::complex<double>> buf(filter_hat.begin(), filter_hat.end());
  fft::ifft2(buf.data(), bank.h, bank.w);
  std::vector<double> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = std::abs(buf[i]);
  return out;
}

}  // namespace hsrecon
