#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace hsrecon::fft {

namespace {

std::mutex g_plan_mutex;
std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> g_plans;

fftw_plan plan_for(std::size_t h, std::size_t w, int sign, fftw_complex* buf) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_tuple(h, w, sign);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second;
  // FFTW_UNALIGNED so the cached plan applies to any caller buffer;
  // FFTW_ESTIMATE keeps planning deterministic and leaves `buf` untouched.
  fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, sign,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  g_plans.emplace(key, p);
  return p;
}

}  // namespace

void fft2(std::complex<double>* buf, std::size_t h, std::size_t w) {
  auto* b = reinterpret_cast<fftw_complex*>(buf);
  fftw_execute_dft(plan_for(h, w, FFTW_FORWARD, b), b, b);
}

void ifft2(std::complex<double>* buf, std::size_t h, std::size_t w) {
  auto* b = reinterpret_cast<fftw_complex*>(buf);
  fftw_execute_dft(plan_for(h, w, FFTW_BACKWARD, b), b, b);
  const double scale = 1.0 / static_cast<double>(h * w);
  for (std::size_t i = 0; i < h * w; ++i) buf[i] *= scale;
}

}  // namespace hsrecon::fft
