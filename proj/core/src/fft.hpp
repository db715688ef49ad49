#pragma once

// Thin FFTW wrapper: cached ESTIMATE-mode plans keyed by size and direction.
// Plan creation is serialized (FFTW requirement); execution is thread-safe.

#include <complex>
#include <cstddef>

namespace hsrecon::fft {

/// In-place 2-D complex DFT of an h*w row-major buffer. The inverse
/// transform is normalized by 1/(h*w).
void fft2(std::complex<double>* buf, std::size_t h, std::size_t w);
void ifft2(std::complex<double>* buf, std::size_t h, std::size_t w);

}  // namespace hsrecon::fft
