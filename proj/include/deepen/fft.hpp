#pragma once

#include "deepen/complex_image.hpp"

namespace deepen {

// Unitary 2D DFT with the zero frequency at the array center:
// fftshift(DFT(ifftshift(img))) / sqrt(H*W).
ComplexImage fft2_centered(const ComplexImage& img);

// Inverse of fft2_centered (also its adjoint).
ComplexImage ifft2_centered(const ComplexImage& kspace);

}  // namespace deepen
