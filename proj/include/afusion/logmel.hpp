#pragma once

#include <vector>

#include "afusion/tensor.hpp"

namespace afusion {

// Log-mel frontend, hop-locked to the video frame rate: 25 ms periodic Hann
// analysis windows every round(rate/fps) samples, magnitude FFT (512 bins),
// 64 triangular mel bands over 125-7500 Hz, log(mel + 1e-6). One row per
// frame tick; audio shorter than one window is zero-padded to a single row.
Tensor<float> extract_logmel(const std::vector<float>& samples, int sample_rate,
                             double fps);

double hz_to_mel(double hz);

// [n_mel x (n_fft/2 + 1)] triangular weights, triangles placed in mel space.
Tensor<double> mel_filterbank(int n_mel, int n_fft, int sample_rate, double fmin,
                              double fmax);

}  // namespace afusion
