#include "afusion/logmel.hpp"

#include <cmath>
#include <complex>

namespace afusion {

namespace {

constexpr int kMelBands = 64;
constexpr int kFftSize = 512;
constexpr double kWindowSec = 0.025;
constexpr double kMelMinHz = 125.0;
constexpr double kMelMaxHz = 7500.0;
constexpr double kLogFloor = 1e-6;

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

double hz_to_mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }

Tensor<double> mel_filterbank(int n_mel, int n_fft, int sample_rate, double fmin,
                              double fmax) {
  const int n_bins = n_fft / 2 + 1;
  Tensor<double> fb({n_mel, n_bins});
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mel) + 2);
  for (int i = 0; i < n_mel + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mel + 1);
  for (int k = 1; k < n_bins; ++k) {  // DC bin stays zero
    const double mel_k =
        hz_to_mel(static_cast<double>(k) * sample_rate / static_cast<double>(n_fft));
    for (int b = 0; b < n_mel; ++b) {
      const double lower = edges[static_cast<std::size_t>(b)];
      const double center = edges[static_cast<std::size_t>(b) + 1];
      const double upper = edges[static_cast<std::size_t>(b) + 2];
      const double up = (mel_k - lower) / (center - lower);
      const double down = (upper - mel_k) / (upper - center);
      fb(b, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

Tensor<float> extract_logmel(const std::vector<float>& samples, int sample_rate,
                             double fps) {
  if (sample_rate != 16000)
    throw ValidationError("logmel: sample rate must be 16000, got " +
                          std::to_string(sample_rate) + " (no silent resampling)");
  if (!(fps > 0)) throw ValidationError("logmel: fps must be positive");

  const Index win = static_cast<Index>(std::lround(kWindowSec * sample_rate));
  const Index hop = static_cast<Index>(std::lround(sample_rate / fps));
  if (hop < 1) throw ValidationError("logmel: fps too high for the sample rate");

  std::vector<float> s = samples;
  if (static_cast<Index>(s.size()) < win) s.resize(static_cast<std::size_t>(win), 0.0f);
  const Index n_rows = (static_cast<Index>(s.size()) - win) / hop + 1;

  static thread_local Tensor<double> fb;  // built once per thread
  if (!fb.defined())
    fb = mel_filterbank(kMelBands, kFftSize, sample_rate, kMelMinHz, kMelMaxHz);

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (Index i = 0; i < win; ++i)
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(win));

  Tensor<float> out({n_rows, kMelBands});
  std::vector<std::complex<double>> buf(kFftSize);
  std::vector<double> mag(kFftSize / 2 + 1);
  for (Index r = 0; r < n_rows; ++r) {
    const Index base = r * hop;
    for (Index i = 0; i < win; ++i)
      buf[static_cast<std::size_t>(i)] = {s[static_cast<std::size_t>(base + i)] *
                                              hann[static_cast<std::size_t>(i)],
                                          0.0};
    for (Index i = win; i < kFftSize; ++i) buf[static_cast<std::size_t>(i)] = {0.0, 0.0};
    fft(buf);
    for (int k = 0; k <= kFftSize / 2; ++k)
      mag[static_cast<std::size_t>(k)] = std::abs(buf[static_cast<std::size_t>(k)]);
    for (int b = 0; b < kMelBands; ++b) {
      double acc = 0.0;
      const double* w = fb.data() + static_cast<Index>(b) * (kFftSize / 2 + 1);
      for (int k = 1; k <= kFftSize / 2; ++k) acc += w[k] * mag[static_cast<std::size_t>(k)];
      out(r, b) = static_cast<float>(std::log(acc + kLogFloor));
    }
  }
  return out;
}

}  // namespace afusion
