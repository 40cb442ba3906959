#pragma once

#include <utility>
#include <vector>

#include "qsep/tensor.hpp"

namespace qsep {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;

  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Complex STFT, bin-major: entry (f, t) at index f * frames + t.
// bins == window/2 + 1 (one-sided).
struct Spectrogram {
  int window = 1024;
  int hop = 256;
  int frames = 0;
  std::vector<double> re, im;

  int bins() const { return window / 2 + 1; }
};

// Periodic Hann window. At 75% overlap its squared sum telescopes to the
// constant 1.5 on interior samples, which istft() relies on.
std::vector<double> hann_window(int n);

// In-place iterative radix-2 transform; n must be a power of two.
// Forward is unnormalized; the inverse carries the 1/n factor.
void fft(std::vector<double>& re, std::vector<double>& im, bool inverse);

// Frames cover [t*hop, t*hop + window); no centering pad, so the signal
// must hold at least one full window.
Spectrogram stft(const Waveform& w, int window = 1024, int hop = -1);

// Overlap-add with squared-window normalization. Output length is
// window + (frames-1)*hop; edge samples where the window sum vanishes
// stay zero.
Waveform istft(const Spectrogram& s, int sample_rate);

// Polar split into (magnitude, phase), each a rank-2 (bins, frames) tensor.
std::pair<Tensor, Tensor> mag_phase(const Spectrogram& s);

Spectrogram recombine(const Tensor& mag, const Tensor& phase, int window,
                      int hop);

// Network-facing crop: drops the Nyquist bin (keeping window/2 rows) and
// fits the frame count to t_net. When the spectrogram has at least t_net
// frames the tail is cropped; otherwise missing frames are zero-padded.
Tensor crop_net(const Tensor& full, int t_net);

// Inverse of crop_net: re-inserts the Nyquist row and tail frames as zeros.
Tensor restore_full(const Tensor& net, int bins, int frames);

// istft of est_mag (net-cropped) recombined with the mixture's phase
// (same net shape), after restoring the cropped bins/frames as zeros.
Waveform reconstruct(const Tensor& est_mag, const Tensor& mixture_phase,
                     int window, int hop, int full_frames, int sample_rate);

// Non-overlapping fixed-length segments; the final partial segment is
// zero-padded to full length.
std::vector<Waveform> segment(const Waveform& w, double seconds = 3.0);

// Center-crops longer signals, zero-pads shorter ones at the end.
Waveform fit_length(const Waveform& w, int samples);

}  // namespace qsep
