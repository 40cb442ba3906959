#include "qsep/dsp.hpp"

#include <cmath>
#include <stdexcept>

namespace qsep {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(kTau * i / n));
  return w;
}

void fft(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const std::size_t n = re.size();
  if (im.size() != n) throw std::invalid_argument("fft: re/im length mismatch");
  if (!power_of_two(static_cast<int>(n)))
    throw std::invalid_argument("fft: length must be a power of two");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? kTau : -kTau) / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      re[i] *= inv;
      im[i] *= inv;
    }
  }
}

Spectrogram stft(const Waveform& w, int window, int hop) {
  if (hop < 0) hop = window / 4;
  if (!power_of_two(window))
    throw std::invalid_argument("stft: window must be a power of two");
  if (hop < 1 || hop > window) throw std::invalid_argument("stft: bad hop");
  const std::size_t n = w.samples.size();
  if (n < static_cast<std::size_t>(window))
    throw std::invalid_argument("stft: signal shorter than one window");

  Spectrogram s;
  s.window = window;
  s.hop = hop;
  s.frames = 1 + static_cast<int>((n - static_cast<std::size_t>(window)) /
                                  static_cast<std::size_t>(hop));
  const int bins = s.bins();
  s.re.assign(static_cast<std::size_t>(bins) * s.frames, 0.0);
  s.im.assign(static_cast<std::size_t>(bins) * s.frames, 0.0);

  const std::vector<double> win = hann_window(window);
  std::vector<double> fr(static_cast<std::size_t>(window));
  std::vector<double> fi(static_cast<std::size_t>(window));
  for (int t = 0; t < s.frames; ++t) {
    const double* seg = w.samples.data() + static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < window; ++i) {
      fr[static_cast<std::size_t>(i)] = seg[i] * win[static_cast<std::size_t>(i)];
      fi[static_cast<std::size_t>(i)] = 0.0;
    }
    fft(fr, fi, false);
    for (int f = 0; f < bins; ++f) {
      s.re[static_cast<std::size_t>(f) * s.frames + t] = fr[static_cast<std::size_t>(f)];
      s.im[static_cast<std::size_t>(f) * s.frames + t] = fi[static_cast<std::size_t>(f)];
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s, int sample_rate) {
  if (!power_of_two(s.window) || s.hop < 1 || s.frames < 1)
    throw std::invalid_argument("istft: inconsistent frame parameters");
  const int bins = s.bins();
  if (s.re.size() != static_cast<std::size_t>(bins) * s.frames ||
      s.im.size() != s.re.size())
    throw std::invalid_argument("istft: buffer size mismatch");

  const std::size_t length =
      static_cast<std::size_t>(s.window) +
      static_cast<std::size_t>(s.frames - 1) * static_cast<std::size_t>(s.hop);
  std::vector<double> acc(length, 0.0), wsum(length, 0.0);
  const std::vector<double> win = hann_window(s.window);

  std::vector<double> fr(static_cast<std::size_t>(s.window));
  std::vector<double> fi(static_cast<std::size_t>(s.window));
  for (int t = 0; t < s.frames; ++t) {
    // rebuild the full conjugate-symmetric spectrum from the one-sided half
    for (int f = 0; f < bins; ++f) {
      fr[static_cast<std::size_t>(f)] =
          s.re[static_cast<std::size_t>(f) * s.frames + t];
      fi[static_cast<std::size_t>(f)] =
          s.im[static_cast<std::size_t>(f) * s.frames + t];
    }
    for (int f = bins; f < s.window; ++f) {
      fr[static_cast<std::size_t>(f)] =
          s.re[static_cast<std::size_t>(s.window - f) * s.frames + t];
      fi[static_cast<std::size_t>(f)] =
          -s.im[static_cast<std::size_t>(s.window - f) * s.frames + t];
    }
    fft(fr, fi, true);
    const std::size_t base = static_cast<std::size_t>(t) * s.hop;
    for (int i = 0; i < s.window; ++i) {
      acc[base + i] += win[static_cast<std::size_t>(i)] * fr[static_cast<std::size_t>(i)];
      wsum[base + i] += win[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(length, 0.0);
  for (std::size_t i = 0; i < length; ++i)
    if (wsum[i] > 1e-12) out.samples[i] = acc[i] / wsum[i];
  return out;
}

std::pair<Tensor, Tensor> mag_phase(const Spectrogram& s) {
  const int bins = s.bins();
  std::vector<double> mag(s.re.size()), ph(s.re.size());
  for (std::size_t i = 0; i < s.re.size(); ++i) {
    mag[i] = std::hypot(s.re[i], s.im[i]);
    ph[i] = std::atan2(s.im[i], s.re[i]);
  }
  return {Tensor::from({bins, s.frames}, std::move(mag)),
          Tensor::from({bins, s.frames}, std::move(ph))};
}

Spectrogram recombine(const Tensor& mag, const Tensor& phase, int window,
                      int hop) {
  if (mag.rank() != 2 || mag.shape() != phase.shape())
    throw std::invalid_argument("recombine: shape mismatch");
  if (mag.dim(0) != window / 2 + 1)
    throw std::invalid_argument("recombine: bin count does not match window");
  Spectrogram s;
  s.window = window;
  s.hop = hop;
  s.frames = mag.dim(1);
  s.re.resize(mag.size());
  s.im.resize(mag.size());
  const double* pm = mag.data();
  const double* pp = phase.data();
  for (std::size_t i = 0; i < mag.size(); ++i) {
    s.re[i] = pm[i] * std::cos(pp[i]);
    s.im[i] = pm[i] * std::sin(pp[i]);
  }
  return s;
}

Tensor crop_net(const Tensor& full, int t_net) {
  if (full.rank() != 2) throw std::invalid_argument("crop_net expects (F,T)");
  const int f_net = full.dim(0) - 1;  // drop the Nyquist row
  const int frames = full.dim(1);
  if (f_net < 1 || t_net < 1) throw std::invalid_argument("crop_net: degenerate shape");
  std::vector<double> out(static_cast<std::size_t>(f_net) * t_net, 0.0);
  const int t_copy = std::min(frames, t_net);
  for (int f = 0; f < f_net; ++f)
    for (int t = 0; t < t_copy; ++t)
      out[static_cast<std::size_t>(f) * t_net + t] =
          full.data()[static_cast<std::size_t>(f) * frames + t];
  return Tensor::from({f_net, t_net}, std::move(out));
}

Tensor restore_full(const Tensor& net, int bins, int frames) {
  if (net.rank() != 2) throw std::invalid_argument("restore_full expects (F,T)");
  const int f_net = net.dim(0), t_net = net.dim(1);
  if (bins < f_net + 1 || frames < 1)
    throw std::invalid_argument("restore_full: target smaller than source");
  std::vector<double> out(static_cast<std::size_t>(bins) * frames, 0.0);
  const int t_copy = std::min(frames, t_net);
  for (int f = 0; f < f_net; ++f)
    for (int t = 0; t < t_copy; ++t)
      out[static_cast<std::size_t>(f) * frames + t] =
          net.data()[static_cast<std::size_t>(f) * t_net + t];
  return Tensor::from({bins, frames}, std::move(out));
}

Waveform reconstruct(const Tensor& est_mag, const Tensor& mixture_phase,
                     int window, int hop, int full_frames, int sample_rate) {
  if (est_mag.shape() != mixture_phase.shape())
    throw std::invalid_argument("reconstruct: magnitude/phase shape mismatch");
  const int bins = window / 2 + 1;
  Tensor mag = restore_full(est_mag, bins, full_frames);
  Tensor ph = restore_full(mixture_phase, bins, full_frames);
  return istft(recombine(mag, ph, window, hop), sample_rate);
}

std::vector<Waveform> segment(const Waveform& w, double seconds) {
  const std::size_t n =
      static_cast<std::size_t>(std::llround(seconds * w.sample_rate));
  if (n == 0) throw std::invalid_argument("segment: zero-length segment");
  std::vector<Waveform> out;
  for (std::size_t start = 0; start < w.samples.size(); start += n) {
    Waveform seg;
    seg.sample_rate = w.sample_rate;
    seg.samples.assign(n, 0.0);
    const std::size_t take = std::min(n, w.samples.size() - start);
    std::copy(w.samples.begin() + static_cast<long>(start),
              w.samples.begin() + static_cast<long>(start + take),
              seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

Waveform fit_length(const Waveform& w, int samples) {
  if (samples <= 0) throw std::invalid_argument("fit_length: samples <= 0");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(static_cast<std::size_t>(samples), 0.0);
  const std::size_t n = w.samples.size();
  const std::size_t want = static_cast<std::size_t>(samples);
  if (n <= want) {
    std::copy(w.samples.begin(), w.samples.end(), out.samples.begin());
  } else {
    const std::size_t start = (n - want) / 2;
    std::copy(w.samples.begin() + static_cast<long>(start),
              w.samples.begin() + static_cast<long>(start + want),
              out.samples.begin());
  }
  return out;
}

}  // namespace qsep
