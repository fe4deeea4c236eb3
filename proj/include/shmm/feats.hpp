// MFCC + delta feature extraction, per-utterance mean normalization and the
// binary feature file format.
#ifndef SHMM_FEATS_HPP
#define SHMM_FEATS_HPP

#include <algorithm>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include "shmm/common.hpp"

namespace shmm {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;
};

// Frames-by-dimensions matrix of acoustic features. The on-disk payload is
// float32; values read from disk round-trip bit-exactly.
struct FeatureMatrix {
  MatrixXd data;  // T x D
  float frame_shift_sec = 0.010f;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  const MatrixXd& as_double() const { return data; }
};

struct MfccConfig {
  int num_ceps = 13;
  double window_sec = 0.025;
  double shift_sec = 0.010;
  int num_mel_filters = 26;
  int fft_size = 512;
  int delta_window = 2;
  double preemphasis = 0.97;
  double log_floor = 1e-10;

  void validate() const {
    if (num_ceps <= 0 || num_ceps > num_mel_filters)
      throw Error("MfccConfig: need 0 < num_ceps <= num_mel_filters");
    if (window_sec <= 0 || shift_sec <= 0 || num_mel_filters <= 0 ||
        fft_size <= 0 || delta_window < 1)
      throw Error("MfccConfig: non-positive parameter");
    if ((fft_size & (fft_size - 1)) != 0)
      throw Error("MfccConfig: fft_size must be a power of two");
  }
};

namespace detail {

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

// Triangular mel filterbank over FFT bins [0, fft_size/2].
inline MatrixXd mel_filterbank(int num_filters, int fft_size, double sample_rate) {
  const int nbins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  VectorXd centers(num_filters + 2);
  for (int i = 0; i < num_filters + 2; ++i)
    centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (num_filters + 1));
  MatrixXd fb = MatrixXd::Zero(num_filters, nbins);
  for (int m = 0; m < num_filters; ++m) {
    double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < nbins; ++b) {
      double hz = b * sample_rate / fft_size;
      if (hz > lo && hz < mid)
        fb(m, b) = (hz - lo) / (mid - lo);
      else if (hz >= mid && hz < hi)
        fb(m, b) = (hi - hz) / (hi - mid);
    }
  }
  return fb;
}

}  // namespace detail

inline FeatureMatrix compute_mfcc(const Waveform& wave, const MfccConfig& cfg) {
  cfg.validate();
  if (wave.sample_rate_hz <= 0) throw Error("compute_mfcc: bad sample rate");
  const int win = static_cast<int>(std::lround(cfg.window_sec * wave.sample_rate_hz));
  const int hop = static_cast<int>(std::lround(cfg.shift_sec * wave.sample_rate_hz));
  if (win <= 0 || hop <= 0) throw Error("compute_mfcc: window shorter than one sample");
  if (cfg.fft_size < win) throw Error("compute_mfcc: fft_size smaller than window");
  const auto len = static_cast<long>(wave.samples.size());
  if (len < win) throw Error("compute_mfcc: signal shorter than one window");
  const long num_frames = (len - win) / hop + 1;

  VectorXd window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));

  const MatrixXd fb = detail::mel_filterbank(cfg.num_mel_filters, cfg.fft_size,
                                             wave.sample_rate_hz);
  // Orthonormal DCT-II.
  MatrixXd dct(cfg.num_ceps, cfg.num_mel_filters);
  for (int k = 0; k < cfg.num_ceps; ++k) {
    double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / cfg.num_mel_filters);
    for (int m = 0; m < cfg.num_mel_filters; ++m)
      dct(k, m) = scale * std::cos(std::numbers::pi * k * (m + 0.5) / cfg.num_mel_filters);
  }

  FeatureMatrix out;
  out.data.resize(num_frames, cfg.num_ceps);
  out.frame_shift_sec = static_cast<float>(cfg.shift_sec);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  const int nbins = cfg.fft_size / 2 + 1;
  VectorXd power(nbins);
  for (long t = 0; t < num_frames; ++t) {
    const long off = t * hop;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0));
    for (int i = 0; i < win; ++i) {
      double prev = (off + i > 0) ? wave.samples[off + i - 1] : wave.samples[0];
      double s = wave.samples[off + i] - cfg.preemphasis * prev;
      buf[i] = s * window[i];
    }
    detail::fft(buf);
    for (int b = 0; b < nbins; ++b) power[b] = std::norm(buf[b]);
    VectorXd mel = fb * power;
    VectorXd logmel = mel.array().max(cfg.log_floor).log();
    VectorXd ceps = dct * logmel;
    out.data.row(t) = ceps.transpose();
  }
  return out;
}

// First and second order regression deltas appended column-wise; edge frames
// use replicated padding so T is preserved.
inline FeatureMatrix append_deltas(const FeatureMatrix& feats, int delta_window) {
  if (feats.rows() < 1) throw Error("append_deltas: empty input");
  if (delta_window < 1) throw Error("append_deltas: delta_window must be >= 1");
  const auto T = feats.rows();
  const auto D = feats.cols();
  double denom = 0.0;
  for (int k = 1; k <= delta_window; ++k) denom += 2.0 * k * k;

  auto regress = [&](const MatrixXd& src) {
    MatrixXd d(T, D);
    for (Eigen::Index t = 0; t < T; ++t) {
      VectorXd acc = VectorXd::Zero(D);
      for (int k = 1; k <= delta_window; ++k) {
        Eigen::Index lo = std::max<Eigen::Index>(0, t - k);
        Eigen::Index hi = std::min<Eigen::Index>(T - 1, t + k);
        acc += k * (src.row(hi) - src.row(lo)).transpose();
      }
      d.row(t) = (acc / denom).transpose();
    }
    return d;
  };

  const MatrixXd& statics = feats.data;
  MatrixXd d1 = regress(statics);
  MatrixXd d2 = regress(d1);
  FeatureMatrix out;
  out.frame_shift_sec = feats.frame_shift_sec;
  out.data.resize(T, 3 * D);
  out.data.leftCols(D) = statics;
  out.data.middleCols(D, D) = d1;
  out.data.rightCols(D) = d2;
  return out;
}

inline FeatureMatrix mean_normalize(const FeatureMatrix& feats) {
  if (feats.rows() < 1) throw Error("mean_normalize: empty input");
  FeatureMatrix out = feats;
  Eigen::RowVectorXd mean = feats.data.colwise().mean();
  out.data = feats.data.rowwise() - mean;
  return out;
}

// Feature file: "SHMF" magic, version 0x01, u32 rows, u32 cols, f32
// frame_shift, then row-major little-endian f32 payload.
inline void write_features(const std::string& path, const FeatureMatrix& feats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_features: cannot open " + path);
  os.write("SHMF", 4);
  char version = 0x01;
  os.write(&version, 1);
  uint32_t rows = static_cast<uint32_t>(feats.rows());
  uint32_t cols = static_cast<uint32_t>(feats.cols());
  os.write(reinterpret_cast<const char*>(&rows), 4);
  os.write(reinterpret_cast<const char*>(&cols), 4);
  os.write(reinterpret_cast<const char*>(&feats.frame_shift_sec), 4);
  for (Eigen::Index r = 0; r < feats.rows(); ++r)
    for (Eigen::Index c = 0; c < feats.cols(); ++c) {
      float v = static_cast<float>(feats.data(r, c));
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
  if (!os) throw Error("write_features: write failed for " + path);
}

inline FeatureMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("read_features: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SHMF", 4) != 0)
    throw FormatError("read_features: bad magic in " + path);
  char version = 0;
  is.read(&version, 1);
  if (!is || version != 0x01)
    throw FormatError("read_features: unsupported version in " + path);
  uint32_t rows = 0, cols = 0;
  float shift = 0.0f;
  is.read(reinterpret_cast<char*>(&rows), 4);
  is.read(reinterpret_cast<char*>(&cols), 4);
  is.read(reinterpret_cast<char*>(&shift), 4);
  if (!is) throw FormatError("read_features: truncated header in " + path);
  if (rows == 0 || cols == 0 || static_cast<uint64_t>(rows) * cols > (1ull << 31))
    throw FormatError("read_features: implausible dimensions in " + path);
  FeatureMatrix out;
  out.frame_shift_sec = shift;
  out.data.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      float v;
      is.read(reinterpret_cast<char*>(&v), 4);
      if (!is) throw FormatError("read_features: truncated payload in " + path);
      out.data(r, c) = v;
    }
  return out;
}

// Minimal PCM16 WAV reader (mono or first channel, no resampling).
inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("read_wav: cannot open " + path);
  auto read_u32 = [&] {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto read_u16 = [&] {
    uint16_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 2);
    return v;
  };
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw FormatError("read_wav: not RIFF: " + path);
  read_u32();
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw FormatError("read_wav: not WAVE: " + path);

  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  Waveform w;
  while (is.read(tag, 4)) {
    uint32_t size = read_u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t fmt = read_u16();
      channels = read_u16();
      rate = read_u32();
      read_u32();
      read_u16();
      bits = read_u16();
      if (fmt != 1 || bits != 16)
        throw FormatError("read_wav: only PCM16 supported: " + path);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (channels == 0) throw FormatError("read_wav: data before fmt: " + path);
      uint32_t n = size / 2 / channels;
      w.samples.resize(n);
      std::vector<int16_t> frame(channels);
      for (uint32_t i = 0; i < n; ++i) {
        is.read(reinterpret_cast<char*>(frame.data()), 2 * channels);
        w.samples[i] = frame[0] / 32768.0;
      }
      break;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (w.samples.empty()) throw FormatError("read_wav: no data chunk in " + path);
  w.sample_rate_hz = static_cast<int>(rate);
  return w;
}

inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_wav: cannot open " + path);
  uint32_t n = static_cast<uint32_t>(w.samples.size());
  uint32_t data_bytes = n * 2;
  auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(1);
  u32(static_cast<uint32_t>(w.sample_rate_hz));
  u32(static_cast<uint32_t>(w.sample_rate_hz) * 2);
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(data_bytes);
  for (double s : w.samples) {
    auto v = static_cast<int16_t>(std::clamp(s, -1.0, 1.0) * 32767.0);
    os.write(reinterpret_cast<const char*>(&v), 2);
  }
}

}  // namespace shmm

#endif  // SHMM_FEATS_HPP
