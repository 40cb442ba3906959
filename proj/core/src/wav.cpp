#include "qsep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace qsep {

namespace {

// This code assumes a little-endian host, which matches every platform
// the project targets; the readers below do byte-level assembly anyway.

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void wr_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path, int expected_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const uint32_t chunk_len = rd_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size())
      throw std::runtime_error("truncated WAV chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw std::runtime_error("malformed fmt chunk");
      format = rd_u16(body);
      channels = rd_u16(body + 2);
      rate = rd_u32(body + 4);
      bits = rd_u16(body + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!data) throw std::runtime_error("WAV file has no data chunk: " + path);
  if (channels != 1)
    throw std::runtime_error("only mono WAV is supported: " + path);
  if (expected_rate > 0 && rate != static_cast<uint32_t>(expected_rate))
    throw std::runtime_error("sample rate " + std::to_string(rate) +
                             " does not match expected " +
                             std::to_string(expected_rate) + ": " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int16_t v = static_cast<int16_t>(rd_u16(data + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const uint32_t u = rd_u32(data + 4 * i);
      float fv;
      std::memcpy(&fv, &u, 4);
      w.samples[i] = static_cast<double>(fv);
    }
  } else {
    throw std::runtime_error("unsupported WAV encoding (format " +
                             std::to_string(format) + ", " +
                             std::to_string(bits) + " bit): " + path);
  }
  for (double v : w.samples)
    if (!std::isfinite(v))
      throw std::runtime_error("non-finite sample in " + path);
  return w;
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding enc) {
  const uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const uint16_t format = enc == WavEncoding::kPcm16 ? 1 : 3;
  const uint32_t bytes_per = bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * bytes_per);

  std::string out;
  out.reserve(64 + data_len);
  out += "RIFF";
  const bool fact = format == 3;
  const uint32_t riff_len = 4 + (8 + 16) + (fact ? 8 + 4 : 0) + (8 + data_len);
  wr_u32(out, riff_len);
  out += "WAVE";
  out += "fmt ";
  wr_u32(out, 16);
  wr_u16(out, format);
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<uint32_t>(w.sample_rate));
  wr_u32(out, static_cast<uint32_t>(w.sample_rate) * bytes_per);
  wr_u16(out, static_cast<uint16_t>(bytes_per));
  wr_u16(out, bits);
  if (fact) {
    out += "fact";
    wr_u32(out, 4);
    wr_u32(out, static_cast<uint32_t>(w.samples.size()));
  }
  out += "data";
  wr_u32(out, data_len);
  if (enc == WavEncoding::kPcm16) {
    for (double v : w.samples) {
      const double c = std::min(1.0, std::max(-1.0, v));
      // quantize on the decoder's grid; only +1.0 loses one step
      const long q = std::min(32767L, std::lrint(c * 32768.0));
      wr_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
    }
  } else {
    for (double v : w.samples) {
      const float fv = static_cast<float>(v);
      uint32_t u;
      std::memcpy(&u, &fv, 4);
      wr_u32(out, u);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<long>(out.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

}  // namespace qsep
