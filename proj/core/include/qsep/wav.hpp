#pragma once

#include <string>

#include "qsep/dsp.hpp"

namespace qsep {

enum class WavEncoding { kPcm16, kFloat32 };

// Mono RIFF reader for PCM 16-bit and IEEE 32-bit float files. When
// expected_rate > 0 a differing sample-rate field is an error rather
// than a silent resample.
Waveform read_wav(const std::string& path, int expected_rate = -1);

// Float32 by default so written samples round-trip exactly; PCM16 clips
// to [-1, 1] and quantizes.
void write_wav(const std::string& path, const Waveform& w,
               WavEncoding enc = WavEncoding::kFloat32);

}  // namespace qsep
