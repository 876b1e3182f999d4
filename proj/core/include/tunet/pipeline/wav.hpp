#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tunet::pipeline {

struct AudioClip {
  int sample_rate = 16000;
  std::vector<double> samples;  // [-1, 1)
};

// PCM 16-bit mono RIFF/WAVE at 8 or 16 kHz. Samples are scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path);
// Inverse of load_wav; values are rounded and clamped to the int16 range.
void save_wav(const AudioClip& clip, const std::filesystem::path& path);

// Sorted *.wav paths directly inside `dir`.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

}  // namespace tunet::pipeline
