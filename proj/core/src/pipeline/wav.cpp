#include "tunet/pipeline/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace tunet::pipeline {

static_assert(std::endian::native == std::endian::little, "WAV IO assumes a little-endian host");

namespace {
template <typename U>
U read_le(const std::vector<unsigned char>& b, std::size_t pos) {
  U v;
  std::memcpy(&v, b.data() + pos, sizeof(U));
  return v;
}

template <typename U>
void write_le(std::vector<unsigned char>& b, U v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  b.insert(b.end(), p, p + sizeof(U));
}

void tag(std::vector<unsigned char>& b, const char* s) { b.insert(b.end(), s, s + 4); }
}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_wav: cannot open " + path.string());
  const std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = "load_wav(" + path.string() + "): ";
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error(where + "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  AudioClip clip;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const auto size = read_le<std::uint32_t>(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) throw std::runtime_error(where + "chunk extends past end of file");
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error(where + "fmt chunk too short");
      const auto format = read_le<std::uint16_t>(b, body);
      const auto channels = read_le<std::uint16_t>(b, body + 2);
      const auto rate = read_le<std::uint32_t>(b, body + 4);
      const auto bits = read_le<std::uint16_t>(b, body + 14);
      if (format != 1) throw std::runtime_error(where + "audio format " + std::to_string(format) + " (PCM = 1 required)");
      if (channels != 1) throw std::runtime_error(where + "channels = " + std::to_string(channels) + " (mono required)");
      if (bits != 16) {
        throw std::runtime_error(where + "bits per sample = " + std::to_string(bits) + " (16 required)");
      }
      if (rate != 8000 && rate != 16000) {
        throw std::runtime_error(where + "sample rate = " + std::to_string(rate) + " (8000 or 16000 required)");
      }
      clip.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error(where + "data chunk before fmt chunk");
      const std::size_t n = size / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = static_cast<double>(read_le<std::int16_t>(b, body + 2 * i)) / 32768.0;
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw std::runtime_error(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate != 8000 && clip.sample_rate != 16000) {
    throw std::invalid_argument("save_wav: sample rate " + std::to_string(clip.sample_rate) + " unsupported");
  }
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<unsigned char> b;
  b.reserve(44 + data_bytes);
  tag(b, "RIFF");
  write_le<std::uint32_t>(b, 36 + data_bytes);
  tag(b, "WAVE");
  tag(b, "fmt ");
  write_le<std::uint32_t>(b, 16);
  write_le<std::uint16_t>(b, 1);
  write_le<std::uint16_t>(b, 1);
  write_le<std::uint32_t>(b, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(b, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  write_le<std::uint16_t>(b, 2);
  write_le<std::uint16_t>(b, 16);
  tag(b, "data");
  write_le<std::uint32_t>(b, data_bytes);
  for (double x : clip.samples) {
    const double q = std::clamp(std::nearbyint(x * 32768.0), -32768.0, 32767.0);
    write_le<std::int16_t>(b, static_cast<std::int16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_wav: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tunet::pipeline
