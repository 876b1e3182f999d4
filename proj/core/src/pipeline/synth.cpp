#include "tunet/pipeline/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tunet/pipeline/wav.hpp"

namespace tunet::pipeline {

namespace {
constexpr double kRate = 16000.0;

void voiced(std::vector<double>& out, std::size_t begin, std::size_t len, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0a = 90.0 + 150.0 * u(rng);
  const double f0b = f0a * (0.85 + 0.3 * u(rng));
  const double formants[4] = {300 + 600 * u(rng), 900 + 1600 * u(rng), 2400 + 1000 * u(rng), 4000 + 2500 * u(rng)};
  const double widths[4] = {120, 200, 300, 900};
  const double gains[4] = {1.0, 0.6, 0.3, 0.12};
  auto envelope = [&](double f) {
    double a = 0.02;
    for (int i = 0; i < 4; ++i) {
      const double d = (f - formants[i]) / widths[i];
      a += gains[i] * std::exp(-0.5 * d * d);
    }
    return a;
  };
  const auto harmonics = static_cast<std::size_t>(7900.0 / std::max(f0a, f0b));
  std::vector<double> phase(harmonics + 1, 0.0);
  for (auto& p : phase) p = 2 * std::numbers::pi * u(rng);
  double base = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n) / static_cast<double>(len);
    const double f0 = f0a + (f0b - f0a) * t;
    base += 2 * std::numbers::pi * f0 / kRate;
    const double env = std::pow(std::sin(std::numbers::pi * t), 0.6);
    double s = 0.0;
    for (std::size_t k = 1; k <= harmonics; ++k) {
      const double f = f0 * static_cast<double>(k);
      if (f >= 7950.0) break;
      s += envelope(f) * std::sin(static_cast<double>(k) * base + phase[k]);
    }
    out[begin + n] += 0.2 * env * s;
  }
}

void fricative(std::vector<double>& out, std::size_t begin, std::size_t len, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double level = 0.05 + 0.1 * u(rng);
  double prev = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n) / static_cast<double>(len);
    const double w = g(rng);
    const double hp = w - 0.9 * prev;  // tilt energy toward high frequencies
    prev = w;
    out[begin + n] += level * std::sin(std::numbers::pi * t) * hp;
  }
}
}  // namespace

std::vector<double> synth_speech(std::size_t samples, Rng& rng, double peak) {
  std::vector<double> out(samples, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t pos = 0;
  while (pos < samples) {
    const auto len = std::min<std::size_t>(samples - pos, static_cast<std::size_t>(kRate * (0.12 + 0.18 * u(rng))));
    const double kind = u(rng);
    if (kind < 0.7) voiced(out, pos, len, rng);
    else if (kind < 0.9) fricative(out, pos, len, rng);
    pos += len;
  }
  double m = 0.0;
  for (double v : out) m = std::max(m, std::abs(v));
  if (m > 0) {
    for (double& v : out) v *= peak / m;
  }
  return out;
}

void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t files, double seconds,
                            std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < files; ++i) {
    Rng rng = make_rng(seed, {0x5E7Du, i});
    AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples = synth_speech(static_cast<std::size_t>(seconds * kRate), rng);
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03zu.wav", i);
    save_wav(clip, dir / name);
  }
}

}  // namespace tunet::pipeline
