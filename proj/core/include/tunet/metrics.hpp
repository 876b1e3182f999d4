#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tunet::metrics {

enum class Band { Full, High, Low };

struct LsdConfig {
  std::size_t nfft = 2048;
  std::size_t hop = 512;
  double sample_rate = 16000.0;
  double power_floor = 1e-10;
  // Low band is [0, split], high band is (split, Nyquist].
  double split_hz = 4000.0;
};

// Bin range [first, last) covered by `band`.
std::pair<std::size_t, std::size_t> band_bins(Band band, const LsdConfig& cfg = {});

// Per-frame mean over band bins of (log10 P - log10 P^)^2.
std::vector<double> lsd_frame_msd(std::span<const double> estimate, std::span<const double> target, Band band,
                                  const LsdConfig& cfg = {});

// mean_t sqrt(mean_f (log10 P - log10 P^)^2), P = |S|^2 + floor.
double lsd(std::span<const double> estimate, std::span<const double> target, Band band = Band::Full,
           const LsdConfig& cfg = {});

inline constexpr double kSiSdrCap = 100.0;

// Scale-invariant SDR in dB, capped at 100 dB. Throws on an all-zero target.
double si_sdr(std::span<const double> estimate, std::span<const double> target);

struct MetricRow {
  std::string file;
  double lsd = 0, lsd_hf = 0, lsd_lf = 0, si_sdr = 0;
};

MetricRow compute_metrics(std::string file, std::span<const double> estimate, std::span<const double> target);

struct MetricReport {
  std::vector<MetricRow> rows;

  MetricRow mean() const;
  // Columns: file, lsd, lsd_hf, lsd_lf, si_sdr; a final "mean" row follows.
  std::string to_csv() const;
  std::string to_json() const;
  // Format picked from the extension (.csv or .json).
  void write(const std::filesystem::path& path) const;
};

}  // namespace tunet::metrics
