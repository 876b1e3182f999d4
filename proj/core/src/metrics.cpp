#include "tunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tunet/dsp/spectral.hpp"

namespace tunet::metrics {

std::pair<std::size_t, std::size_t> band_bins(Band band, const LsdConfig& cfg) {
  const std::size_t bins = cfg.nfft / 2 + 1;
  // Last bin at or below the split frequency.
  const auto split = static_cast<std::size_t>(std::floor(cfg.split_hz * static_cast<double>(cfg.nfft) / cfg.sample_rate));
  if (split + 1 >= bins) throw std::invalid_argument("band_bins: split frequency must lie below Nyquist");
  switch (band) {
    case Band::Full: return {0, bins};
    case Band::Low: return {0, split + 1};
    case Band::High: return {split + 1, bins};
  }
  return {0, bins};
}

namespace {
void check_lengths(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(who) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  if (a.empty()) throw std::invalid_argument(std::string(who) + ": empty signal");
}
}  // namespace

std::vector<double> lsd_frame_msd(std::span<const double> estimate, std::span<const double> target, Band band,
                                  const LsdConfig& cfg) {
  check_lengths(estimate, target, "lsd");
  const auto [lo, hi] = band_bins(band, cfg);
  const auto s_hat = dsp::stft(estimate, cfg.nfft, cfg.hop, cfg.nfft, cfg.sample_rate);
  const auto s = dsp::stft(target, cfg.nfft, cfg.hop, cfg.nfft, cfg.sample_rate);
  std::vector<double> out(s.frames);
  for (std::size_t t = 0; t < s.frames; ++t) {
    double acc = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const double d = std::log10(std::norm(s.at(t, k)) + cfg.power_floor) -
                       std::log10(std::norm(s_hat.at(t, k)) + cfg.power_floor);
      acc += d * d;
    }
    out[t] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

double lsd(std::span<const double> estimate, std::span<const double> target, Band band, const LsdConfig& cfg) {
  const auto msd = lsd_frame_msd(estimate, target, band, cfg);
  double acc = 0.0;
  for (double v : msd) acc += std::sqrt(v);
  return acc / static_cast<double>(msd.size());
}

double si_sdr(std::span<const double> estimate, std::span<const double> target) {
  check_lengths(estimate, target, "si_sdr");
  double dot = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    dot += estimate[i] * target[i];
    energy += target[i] * target[i];
  }
  if (energy == 0.0) throw std::invalid_argument("si_sdr: target is all zeros");
  const double alpha = dot / energy;
  double sig = 0.0, res = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = alpha * target[i];
    const double e = estimate[i] - s;
    sig += s * s;
    res += e * e;
  }
  // Rounding leaves a tiny residual for exact scalings; treat it as zero.
  if (res <= sig * 1e-24) return kSiSdrCap;
  return std::min(kSiSdrCap, 10.0 * std::log10(sig / res + 1e-12));
}

MetricRow compute_metrics(std::string file, std::span<const double> estimate, std::span<const double> target) {
  MetricRow r;
  r.file = std::move(file);
  r.lsd = lsd(estimate, target, Band::Full);
  r.lsd_hf = lsd(estimate, target, Band::High);
  r.lsd_lf = lsd(estimate, target, Band::Low);
  r.si_sdr = si_sdr(estimate, target);
  return r;
}

MetricRow MetricReport::mean() const {
  MetricRow m;
  m.file = "mean";
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.lsd += r.lsd;
    m.lsd_hf += r.lsd_hf;
    m.lsd_lf += r.lsd_lf;
    m.si_sdr += r.si_sdr;
  }
  const double n = static_cast<double>(rows.size());
  m.lsd /= n;
  m.lsd_hf /= n;
  m.lsd_lf /= n;
  m.si_sdr /= n;
  return m;
}

namespace {
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

nlohmann::ordered_json row_json(const MetricRow& r) {
  nlohmann::ordered_json j;
  j["file"] = r.file;
  j["lsd"] = r.lsd;
  j["lsd_hf"] = r.lsd_hf;
  j["lsd_lf"] = r.lsd_lf;
  j["si_sdr"] = r.si_sdr;
  return j;
}
}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "file,lsd,lsd_hf,lsd_lf,si_sdr\n";
  auto line = [&](const MetricRow& r) {
    os << csv_field(r.file) << ',' << num(r.lsd) << ',' << num(r.lsd_hf) << ',' << num(r.lsd_lf) << ','
       << num(r.si_sdr) << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean());
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) j["rows"].push_back(row_json(r));
  j["mean"] = row_json(mean());
  return j.dump(2) + "\n";
}

void MetricReport::write(const std::filesystem::path& path) const {
  const auto ext = path.extension().string();
  std::string body;
  if (ext == ".csv") body = to_csv();
  else if (ext == ".json") body = to_json();
  else throw std::invalid_argument("MetricReport::write: unknown report extension '" + ext + "' (use .csv or .json)");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("MetricReport::write: cannot open " + path.string());
  f << body;
}

}  // namespace tunet::metrics
