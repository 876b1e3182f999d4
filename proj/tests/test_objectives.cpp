#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "support.hpp"
#include "tunet/gradcheck.hpp"
#include "tunet/metrics.hpp"
#include "tunet/objectives.hpp"
#include "tunet/pipeline/dataset.hpp"
#include "tunet/pipeline/synth.hpp"

using namespace tunet;
using namespace tunet::objectives;
using ad::Tensor;
using std::numbers::pi;
using test_support::random_vector;

namespace {

// Straight-line loss: own window, reflect framing, O(N^2) DFT, triangles and sums.
struct OracleLoss {
  static double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
  static double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

  static std::vector<std::vector<double>> mel(const std::vector<double>& x, std::size_t nfft, std::size_t hop,
                                              std::size_t win, std::size_t n_mels) {
    const long len = static_cast<long>(x.size());
    std::vector<double> w(nfft, 0.0);
    for (std::size_t i = 0; i < win; ++i) w[(nfft - win) / 2 + i] = 0.5 * (1 - std::cos(2 * pi * i / win));
    const std::size_t bins = nfft / 2 + 1, frames = 1 + x.size() / hop;
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(hz_to_mel(8000.0) * i / (n_mels + 1));
    std::vector<std::vector<double>> out(frames, std::vector<double>(n_mels, 0.0));
    std::vector<double> frame(nfft);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t n = 0; n < nfft; ++n) {
        long s = static_cast<long>(t * hop + n) - static_cast<long>(nfft / 2);
        while (s < 0 || s >= len) s = s < 0 ? -s : 2 * (len - 1) - s;
        frame[n] = x[static_cast<std::size_t>(s)] * w[n];
      }
      for (std::size_t k = 0; k < bins; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t n = 0; n < nfft; ++n) acc += frame[n] * std::polar(1.0, -2 * pi * double(k * n % nfft) / nfft);
        const double mag = std::sqrt(std::norm(acc) + 1e-12) - 1e-6;
        const double f = 16000.0 * k / nfft;
        for (std::size_t m = 0; m < n_mels; ++m) {
          double tri = 0;
          if (f > edges[m] && f <= edges[m + 1]) tri = (f - edges[m]) / (edges[m + 1] - edges[m]);
          else if (f > edges[m + 1] && f < edges[m + 2]) tri = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
          out[t][m] += mag * tri;
        }
      }
    }
    return out;
  }

  static double loss(const std::vector<double>& est, const std::vector<double>& tgt) {
    const std::size_t res[3][3] = {{1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};
    double total = 0;
    for (const auto& r : res) {
      const auto m_hat = mel(est, r[0], r[1], r[2], 128), m = mel(tgt, r[0], r[1], r[2], 128);
      double diff = 0, ref = 0, l1 = 0;
      std::size_t count = 0;
      for (std::size_t t = 0; t < m.size(); ++t) {
        for (std::size_t j = 0; j < 128; ++j) {
          diff += (m[t][j] - m_hat[t][j]) * (m[t][j] - m_hat[t][j]);
          ref += m[t][j] * m[t][j];
          l1 += std::abs(std::log(m[t][j] + 1e-8) - std::log(m_hat[t][j] + 1e-8));
          ++count;
        }
      }
      total += std::sqrt(diff) / std::sqrt(ref) + l1 / count;
    }
    return total / 3.0;
  }
};

Tensor<double> tensor_of(const std::vector<double>& v, bool grad = false) {
  Tensor<double> t({v.size()}, v);
  if (grad) t.set_requires_grad(true);
  return t;
}

// Orthogonal-to-y noise with |n|^2 = |y|^2 / 10.
std::vector<double> orthogonal_noise(const std::vector<double>& y, Rng& rng) {
  auto n = random_vector(y.size(), rng);
  double ny = 0, yy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ny += n[i] * y[i];
    yy += y[i] * y[i];
  }
  double nn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    n[i] -= ny / yy * y[i];
    nn += n[i] * n[i];
  }
  const double s = std::sqrt(yy / 10.0 / nn);
  for (auto& v : n) v *= s;
  return n;
}

}  // namespace

TEST(MrLoss, IdenticalSignalsGiveZero) {
  Rng rng(500);
  const auto y = random_vector(4096, rng);
  EXPECT_EQ(mr_stft_mel_loss(tensor_of(y), tensor_of(y)).item(), 0.0);
  EXPECT_EQ(total_loss(tensor_of(y), tensor_of(y)).item(), 0.0);
}

TEST(MrLoss, ZeroEstimateGivesUnitSpectralConvergence) {
  Rng rng(501);
  const auto y = random_vector(4096, rng);
  const auto terms = mr_stft_mel_terms(tensor_of(std::vector<double>(4096, 0.0)), tensor_of(y));
  EXPECT_NEAR(terms.spectral_convergence.item(), 1.0, 1e-12);
}

// Silent training segments occur in real corpora (pauses); the loss and its
// gradient must stay finite in float.
TEST(MrLoss, SilentTargetAndExactEstimateHaveFiniteGradients) {
  Rng rng(506);
  const auto y = random_vector(4096, rng);
  auto grads = [](const std::vector<double>& est, const std::vector<double>& tgt) {
    Tensor<float> e({4096}, std::vector<float>(est.begin(), est.end()));
    e.set_requires_grad(true);
    Tensor<float> t({4096}, std::vector<float>(tgt.begin(), tgt.end()));
    ad::Tape<float> tape;
    ad::TapeScope<float> scope(tape);
    auto terms = mr_stft_mel_terms(e, t);
    const double sc = terms.spectral_convergence.item();
    tape.backward(total_loss(e, t));
    return std::pair{sc, std::vector<float>(e.grad().begin(), e.grad().end())};
  };
  const auto [sc_silent, g_silent] = grads(y, std::vector<double>(4096, 0.0));
  EXPECT_EQ(sc_silent, 0.0);
  for (float g : g_silent) ASSERT_TRUE(std::isfinite(g));
  const auto [sc_exact, g_exact] = grads(y, y);
  EXPECT_EQ(sc_exact, 0.0);
  for (float g : g_exact) ASSERT_EQ(g, 0.0f);
}

TEST(MrLoss, MatchesStraightLineOracle) {
  Rng rng(502);
  const auto y = random_vector(3000, rng);
  auto est = random_vector(3000, rng, -0.5, 0.5);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += 0.5 * y[i];
  const double got = mr_stft_mel_loss(tensor_of(est), tensor_of(y)).item();
  const double want = OracleLoss::loss(est, y);
  EXPECT_NEAR(got, want, 1e-6 * std::max(1.0, want));
}

TEST(MrLoss, FloatAgreesWithDouble) {
  Rng rng(503);
  const auto y = random_vector(4096, rng), e = random_vector(4096, rng);
  const double d = mr_stft_mel_loss(tensor_of(e), tensor_of(y)).item();
  Tensor<float> ef({4096}, std::vector<float>(e.begin(), e.end())), yf({4096}, std::vector<float>(y.begin(), y.end()));
  EXPECT_NEAR(mr_stft_mel_loss(ef, yf).item(), d, 1e-3 * d);
}

TEST(TotalLoss, WeightsAndDefaults) {
  EXPECT_EQ(kDefaultMseWeight, 10000.0);
  Rng rng(504);
  const auto y = random_vector(4096, rng), e = random_vector(4096, rng);
  const double mr = mr_stft_mel_loss(tensor_of(e), tensor_of(y)).item();
  const double m = mse(tensor_of(e), tensor_of(y)).item();
  EXPECT_EQ(total_loss(tensor_of(e), tensor_of(y), 0.0).item(), mr);
  EXPECT_NEAR(total_loss(tensor_of(e), tensor_of(y)).item(), mr + 10000.0 * m, 1e-9 * (mr + 10000.0 * m));
  double ref = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ref += (e[i] - y[i]) * (e[i] - y[i]) / y.size();
  EXPECT_NEAR(m, ref, 1e-12);
  EXPECT_GE(total_loss(tensor_of(e), tensor_of(y), 3.0).item(), 0.0);
  EXPECT_THROW(total_loss(tensor_of(e), tensor_of(y), -1.0), std::invalid_argument);
  EXPECT_THROW(mse(tensor_of(e), tensor_of(random_vector(10, rng))), std::invalid_argument);
}

TEST(LossGradients, AllTermsPassFiniteDifferences) {
  Rng rng(505);
  const auto y = random_vector(2400, rng);
  auto e = tensor_of(random_vector(2400, rng), true);
  auto t = tensor_of(y);
  ad::GradCheckOptions opts;
  opts.max_coords = 60;
  auto terms = [&] { return mr_stft_mel_terms(e, t); };
  auto r = ad::grad_check([&] { return terms().spectral_convergence; }, {e}, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << "spectral convergence";
  r = ad::grad_check([&] { return terms().log_magnitude; }, {e}, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << "log magnitude";
  r = ad::grad_check([&] { return mse(e, t); }, {e}, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << "mse";
  r = ad::grad_check([&] { return total_loss(e, t); }, {e}, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << "total";
  EXPECT_EQ(r.nan_count, 0u);
}

TEST(Lsd, IdentityAndHundredfoldPower) {
  Rng rng(510);
  const auto y = random_vector(16000, rng);
  EXPECT_EQ(metrics::lsd(y, y), 0.0);
  std::vector<double> y10(y);
  for (auto& v : y10) v *= 10.0;
  EXPECT_NEAR(metrics::lsd(y10, y), 2.0, 1e-6);
  EXPECT_NEAR(metrics::lsd(y10, y, metrics::Band::High), 2.0, 1e-6);
  EXPECT_NEAR(metrics::lsd(y10, y, metrics::Band::Low), 2.0, 1e-6);
}

TEST(Lsd, SymmetricAndBandConsistent) {
  Rng rng(511);
  const auto a = random_vector(12000, rng);
  auto b = random_vector(12000, rng);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.3 * b[i] + a[i];
  EXPECT_DOUBLE_EQ(metrics::lsd(a, b), metrics::lsd(b, a));
  const auto [lo0, lo1] = metrics::band_bins(metrics::Band::Low);
  const auto [hi0, hi1] = metrics::band_bins(metrics::Band::High);
  EXPECT_EQ(lo0, 0u);
  EXPECT_EQ(lo1, 513u);
  EXPECT_EQ(hi0, 513u);
  EXPECT_EQ(hi1, 1025u);
  const auto full = metrics::lsd_frame_msd(a, b, metrics::Band::Full);
  const auto low = metrics::lsd_frame_msd(a, b, metrics::Band::Low);
  const auto high = metrics::lsd_frame_msd(a, b, metrics::Band::High);
  for (std::size_t t = 0; t < full.size(); ++t) {
    const double weighted = (513.0 * low[t] + 512.0 * high[t]) / 1025.0;
    EXPECT_NEAR(full[t], weighted, 1e-12 * std::max(1.0, full[t]));
    EXPECT_GE(full[t], std::min(low[t], high[t]) - 1e-12);
    EXPECT_LE(full[t], std::max(low[t], high[t]) + 1e-12);
  }
}

TEST(Lsd, NarrowbandInputHasLargeHighBandDistance) {
  Rng rng(512);
  const auto wb = pipeline::synth_speech(32000, rng);
  const auto nb = pipeline::degrade(wb, dsp::default_antialias_filter());
  const double hf = metrics::lsd(nb, wb, metrics::Band::High), lf = metrics::lsd(nb, wb, metrics::Band::Low);
  EXPECT_GT(hf, 3.0 * lf) << "hf " << hf << " lf " << lf;
}

TEST(SiSdr, OrthogonalNoiseGivesTenDecibels) {
  Rng rng(520);
  const auto y = random_vector(16000, rng);
  const auto n = orthogonal_noise(y, rng);
  std::vector<double> est(y);
  for (std::size_t i = 0; i < y.size(); ++i) est[i] += n[i];
  EXPECT_NEAR(metrics::si_sdr(est, y), 10.0, 0.01);
  EXPECT_NEAR(metrics::si_sdr(est, y), 10.0, 1e-9);
}

TEST(SiSdr, ScaleInvarianceAndCap) {
  Rng rng(521);
  const auto y = random_vector(8000, rng);
  auto est = random_vector(8000, rng);
  for (std::size_t i = 0; i < y.size(); ++i) est[i] += y[i];
  std::vector<double> twice(est), neg(y), scaled(y);
  for (auto& v : twice) v *= 2.0;
  for (auto& v : neg) v *= -3.0;
  for (auto& v : scaled) v *= 0.01;
  EXPECT_NEAR(metrics::si_sdr(twice, y), metrics::si_sdr(est, y), 1e-9);
  EXPECT_EQ(metrics::si_sdr(y, y), metrics::kSiSdrCap);
  EXPECT_EQ(metrics::si_sdr(neg, y), metrics::kSiSdrCap);
  EXPECT_EQ(metrics::si_sdr(scaled, y), metrics::kSiSdrCap);
  EXPECT_THROW(metrics::si_sdr(est, std::vector<double>(8000, 0.0)), std::invalid_argument);
}

TEST(MetricReport, CsvAndJsonLayout) {
  metrics::MetricReport rep;
  rep.rows.push_back({"a.wav", 1.0, 2.0, 0.5, 10.0});
  rep.rows.push_back({"b.wav", 3.0, 4.0, 1.5, 20.0});
  const auto m = rep.mean();
  EXPECT_EQ(m.lsd, 2.0);
  EXPECT_EQ(m.si_sdr, 15.0);
  std::istringstream csv(rep.to_csv());
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "file,lsd,lsd_hf,lsd_lf,si_sdr");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 6), "a.wav,");
  std::getline(csv, line);
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 5), "mean,");
  const auto j = nlohmann::json::parse(rep.to_json());
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][1]["file"], "b.wav");
  EXPECT_DOUBLE_EQ(j["mean"]["lsd_lf"].get<double>(), 1.0);
}

TEST(MetricRow, ComputeMetricsFillsAllColumns) {
  Rng rng(530);
  const auto y = random_vector(16000, rng);
  auto e = y;
  for (std::size_t i = 0; i < e.size(); i += 3) e[i] *= 0.5;
  const auto row = metrics::compute_metrics("x.wav", e, y);
  EXPECT_EQ(row.file, "x.wav");
  EXPECT_DOUBLE_EQ(row.lsd, metrics::lsd(e, y));
  EXPECT_DOUBLE_EQ(row.lsd_hf, metrics::lsd(e, y, metrics::Band::High));
  EXPECT_DOUBLE_EQ(row.lsd_lf, metrics::lsd(e, y, metrics::Band::Low));
  EXPECT_DOUBLE_EQ(row.si_sdr, metrics::si_sdr(e, y));
}
