#include "tunet/pipeline/evaluate.hpp"

#include <stdexcept>

#include "tunet/dsp/resample.hpp"
#include "tunet/pipeline/dataset.hpp"

namespace tunet::pipeline {

EvalDegradation parse_eval_degradation(const std::string& s) {
  if (s == "single") return EvalDegradation::Single;
  if (s == "multi") return EvalDegradation::Multi;
  if (s == "sinc") return EvalDegradation::Sinc;
  throw std::invalid_argument("degradation must be 'single', 'multi' or 'sinc', got '" + s + "'");
}

std::string to_string(EvalDegradation d) {
  switch (d) {
    case EvalDegradation::Single: return "single";
    case EvalDegradation::Multi: return "multi";
    case EvalDegradation::Sinc: return "sinc";
  }
  return "single";
}

std::vector<double> degrade_for_eval(std::span<const double> wb, EvalDegradation kind, Rng& rng) {
  switch (kind) {
    case EvalDegradation::Single: return degrade(wb, dsp::default_antialias_filter());
    case EvalDegradation::Multi: return degrade(wb, dsp::random_filter_spec(rng));
    case EvalDegradation::Sinc: {
      auto up = dsp::upsample2(dsp::sinc_downsample2(wb));
      up.resize(wb.size());
      return up;
    }
  }
  throw std::logic_error("degrade_for_eval: unknown kind");
}

template <typename T>
stream::ChunkFunction model_chunk_function(const model::TUNet<T>& net) {
  return [&net](const std::vector<double>& window) { return net.infer(window); };
}

metrics::MetricReport evaluate(const stream::ChunkFunction& fn, const std::vector<AudioClip>& files,
                               const std::vector<std::string>& names, EvalDegradation kind, std::uint64_t seed,
                               const stream::StreamConfig& stream_config) {
  if (names.size() != files.size()) throw std::invalid_argument("evaluate: one name per file required");
  Rng rng = make_rng(seed, {0xE7A1u});
  metrics::MetricReport report;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].sample_rate != 16000) {
      throw std::invalid_argument("evaluate: " + names[i] + " is not a 16 kHz file");
    }
    const auto& wb = files[i].samples;
    const auto nb = degrade_for_eval(wb, kind, rng);
    const auto out = stream::stream_process(fn, nb, stream_config);
    report.rows.push_back(metrics::compute_metrics(names[i], out, wb));
  }
  return report;
}

template stream::ChunkFunction model_chunk_function<float>(const model::TUNet<float>&);
template stream::ChunkFunction model_chunk_function<double>(const model::TUNet<double>&);

}  // namespace tunet::pipeline
