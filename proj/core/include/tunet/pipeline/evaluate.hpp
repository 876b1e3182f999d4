#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tunet/metrics.hpp"
#include "tunet/model.hpp"
#include "tunet/pipeline/wav.hpp"
#include "tunet/random.hpp"
#include "tunet/stream.hpp"

namespace tunet::pipeline {

// Test-time narrowband simulations: the baseline Chebyshev filter, a random
// Chebyshev filter per file, or windowed-sinc decimation.
enum class EvalDegradation { Single, Multi, Sinc };
EvalDegradation parse_eval_degradation(const std::string& s);
std::string to_string(EvalDegradation d);

std::vector<double> degrade_for_eval(std::span<const double> wb, EvalDegradation kind, Rng& rng);

template <typename T>
stream::ChunkFunction model_chunk_function(const model::TUNet<T>& net);

// Degrades each file (random filters drawn from `seed` in file order), runs
// the chunk function through stream_process and scores it against the
// original.
metrics::MetricReport evaluate(const stream::ChunkFunction& fn, const std::vector<AudioClip>& files,
                               const std::vector<std::string>& names, EvalDegradation kind, std::uint64_t seed,
                               const stream::StreamConfig& stream_config = {});

}  // namespace tunet::pipeline
