#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace tunet::stream {

// Maps one analysis window to an equally long output window.
using ChunkFunction = std::function<std::vector<double>(const std::vector<double>&)>;
// Sees each analysis window and the raw model output before cross-fading.
using ChunkObserver = std::function<void(const std::vector<double>& window, const std::vector<double>& raw)>;

struct StreamConfig {
  std::size_t window = 8192;
  std::size_t hop = 1024;
  void validate() const;
  // Delay between a sample entering and its fully cross-faded output.
  std::size_t latency() const { return window - hop; }
};

// Triangle made of two window/2 rectangles convolved, scaled so that copies
// shifted by `hop` sum to exactly 1.
std::vector<double> synthesis_window(const StreamConfig& cfg);

// Streaming processing over a sliding window. Samples before the first
// pushed one are treated as zeros.
class StreamProcessor {
 public:
  StreamProcessor(ChunkFunction fn, StreamConfig cfg = {});

  void set_observer(ChunkObserver obs) { observer_ = std::move(obs); }
  // Buffers input; every full hop runs one chunk and appends `hop` output
  // samples, `latency()` samples behind the input.
  std::vector<double> push(std::span<const double> samples);
  // Zero-pads the pending partial hop and drains the overlap tail.
  std::vector<double> flush();

  const std::vector<double>& chunk_latencies_ms() const { return latencies_ms_; }
  std::size_t chunks() const { return latencies_ms_.size(); }
  const StreamConfig& config() const { return cfg_; }

 private:
  void run_chunk(std::vector<double>& out);

  ChunkFunction fn_;
  ChunkObserver observer_;
  StreamConfig cfg_;
  std::vector<double> synth_;
  std::vector<double> buffer_;   // last `window` input samples
  std::vector<double> overlap_;  // partial output sums, `window` long
  std::vector<double> pending_;  // input not yet forming a full hop
  std::vector<double> latencies_ms_;
};

// Whole-signal convenience: streams `x` through `fn` and returns output
// aligned with the input (latency removed, same length).
std::vector<double> stream_process(const ChunkFunction& fn, std::span<const double> x, const StreamConfig& cfg = {},
                                   std::vector<double>* latencies_ms = nullptr, const ChunkObserver& observer = {});

}  // namespace tunet::stream
