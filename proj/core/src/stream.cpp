#include "tunet/stream.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace tunet::stream {

void StreamConfig::validate() const {
  if (hop == 0 || window == 0 || window % 2 != 0 || (window / 2) % hop != 0) {
    throw std::invalid_argument("StreamConfig: window must be even and window/2 a multiple of hop (window=" +
                                std::to_string(window) + ", hop=" + std::to_string(hop) + ")");
  }
}

std::vector<double> synthesis_window(const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t w = cfg.window, half = w / 2;
  const double norm = static_cast<double>(half) * static_cast<double>(half / cfg.hop);
  std::vector<double> out(w, 0.0);
  for (std::size_t n = 0; n + 1 < w; ++n) {
    out[n] = static_cast<double>(std::min(n + 1, w - 1 - n)) / norm;
  }
  return out;
}

StreamProcessor::StreamProcessor(ChunkFunction fn, StreamConfig cfg)
    : fn_(std::move(fn)), cfg_(cfg), synth_(synthesis_window(cfg)), buffer_(cfg.window, 0.0),
      overlap_(cfg.window, 0.0) {
  if (!fn_) throw std::invalid_argument("StreamProcessor: empty chunk function");
}

void StreamProcessor::run_chunk(std::vector<double>& out) {
  const std::size_t w = cfg_.window, h = cfg_.hop;
  std::copy(buffer_.begin() + static_cast<std::ptrdiff_t>(h), buffer_.end(), buffer_.begin());
  std::copy(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(h),
            buffer_.begin() + static_cast<std::ptrdiff_t>(w - h));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(h));

  const auto t0 = std::chrono::steady_clock::now();
  const auto y = fn_(buffer_);
  const auto t1 = std::chrono::steady_clock::now();
  latencies_ms_.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  if (y.size() != w) {
    throw std::runtime_error("StreamProcessor: chunk function returned " + std::to_string(y.size()) +
                             " samples, expected " + std::to_string(w));
  }
  if (observer_) observer_(buffer_, y);

  for (std::size_t n = 0; n < w; ++n) overlap_[n] += synth_[n] * y[n];
  out.insert(out.end(), overlap_.begin(), overlap_.begin() + static_cast<std::ptrdiff_t>(h));
  std::copy(overlap_.begin() + static_cast<std::ptrdiff_t>(h), overlap_.end(), overlap_.begin());
  std::fill(overlap_.end() - static_cast<std::ptrdiff_t>(h), overlap_.end(), 0.0);
}

std::vector<double> StreamProcessor::push(std::span<const double> samples) {
  std::vector<double> out;
  pending_.insert(pending_.end(), samples.begin(), samples.end());
  while (pending_.size() >= cfg_.hop) run_chunk(out);
  return out;
}

std::vector<double> StreamProcessor::flush() {
  std::vector<double> out;
  if (!pending_.empty()) {
    pending_.resize(cfg_.hop, 0.0);
    run_chunk(out);
  }
  for (std::size_t i = 0; i < cfg_.latency() / cfg_.hop; ++i) {
    pending_.assign(cfg_.hop, 0.0);
    run_chunk(out);
  }
  return out;
}

std::vector<double> stream_process(const ChunkFunction& fn, std::span<const double> x, const StreamConfig& cfg,
                                   std::vector<double>* latencies_ms, const ChunkObserver& observer) {
  StreamProcessor proc(fn, cfg);
  if (observer) proc.set_observer(observer);
  auto out = proc.push(x);
  const auto tail = proc.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  const std::size_t lag = cfg.latency();
  std::vector<double> aligned(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size() && lag + i < out.size(); ++i) aligned[i] = out[lag + i];
  if (latencies_ms) *latencies_ms = proc.chunk_latencies_ms();
  return aligned;
}

}  // namespace tunet::stream
