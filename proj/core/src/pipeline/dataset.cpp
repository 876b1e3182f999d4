#include "tunet/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tunet/dsp/resample.hpp"

namespace tunet::pipeline {

std::vector<SegmentView> segment_signal(std::span<const double> x, std::size_t length, std::size_t hop) {
  if (length == 0 || hop == 0) throw std::invalid_argument("segment_signal: length and hop must be positive");
  std::vector<SegmentView> out;
  if (x.size() < length) {
    std::vector<double> s(length, 0.0);
    std::copy(x.begin(), x.end(), s.begin());
    out.push_back({0, std::move(s), true});
    return out;
  }
  for (std::size_t off = 0; off + length <= x.size(); off += hop) {
    out.push_back({off, std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(off),
                                            x.begin() + static_cast<std::ptrdiff_t>(off + length)),
                   false});
  }
  return out;
}

Augmentation parse_augmentation(const std::string& s) {
  if (s == "single") return Augmentation::Single;
  if (s == "multi") return Augmentation::Multi;
  throw std::invalid_argument("augmentation must be 'single' or 'multi', got '" + s + "'");
}

std::string to_string(Augmentation a) { return a == Augmentation::Single ? "single" : "multi"; }

std::vector<double> degrade(std::span<const double> wb, const dsp::FilterSpec& spec) {
  auto up = dsp::upsample2(dsp::downsample2(wb, spec));
  up.resize(wb.size());
  return up;
}

BweDataset make_bwe_dataset(const std::vector<AudioClip>& wb_files, Augmentation mode, Rng& rng) {
  BweDataset ds;
  for (std::size_t f = 0; f < wb_files.size(); ++f) {
    const auto& clip = wb_files[f];
    if (clip.sample_rate != 16000) {
      throw std::invalid_argument("make_bwe_dataset: file " + std::to_string(f) + " is not 16 kHz");
    }
    ds.file_filters.push_back(mode == Augmentation::Single ? dsp::default_antialias_filter()
                                                           : dsp::random_filter_spec(rng));
    for (auto& seg : segment_signal(clip.samples)) {
      Segment s;
      s.input = degrade(seg.samples, ds.file_filters.back());
      s.target = std::move(seg.samples);
      s.file_id = f;
      s.offset = seg.offset;
      s.padded = seg.padded;
      ds.pairs.push_back(std::move(s));
    }
  }
  return ds;
}

MaskResult mask_blocks(std::span<const double> x, std::size_t block, double rate, Rng& rng) {
  if (block == 0 || x.size() % block != 0) {
    throw std::invalid_argument("mask_blocks: block " + std::to_string(block) + " must divide length " +
                                std::to_string(x.size()));
  }
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("mask_blocks: rate must lie in [0, 1]");
  const std::size_t blocks = x.size() / block;
  const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(blocks)));
  std::vector<std::size_t> order(blocks);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, blocks - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  MaskResult r;
  r.masked.assign(x.begin(), x.end());
  r.block_mask.assign(blocks, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t b = order[i];
    r.block_mask[b] = 1;
    std::fill(r.masked.begin() + static_cast<std::ptrdiff_t>(b * block),
              r.masked.begin() + static_cast<std::ptrdiff_t>((b + 1) * block), 0.0);
  }
  return r;
}

std::vector<AudioClip> load_corpus(const std::filesystem::path& dir, std::vector<std::string>* names) {
  std::vector<AudioClip> out;
  for (const auto& p : list_wavs(dir)) {
    auto clip = load_wav(p);
    if (clip.sample_rate == 8000) {
      clip.samples = dsp::upsample2(clip.samples);
      clip.sample_rate = 16000;
    }
    out.push_back(std::move(clip));
    if (names) names->push_back(p.filename().string());
  }
  if (out.empty()) throw std::runtime_error("no .wav files found in " + dir.string());
  return out;
}

}  // namespace tunet::pipeline
