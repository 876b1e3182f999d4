#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tunet/dsp/filter.hpp"
#include "tunet/pipeline/wav.hpp"
#include "tunet/random.hpp"

namespace tunet::pipeline {

inline constexpr std::size_t kSegmentLength = 8192;
inline constexpr std::size_t kSegmentHop = 4096;

struct Segment {
  std::vector<double> input;   // narrowband, upsampled to 16 kHz (or masked for MSM)
  std::vector<double> target;  // wideband (or original for MSM)
  std::size_t file_id = 0;
  std::size_t offset = 0;
  bool padded = false;  // source shorter than one segment
};

struct SegmentView {
  std::size_t offset;
  std::vector<double> samples;
  bool padded;
};

// Windows of `length` every `hop` samples, trailing remainder dropped. A
// signal shorter than `length` yields one zero-padded, flagged window.
std::vector<SegmentView> segment_signal(std::span<const double> x, std::size_t length = kSegmentLength,
                                        std::size_t hop = kSegmentHop);

enum class Augmentation { Single, Multi };
Augmentation parse_augmentation(const std::string& s);
std::string to_string(Augmentation a);

// Anti-alias + decimate with `spec`, then interpolate back to the input rate.
// Output has the input's length.
std::vector<double> degrade(std::span<const double> wb, const dsp::FilterSpec& spec);

struct BweDataset {
  std::vector<Segment> pairs;
  std::vector<dsp::FilterSpec> file_filters;  // one per input file
};

// Single mode uses the baseline filter for every file; multi mode draws one
// random filter per file, in file order. Each WB segment is degraded on its
// own, so degrade(target, file filter) == input for every pair.
BweDataset make_bwe_dataset(const std::vector<AudioClip>& wb_files, Augmentation mode, Rng& rng);

struct MaskResult {
  std::vector<double> masked;
  std::vector<char> block_mask;  // 1 = zeroed block
};

// Zeroes round(rate * blocks) blocks chosen uniformly without replacement.
MaskResult mask_blocks(std::span<const double> x, std::size_t block, double rate, Rng& rng);

// Loads every *.wav in `dir`; 8 kHz files are upsampled to 16 kHz.
std::vector<AudioClip> load_corpus(const std::filesystem::path& dir, std::vector<std::string>* names = nullptr);

}  // namespace tunet::pipeline
