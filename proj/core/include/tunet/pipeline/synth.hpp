#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "tunet/random.hpp"

namespace tunet::pipeline {

// Speech-like test material at 16 kHz: voiced syllables (harmonic series
// with gliding pitch shaped by random formants up to 8 kHz), fricative
// noise bursts and short pauses. Peak normalized to `peak`.
std::vector<double> synth_speech(std::size_t samples, Rng& rng, double peak = 0.5);

// Writes `files` clips of `seconds` each as synth_NNN.wav into `dir`.
void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t files, double seconds,
                            std::uint64_t seed);

}  // namespace tunet::pipeline
