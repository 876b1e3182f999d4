#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "tunet/keyvalue.hpp"
#include "tunet/model.hpp"
#include "tunet/pipeline/dataset.hpp"

namespace tunet::pipeline {

struct RunConfig {
  std::string task = "train";  // pretrain | train | infer | eval | degrade
  double learning_rate = 3e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0 = no limit
  double alpha = 10000.0;
  Augmentation augmentation = Augmentation::Single;
  std::uint64_t seed = 0;
  double mask_rate = 0.2;
  std::size_t mask_block = 256;
  bool msm_masked_only = false;
  bool msm_static_masks = false;  // one mask per segment for the whole run
  bool redraw_features = true;
  bool checkpoint_every_epoch = true;
  std::size_t width_divisor = 1;  // applied on top of the model keys
  std::string data;
  std::string validation;
  std::string init;
  std::string out = "run";

  void validate() const;
  KeyValues to_key_values() const;
  bool apply(const std::string& key, const std::string& value);
};

struct ConfigFile {
  RunConfig run;
  model::TUNetConfig model;

  // Model config with width_divisor applied.
  model::TUNetConfig effective_model() const;
  KeyValues to_key_values() const;
};

// Every key must belong to RunConfig or TUNetConfig.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::filesystem::path& path);

}  // namespace tunet::pipeline
