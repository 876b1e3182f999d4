#include "tunet/pipeline/run_config.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

namespace tunet::pipeline {

void RunConfig::validate() const {
  static const char* tasks[] = {"pretrain", "train", "infer", "eval", "degrade"};
  bool ok = false;
  for (const char* t : tasks) ok = ok || task == t;
  if (!ok) throw std::invalid_argument("config: unknown task '" + task + "'");
  if (!(learning_rate > 0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("config: epochs must be positive");
  if (!(alpha >= 0)) throw std::invalid_argument("config: alpha must be non-negative");
  if (!(mask_rate >= 0 && mask_rate <= 1)) throw std::invalid_argument("config: mask_rate must lie in [0, 1]");
  if (mask_block == 0) throw std::invalid_argument("config: mask_block must be positive");
  if (msm_masked_only && mask_rate == 0) {
    throw std::invalid_argument("config: msm_masked_only needs mask_rate > 0");
  }
  if (width_divisor == 0) throw std::invalid_argument("config: width_divisor must be positive");
  if ((task == "pretrain" || task == "train") && data.empty()) {
    throw std::invalid_argument("config: task '" + task + "' needs data");
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  kv.set("task", task);
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("alpha", format_double(alpha));
  kv.set("augmentation", to_string(augmentation));
  kv.set("seed", std::to_string(seed));
  kv.set("mask_rate", format_double(mask_rate));
  kv.set("mask_block", std::to_string(mask_block));
  kv.set("msm_masked_only", msm_masked_only ? "true" : "false");
  kv.set("msm_static_masks", msm_static_masks ? "true" : "false");
  kv.set("redraw_features", redraw_features ? "true" : "false");
  kv.set("checkpoint_every_epoch", checkpoint_every_epoch ? "true" : "false");
  kv.set("width_divisor", std::to_string(width_divisor));
  kv.set("data", data);
  kv.set("validation", validation);
  kv.set("init", init);
  kv.set("out", out);
  return kv;
}

bool RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "task") task = value;
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "epochs") epochs = parse_size(key, value);
  else if (key == "max_steps") max_steps = parse_size(key, value);
  else if (key == "alpha") alpha = parse_double(key, value);
  else if (key == "augmentation") augmentation = parse_augmentation(value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "mask_rate") mask_rate = parse_double(key, value);
  else if (key == "mask_block") mask_block = parse_size(key, value);
  else if (key == "msm_masked_only") msm_masked_only = parse_bool(key, value);
  else if (key == "msm_static_masks") msm_static_masks = parse_bool(key, value);
  else if (key == "redraw_features") redraw_features = parse_bool(key, value);
  else if (key == "checkpoint_every_epoch") checkpoint_every_epoch = parse_bool(key, value);
  else if (key == "width_divisor") width_divisor = parse_size(key, value);
  else if (key == "data") data = value;
  else if (key == "validation") validation = value;
  else if (key == "init") init = value;
  else if (key == "out") out = value;
  else return false;
  return true;
}

model::TUNetConfig ConfigFile::effective_model() const {
  auto m = run.width_divisor == 1 ? model : model.scaled_width(run.width_divisor);
  m.validate();
  return m;
}

KeyValues ConfigFile::to_key_values() const {
  auto kv = run.to_key_values();
  for (const auto& [k, v] : model.to_key_values().entries) kv.set(k, v);
  return kv;
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile c;
  for (const auto& [k, v] : KeyValues::parse(text).entries) {
    if (!c.run.apply(k, v) && !c.model.apply(k, v)) throw std::invalid_argument("config: unknown key '" + k + "'");
  }
  return c;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

}  // namespace tunet::pipeline
