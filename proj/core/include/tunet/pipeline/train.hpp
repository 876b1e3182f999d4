#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

#include "tunet/checkpoint.hpp"
#include "tunet/model.hpp"
#include "tunet/pipeline/dataset.hpp"
#include "tunet/pipeline/optim.hpp"
#include "tunet/pipeline/run_config.hpp"

namespace tunet::pipeline {

template <typename T>
struct TrainState {
  TrainState(const model::TUNetConfig& model_config, const RunConfig& run);

  model::TUNet<T> model;
  Adam<T> adam;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  RunConfig run;
};

struct StepRecord {
  std::uint64_t step;  // 1-based after the update
  std::uint64_t epoch;
  double loss;         // batch mean
};

struct EpochRecord {
  std::uint64_t epoch;  // 1-based, completed
  double mean_loss;
  double validation_lsd = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&, const TrainState<T>&)> on_epoch;
};

// Fresh model initialised from run.seed.
template <typename T>
TrainState<T> new_train_state(const model::TUNetConfig& model_config, const RunConfig& run);

// Parameters, buffers, Adam moments, counters and the full config.
template <typename T>
io::Checkpoint state_checkpoint(const TrainState<T>& state);
// Resumes exactly where the checkpoint left off; `run` replaces the stored
// run settings (e.g. a larger epoch budget).
template <typename T>
TrainState<T> resume_train_state(const io::Checkpoint& ckpt, const RunConfig& run);
// Copies weights and buffers only (fine-tuning from a pretrained model).
template <typename T>
void load_pretrained(TrainState<T>& state, const io::Checkpoint& ckpt);

// Masked speech modelling: the model sees masked segments and is scored by
// MSE against the originals (all samples, or only the masked ones).
template <typename T>
std::vector<StepRecord> pretrain_msm(TrainState<T>& state, const std::vector<std::vector<double>>& segments,
                                     const TrainHooks<T>& hooks = {});

// Bandwidth extension with total_loss(alpha) on (input, target) pairs.
// A non-empty `validation` set adds mean LSD to every epoch record.
template <typename T>
std::vector<StepRecord> train_bwe(TrainState<T>& state, const std::vector<Segment>& pairs,
                                  const std::vector<Segment>& validation = {}, const TrainHooks<T>& hooks = {});

// Mean full-band LSD of offline model outputs over segment pairs.
template <typename T>
double validation_lsd(const model::TUNet<T>& net, const std::vector<Segment>& pairs);

}  // namespace tunet::pipeline
