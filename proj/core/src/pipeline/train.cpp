#include "tunet/pipeline/train.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "tunet/metrics.hpp"
#include "tunet/objectives.hpp"
#include "tunet/random.hpp"

namespace tunet::pipeline {

namespace {
constexpr std::uint64_t kShuffleTag = 0x5348;
constexpr std::uint64_t kFeatureTag = 0xFEA7;
constexpr std::uint64_t kMaskTag = 0x4D41;

template <typename T>
struct Example {
  std::vector<T> input;
  std::vector<T> target;
  std::vector<T> weight;  // optional per-sample loss weight
};

template <typename T>
std::vector<T> to_vec(const std::vector<double>& x) {
  return std::vector<T>(x.begin(), x.end());
}

template <typename T, typename MakeExample, typename Loss>
std::vector<StepRecord> run_training(TrainState<T>& s, std::size_t n, MakeExample make, Loss loss_fn,
                                     const TrainHooks<T>& hooks,
                                     const std::function<double()>& validate = {}) {
  if (n == 0) throw std::invalid_argument("training: empty corpus");
  const auto& run = s.run;
  run.validate();
  const std::size_t len = s.model.config().input_length;
  std::vector<StepRecord> log;
  while (s.epoch < run.epochs) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(run.seed, {kShuffleTag, s.epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    bool stopped = false;
    // a run stopped by max_steps resumes at the next batch of its epoch
    const std::size_t per_epoch = (n + run.batch_size - 1) / run.batch_size;
    const std::uint64_t done = s.step - std::min<std::uint64_t>(s.step, s.epoch * per_epoch);
    for (std::size_t b = std::min<std::size_t>(done, per_epoch) * run.batch_size; b < n; b += run.batch_size) {
      if (run.max_steps && s.step >= run.max_steps) {
        stopped = true;
        break;
      }
      const std::size_t end = std::min(n, b + run.batch_size);
      const T scale = T(1) / static_cast<T>(end - b);
      if (run.redraw_features) s.model.redraw_features(derive_seed(run.seed, {kFeatureTag, s.step}));
      s.adam.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        auto ex = make(order[i], s.epoch);
        if (ex.input.size() != len || ex.target.size() != len) {
          throw std::invalid_argument("training: example length " + std::to_string(ex.input.size()) +
                                      " does not match model input length " + std::to_string(len));
        }
        ad::Tape<T> tape;
        ad::TapeScope<T> scope(tape);
        ad::Tensor<T> x({1, len}, std::move(ex.input));
        ad::Tensor<T> y({1, len}, std::move(ex.target));
        auto out = s.model.forward(x);
        auto loss = loss_fn(out, y, ex.weight);
        batch_loss += static_cast<double>(loss.item());
        tape.backward(ad::mul_scalar(loss, scale));
      }
      s.adam.step();
      ++s.step;
      const StepRecord rec{s.step, s.epoch, batch_loss / static_cast<double>(end - b)};
      log.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      epoch_loss += rec.loss;
      ++epoch_steps;
    }
    if (stopped) break;
    ++s.epoch;
    EpochRecord er{s.epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_steps, 1))};
    if (validate) er.validation_lsd = validate();
    if (hooks.on_epoch) hooks.on_epoch(er, s);
  }
  return log;
}
}  // namespace

template <typename T>
TrainState<T>::TrainState(const model::TUNetConfig& model_config, const RunConfig& r)
    : model(model_config), adam(model.parameters(), AdamConfig{r.learning_rate}), run(r) {}

template <typename T>
TrainState<T> new_train_state(const model::TUNetConfig& model_config, const RunConfig& run) {
  TrainState<T> s(model_config, run);
  s.model.init(run.seed);
  return s;
}

template <typename T>
io::Checkpoint state_checkpoint(const TrainState<T>& s) {
  auto ckpt = io::model_checkpoint(s.model, s.run.to_key_values());
  s.adam.save(ckpt);
  ckpt.config.set("state_step", std::to_string(s.step));
  ckpt.config.set("state_epoch", std::to_string(s.epoch));
  return ckpt;
}

template <typename T>
TrainState<T> resume_train_state(const io::Checkpoint& ckpt, const RunConfig& run) {
  TrainState<T> s(io::model_config(ckpt), run);
  io::load_model_state(ckpt, s.model);
  s.adam.load(ckpt);
  const auto* step = ckpt.config.find("state_step");
  const auto* epoch = ckpt.config.find("state_epoch");
  if (!step || !epoch) throw std::runtime_error("checkpoint: missing training counters");
  s.step = parse_u64("state_step", *step);
  s.epoch = parse_u64("state_epoch", *epoch);
  return s;
}

template <typename T>
void load_pretrained(TrainState<T>& s, const io::Checkpoint& ckpt) {
  if (!(io::model_config(ckpt) == s.model.config())) {
    throw std::runtime_error("checkpoint: model config does not match the configured model");
  }
  io::load_model_state(ckpt, s.model);
}

template <typename T>
std::vector<StepRecord> pretrain_msm(TrainState<T>& s, const std::vector<std::vector<double>>& segments,
                                     const TrainHooks<T>& hooks) {
  const auto run = s.run;
  auto make = [&](std::size_t idx, std::uint64_t epoch) {
    Rng rng = make_rng(run.seed, {kMaskTag, run.msm_static_masks ? 0 : epoch, idx});
    auto m = mask_blocks(segments[idx], run.mask_block, run.mask_rate, rng);
    Example<T> ex{to_vec<T>(m.masked), to_vec<T>(segments[idx]), {}};
    if (run.msm_masked_only) {
      ex.weight.assign(segments[idx].size(), T(0));
      for (std::size_t b = 0; b < m.block_mask.size(); ++b) {
        if (!m.block_mask[b]) continue;
        std::fill(ex.weight.begin() + static_cast<std::ptrdiff_t>(b * run.mask_block),
                  ex.weight.begin() + static_cast<std::ptrdiff_t>((b + 1) * run.mask_block), T(1));
      }
    }
    return ex;
  };
  auto loss = [](const ad::Tensor<T>& out, const ad::Tensor<T>& y, const std::vector<T>& w) {
    if (w.empty()) return objectives::mse(out, y);
    std::size_t count = 0;
    for (T v : w) count += v != T(0);
    ad::Tensor<T> wt(out.shape(), w);
    auto se = ad::sum(ad::mul(ad::square(ad::sub(out, y)), wt));
    return ad::mul_scalar(se, T(1) / static_cast<T>(count));
  };
  return run_training(s, segments.size(), make, loss, hooks);
}

template <typename T>
std::vector<StepRecord> train_bwe(TrainState<T>& s, const std::vector<Segment>& pairs,
                                  const std::vector<Segment>& validation, const TrainHooks<T>& hooks) {
  const double alpha = s.run.alpha;
  auto make = [&](std::size_t idx, std::uint64_t) {
    return Example<T>{to_vec<T>(pairs[idx].input), to_vec<T>(pairs[idx].target), {}};
  };
  auto loss = [alpha](const ad::Tensor<T>& out, const ad::Tensor<T>& y, const std::vector<T>&) {
    return objectives::total_loss(out, y, alpha);
  };
  std::function<double()> validate;
  if (!validation.empty()) validate = [&] { return validation_lsd(s.model, validation); };
  return run_training(s, pairs.size(), make, loss, hooks, validate);
}

template <typename T>
double validation_lsd(const model::TUNet<T>& net, const std::vector<Segment>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("validation_lsd: empty set");
  double acc = 0.0;
  for (const auto& p : pairs) acc += metrics::lsd(net.infer(p.input), p.target);
  return acc / static_cast<double>(pairs.size());
}

#define TUNET_INSTANTIATE(T)                                                                                   \
  template struct TrainState<T>;                                                                               \
  template TrainState<T> new_train_state<T>(const model::TUNetConfig&, const RunConfig&);                      \
  template io::Checkpoint state_checkpoint<T>(const TrainState<T>&);                                           \
  template TrainState<T> resume_train_state<T>(const io::Checkpoint&, const RunConfig&);                       \
  template void load_pretrained<T>(TrainState<T>&, const io::Checkpoint&);                                     \
  template std::vector<StepRecord> pretrain_msm<T>(TrainState<T>&, const std::vector<std::vector<double>>&,    \
                                                   const TrainHooks<T>&);                                      \
  template std::vector<StepRecord> train_bwe<T>(TrainState<T>&, const std::vector<Segment>&,                   \
                                                const std::vector<Segment>&, const TrainHooks<T>&);            \
  template double validation_lsd<T>(const model::TUNet<T>&, const std::vector<Segment>&);

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)
#undef TUNET_INSTANTIATE

}  // namespace tunet::pipeline
