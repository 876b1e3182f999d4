#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "tunet/checkpoint.hpp"
#include "tunet/dsp/resample.hpp"
#include "tunet/pipeline/dataset.hpp"
#include "tunet/pipeline/evaluate.hpp"
#include "tunet/pipeline/run_config.hpp"
#include "tunet/pipeline/synth.hpp"
#include "tunet/pipeline/train.hpp"
#include "tunet/pipeline/wav.hpp"
#include "tunet/stream.hpp"

namespace fs = std::filesystem;
using namespace tunet;
using namespace tunet::pipeline;

namespace {

constexpr std::uint64_t kDatasetTag = 0xDA7A;

ConfigFile read_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigFile cfg = path.empty() ? ConfigFile{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
    if (!cfg.run.apply(k, v) && !cfg.model.apply(k, v)) throw std::invalid_argument("unknown key '" + k + "'");
  }
  return cfg;
}

std::vector<std::vector<double>> corpus_segments(const std::vector<AudioClip>& clips) {
  std::vector<std::vector<double>> out;
  for (const auto& c : clips)
    for (auto& s : segment_signal(c.samples)) out.push_back(std::move(s.samples));
  return out;
}

std::string ckpt_name(std::uint64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03llu.ckpt", static_cast<unsigned long long>(epoch));
  return buf;
}

struct RunLog {
  std::ofstream steps, epochs;
  explicit RunLog(const fs::path& dir) : steps(dir / "steps.csv"), epochs(dir / "epochs.csv") {
    steps << "step,epoch,loss\n";
    epochs << "epoch,mean_loss,validation_lsd\n";
  }
};

TrainHooks<float> hooks_for(const RunConfig& run, RunLog& log) {
  TrainHooks<float> h;
  h.on_step = [&log](const StepRecord& r) {
    log.steps << r.step << ',' << r.epoch << ',' << format_double(r.loss) << '\n';
  };
  h.on_epoch = [&run, &log](const EpochRecord& e, const TrainState<float>& s) {
    log.epochs << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.validation_lsd) << '\n';
    std::cout << "epoch " << e.epoch << "  loss " << e.mean_loss;
    if (e.validation_lsd == e.validation_lsd) std::cout << "  val_lsd " << e.validation_lsd;
    std::cout << std::endl;
    if (run.checkpoint_every_epoch) state_checkpoint(s).save(fs::path(run.out) / ckpt_name(e.epoch));
  };
  return h;
}

TrainState<float> start_state(const ConfigFile& cfg, const std::string& resume) {
  if (!resume.empty()) return resume_train_state<float>(io::Checkpoint::load(resume), cfg.run);
  auto st = new_train_state<float>(cfg.effective_model(), cfg.run);
  if (!cfg.run.init.empty()) load_pretrained(st, io::Checkpoint::load(cfg.run.init));
  return st;
}

model::TUNet<float> load_model(const std::string& path) {
  const auto ckpt = io::Checkpoint::load(path);
  model::TUNet<float> net(io::model_config(ckpt));
  io::load_model_state(ckpt, net);
  return net;
}

AudioClip to_wideband_grid(AudioClip clip) {
  if (clip.sample_rate == 8000) {
    clip.samples = dsp::upsample2(clip.samples);
    clip.sample_rate = 16000;
  }
  return clip;
}

int cmd_degrade(const std::string& in, const std::string& out, const std::string& mode, std::uint64_t seed) {
  const auto aug = parse_augmentation(mode);
  fs::create_directories(out);
  Rng rng = make_rng(seed, {kDatasetTag});
  std::ofstream filters(fs::path(out) / "filters.csv");
  filters << "file,order,ripple_db,cutoff\n";
  for (const auto& p : list_wavs(in)) {
    const auto clip = load_wav(p);
    if (clip.sample_rate != 16000) throw std::runtime_error(p.string() + ": degrade expects 16 kHz input");
    const auto spec = aug == Augmentation::Single ? dsp::default_antialias_filter() : dsp::random_filter_spec(rng);
    save_wav({8000, dsp::downsample2(clip.samples, spec)}, fs::path(out) / p.filename());
    filters << p.filename().string() << ',' << spec.order << ',' << format_double(spec.ripple_db) << ','
            << format_double(spec.cutoff) << '\n';
  }
  return 0;
}

int cmd_pretrain(ConfigFile cfg, const std::string& resume) {
  cfg.run.task = "pretrain";
  cfg.run.validate();
  fs::create_directories(cfg.run.out);
  const auto segments = corpus_segments(load_corpus(cfg.run.data));
  std::cout << segments.size() << " segments" << std::endl;
  auto st = start_state(cfg, resume);
  RunLog log(cfg.run.out);
  pretrain_msm(st, segments, hooks_for(st.run, log));
  state_checkpoint(st).save(fs::path(cfg.run.out) / "final.ckpt");
  return 0;
}

int cmd_train(ConfigFile cfg, const std::string& resume) {
  cfg.run.task = "train";
  cfg.run.validate();
  fs::create_directories(cfg.run.out);
  Rng rng = make_rng(cfg.run.seed, {kDatasetTag});
  const auto train = make_bwe_dataset(load_corpus(cfg.run.data), cfg.run.augmentation, rng);
  std::vector<Segment> validation;
  if (!cfg.run.validation.empty()) {
    Rng vrng = make_rng(cfg.run.seed, {kDatasetTag, 1});
    validation = make_bwe_dataset(load_corpus(cfg.run.validation), Augmentation::Single, vrng).pairs;
  }
  std::cout << train.pairs.size() << " training pairs, " << validation.size() << " validation" << std::endl;
  auto st = start_state(cfg, resume);
  RunLog log(cfg.run.out);
  train_bwe(st, train.pairs, validation, hooks_for(st.run, log));
  state_checkpoint(st).save(fs::path(cfg.run.out) / "final.ckpt");
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& in, const std::string& out, bool streaming) {
  const auto net = load_model(model_path);
  const auto clip = to_wideband_grid(load_wav(in));
  const auto fn = model_chunk_function(net);
  std::vector<double> y;
  if (streaming) {
    // feed hop-sized blocks as a live source would
    stream::StreamProcessor proc(fn);
    const std::size_t hop = proc.config().hop;
    for (std::size_t i = 0; i < clip.samples.size(); i += hop) {
      const std::size_t n = std::min(hop, clip.samples.size() - i);
      auto part = proc.push(std::span<const double>(clip.samples).subspan(i, n));
      y.insert(y.end(), part.begin(), part.end());
    }
    auto tail = proc.flush();
    y.insert(y.end(), tail.begin(), tail.end());
    const std::size_t lat = proc.config().latency();
    y.erase(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(std::min(lat, y.size())));
    y.resize(clip.samples.size());
    auto ms = proc.chunk_latencies_ms();
    if (!ms.empty()) {
      std::sort(ms.begin(), ms.end());
      const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
      std::cout << ms.size() << " chunks, latency ms mean " << mean << " median " << ms[ms.size() / 2] << " max "
                << ms.back() << " (deadline 64)" << std::endl;
    }
  } else {
    y = stream::stream_process(fn, clip.samples);
  }
  save_wav({16000, y}, out);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test, const std::string& degradation,
             const std::string& report, std::uint64_t seed) {
  const auto net = load_model(model_path);
  std::vector<std::string> names;
  const auto files = load_corpus(test, &names);
  const auto rep = evaluate(model_chunk_function(net), files, names, parse_eval_degradation(degradation), seed);
  rep.write(report);
  const auto m = rep.mean();
  std::cout << "mean lsd " << m.lsd << "  lsd_hf " << m.lsd_hf << "  lsd_lf " << m.lsd_lf << "  si_sdr " << m.si_sdr
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TUNet bandwidth extension"};
  app.require_subcommand(1);

  std::string in, out, mode = "single";
  std::uint64_t seed = 0;
  auto* degrade = app.add_subcommand("degrade", "Low-pass and decimate 16 kHz files to 8 kHz");
  degrade->add_option("--in", in, "directory of 16 kHz wav files")->required();
  degrade->add_option("--out", out, "output directory")->required();
  degrade->add_option("--mode", mode, "single | multi")->check(CLI::IsMember({"single", "multi"}));
  degrade->add_option("--seed", seed);

  std::size_t synth_files = 8;
  double synth_seconds = 2.0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic speech-like 16 kHz corpus");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--files", synth_files);
  synth->add_option("--seconds", synth_seconds);
  synth->add_option("--seed", seed);

  std::string config, data, init, resume, validation, run_out;
  std::vector<std::string> overrides;
  auto add_train_opts = [&](CLI::App* c) {
    c->add_option("--data", data, "training corpus directory")->required();
    c->add_option("--config", config, "key = value config file");
    c->add_option("--out", run_out, "run directory (checkpoints, logs)");
    c->add_option("--resume", resume, "continue from a training checkpoint");
    c->add_option("--set", overrides, "override a config key, key=value");
  };
  auto* pretrain = app.add_subcommand("pretrain", "Masked speech modelling pretraining");
  add_train_opts(pretrain);
  auto* train = app.add_subcommand("train", "Bandwidth extension training");
  add_train_opts(train);
  train->add_option("--init", init, "initialise weights from a checkpoint");
  train->add_option("--validation", validation, "validation corpus directory");

  std::string model_path, wav_in, wav_out;
  bool streaming = false;
  auto* infer = app.add_subcommand("infer", "Extend one file");
  infer->add_option("--model", model_path)->required();
  infer->add_option("--in", wav_in)->required();
  infer->add_option("--out", wav_out)->required();
  infer->add_flag("--stream", streaming, "streaming processing with latency report");

  std::string test, degradation = "single", report;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Score a model on a degraded test set");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--test", test, "directory of 16 kHz reference files")->required();
  eval->add_option("--degrade", degradation)->check(CLI::IsMember({"single", "multi", "sinc"}));
  eval->add_option("--report", report, "output .csv or .json")->required();
  eval->add_option("--seed", eval_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      write_synthetic_corpus(out, synth_files, synth_seconds, seed);
      return 0;
    }
    if (*degrade) return cmd_degrade(in, out, mode, seed);
    if (*pretrain || *train) {
      auto cfg = read_config(config, overrides);
      cfg.run.data = data;
      if (!run_out.empty()) cfg.run.out = run_out;
      if (*train && !init.empty()) cfg.run.init = init;
      if (*train && !validation.empty()) cfg.run.validation = validation;
      return *pretrain ? cmd_pretrain(cfg, resume) : cmd_train(cfg, resume);
    }
    if (*infer) return cmd_infer(model_path, wav_in, wav_out, streaming);
    if (*eval) return cmd_eval(model_path, test, degradation, report, eval_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
