#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "rffi/config.hpp"
#include "rffi/dataset_io.hpp"
#include "rffi/dsp.hpp"
#include "rffi/errors.hpp"
#include "rffi/experiment.hpp"
#include "rffi/riei.hpp"
#include "rffi/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace rffi;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "configuration file (JSON)");
  sub->add_option("--seed", c.seed, "seed override")
      ->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_option("--out", c.out, "output directory override");
  sub->add_option("--threads", c.threads, "worker thread count");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_text(const Common& c) {
  return c.config_path.empty() ? std::string("{}") : read_file(c.config_path);
}

experiment::ExperimentConfig resolve(const Common& c) {
  experiment::ExperimentConfig cfg = config::parse_config(config_text(c));
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

void apply_threads(const Common& c) {
  if (c.threads < 0) throw ConfigError("--threads must be >= 1");
#ifdef _OPENMP
  if (c.threads > 0) omp_set_num_threads(c.threads);
#endif
}

// Wall-clock timestamps live only in this sidecar so every other artifact
// is byte-reproducible.
void write_meta(const std::string& out_dir, const std::string& command,
                double seconds) {
  if (out_dir.empty()) return;
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  nlohmann::json doc{{"command", command},
                     {"finished_utc", stamp},
                     {"duration_s", seconds}};
  std::ofstream out(out_dir + "/run_meta.json", std::ios::binary);
  out << doc.dump(2) << "\n";
}

struct Timer {
  std::chrono::steady_clock::time_point t0 =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  }
};

void require_out(const Common& c, const std::string& out_dir,
                 const char* cmd) {
  if (out_dir.empty())
    throw ConfigError(std::string(cmd) + ": output directory required "
                                         "(--out or config \"out\")");
}

int cmd_synth(const Common& c) {
  Timer timer;
  experiment::ExperimentConfig cfg = resolve(c);
  require_out(c, cfg.out_dir, "synth");
  synth::SynthConfig scfg = cfg.synth;
  scfg.seed = RngStream::derive(cfg.seed, "experiment.synth").next_u64();
  const synth::Dataset ds = synth::synthesize_dataset(scfg);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/dataset.rffd";
  io::save_dataset(path, ds);
  std::printf("synth: wrote %zu frames (M=%zu K=%zu L=%zu) to %s\n",
              ds.total(), ds.M, ds.K, ds.L, path.c_str());
  write_meta(cfg.out_dir, "synth", timer.seconds());
  return 0;
}

int cmd_preprocess(const Common& c) {
  Timer timer;
  if (c.config_path.empty())
    throw ConfigError("preprocess: --config is required");
  const std::string text = read_file(c.config_path);
  const config::PreprocessJob job = config::parse_preprocess(text);
  experiment::ExperimentConfig cfg = config::parse_config(text);
  if (!c.out.empty()) cfg.out_dir = c.out;
  require_out(c, cfg.out_dir, "preprocess");
  if (job.emitter < 1 || static_cast<std::size_t>(job.emitter) > job.emitters)
    throw ConfigError("preprocess: emitter label out of range");
  if (job.receiver < 1 ||
      static_cast<std::size_t>(job.receiver) > job.receivers)
    throw ConfigError("preprocess: receiver label out of range");

  std::ifstream in(job.input, std::ios::binary);
  if (!in) throw InvalidInputError("preprocess: cannot open " + job.input);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0)
    throw InvalidInputError(
        "preprocess: input is not a whole number of f32 I/Q pairs");
  CVec stream(bytes.size() / 8);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    float re, im;
    std::memcpy(&re, bytes.data() + 8 * i, 4);
    std::memcpy(&im, bytes.data() + 8 * i + 4, 4);
    stream[i] = {static_cast<double>(re), static_cast<double>(im)};
  }
  if (job.lowpass_cutoff > 0.0)
    stream = dsp::lowpass_filter(stream, job.lowpass_cutoff,
                                 job.lowpass_taps);

  std::vector<CVec> frames;
  if (job.energy_detect) {
    for (const auto& [start, end] :
         dsp::energy_detect(stream, job.window, job.threshold_factor)) {
      const CVec segment(stream.begin() + static_cast<std::ptrdiff_t>(start),
                         stream.begin() + static_cast<std::ptrdiff_t>(end));
      for (auto& f : dsp::frame_stream(segment, job.frame_len, job.hop))
        frames.push_back(std::move(f));
    }
  } else {
    frames = dsp::frame_stream(stream, job.frame_len, job.hop);
  }
  if (frames.empty())
    throw InvalidInputError("preprocess: no full frames detected");

  synth::Dataset ds;
  ds.M = job.emitters;
  ds.K = job.receivers;
  ds.L = job.frame_len;
  ds.per_receiver.resize(ds.K);
  for (auto& f : frames) {
    synth::LabeledSample s;
    s.frame = job.normalize ? dsp::normalize_rms(f) : std::move(f);
    s.emitter = job.emitter;
    s.receiver = job.receiver;
    ds.per_receiver[static_cast<std::size_t>(job.receiver) - 1].push_back(
        std::move(s));
  }
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/dataset.rffd";
  io::save_dataset(path, ds);
  std::printf("preprocess: wrote %zu frames to %s\n", frames.size(),
              path.c_str());
  write_meta(cfg.out_dir, "preprocess", timer.seconds());
  return 0;
}

int cmd_train(const Common& c, bool federated) {
  Timer timer;
  experiment::ExperimentConfig cfg = resolve(c);
  cfg.scenario = federated ? experiment::Scenario::Federated
                           : experiment::Scenario::Centralized;
  const experiment::MetricsReport report = experiment::run_experiment(cfg);
  std::printf("%s: final accuracy %.4f, last5 %.4f +- %.4f, independence "
              "%.4f, proxy divergence %.4f\n",
              federated ? "fedtrain" : "train",
              report.history.empty() ? 0.0 : report.history.back(),
              report.last5_mean, report.last5_std, report.diag.independence,
              report.diag.proxy_divergence);
  write_meta(cfg.out_dir, federated ? "fedtrain" : "train", timer.seconds());
  return 0;
}

std::vector<const synth::LabeledSample*> all_samples(
    const synth::Dataset& ds) {
  std::vector<const synth::LabeledSample*> out;
  out.reserve(ds.total());
  for (const auto& rx : ds.per_receiver)
    for (const auto& s : rx) out.push_back(&s);
  return out;
}

int cmd_eval(const Common& c, const std::string& model_path,
             const std::string& data_path) {
  Timer timer;
  experiment::ExperimentConfig cfg = resolve(c);
  riei::RieiParams model = riei::load_checkpoint(model_path);
  const synth::Dataset ds = io::load_dataset(data_path);

  std::string csv = "receiver,frames,accuracy\n";
  double total_correct = 0.0;
  std::size_t total_n = 0;
  std::vector<riei::FeaturePair> pairs;
  nlohmann::json per_rx = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.K; ++k) {
    if (ds.per_receiver[k].empty()) continue;
    std::vector<const synth::LabeledSample*> ptrs;
    std::vector<synth::LabeledSample> normalized;
    normalized.reserve(ds.per_receiver[k].size());
    for (const auto& s : ds.per_receiver[k]) {
      synth::LabeledSample t = s;
      if (cfg.preproc.normalize) t.frame = dsp::normalize_rms(t.frame);
      normalized.push_back(std::move(t));
    }
    for (const auto& s : normalized) ptrs.push_back(&s);
    const riei::Batch batch = riei::make_batch(ptrs);
    const double acc = riei::accuracy(model, batch);
    csv += std::to_string(k + 1) + "," + std::to_string(ptrs.size()) + "," +
           std::to_string(acc) + "\n";
    per_rx.push_back({{"receiver", k + 1},
                      {"frames", ptrs.size()},
                      {"accuracy", acc}});
    total_correct += acc * static_cast<double>(ptrs.size());
    total_n += ptrs.size();

    const Tensor feats = riei::fed_forward(model, batch.x, Mode::Infer);
    for (auto& p : riei::split_features(model.arch, feats))
      pairs.push_back(std::move(p));
  }
  if (total_n == 0) throw InvalidInputError("eval: dataset has no records");
  const double acc = total_correct / static_cast<double>(total_n);
  const double indep = experiment::independence_score(pairs);
  std::printf("eval: accuracy %.4f over %zu frames, independence %.4f\n", acc,
              total_n, indep);
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    nlohmann::json doc{{"accuracy", acc},
                       {"frames", total_n},
                       {"independence", indep},
                       {"per_receiver", per_rx}};
    std::ofstream out(cfg.out_dir + "/eval.json", std::ios::binary);
    out << doc.dump(2) << "\n";
    std::ofstream ocsv(cfg.out_dir + "/eval.csv", std::ios::binary);
    ocsv << csv;
    write_meta(cfg.out_dir, "eval", timer.seconds());
  }
  return 0;
}

int cmd_sweep(const Common& c) {
  Timer timer;
  if (c.config_path.empty()) throw ConfigError("sweep: --config is required");
  const std::string text = read_file(c.config_path);
  experiment::ExperimentConfig cfg = config::parse_config(text);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  const experiment::SweepKind kind = config::parse_sweep_kind(text);
  const experiment::SweepGrid grid = config::parse_sweep_grid(text);
  const auto points = experiment::run_sweep(kind, cfg, grid);
  const std::string csv = experiment::sweep_csv(points);
  if (cfg.out_dir.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/sweep.csv", std::ios::binary);
    out << csv;
    std::printf("sweep: wrote %zu points to %s/sweep.csv\n", points.size(),
                cfg.out_dir.c_str());
    write_meta(cfg.out_dir, "sweep", timer.seconds());
  }
  return 0;
}

int cmd_export(const Common& c, const std::string& model_path,
               const std::string& data_path) {
  Timer timer;
  experiment::ExperimentConfig cfg = resolve(c);
  require_out(c, cfg.out_dir, "export-features");
  riei::RieiParams model = riei::load_checkpoint(model_path);
  synth::Dataset ds = io::load_dataset(data_path);
  if (cfg.preproc.normalize)
    for (auto& rx : ds.per_receiver)
      for (auto& s : rx) s.frame = dsp::normalize_rms(s.frame);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/features.csv";
  experiment::export_features(model, all_samples(ds), path);
  std::printf("export-features: wrote %zu rows to %s\n", ds.total(),
              path.c_str());
  write_meta(cfg.out_dir, "export-features", timer.seconds());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-receiver RF fingerprint identification laboratory"};
  app.require_subcommand(1);

  Common c_synth, c_pre, c_train, c_fed, c_eval, c_sweep, c_export;
  std::string eval_model, eval_data, export_model, export_data;

  add_common(app.add_subcommand("synth", "synthesize a dataset file"),
             c_synth);
  add_common(app.add_subcommand("preprocess",
                                "ingest a raw I/Q stream into a dataset file"),
             c_pre);
  add_common(app.add_subcommand("train", "centralized training run"),
             c_train);
  add_common(app.add_subcommand("fedtrain", "federated training run"), c_fed);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval_cmd, c_eval);
  eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset path")->required();
  add_common(app.add_subcommand("sweep", "grid sweep (isr, sampling_rate, "
                                         "compression)"),
             c_sweep);
  CLI::App* export_cmd =
      app.add_subcommand("export-features", "dump learned features as CSV");
  add_common(export_cmd, c_export);
  export_cmd->add_option("--model", export_model, "checkpoint path")
      ->required();
  export_cmd->add_option("--data", export_data, "dataset path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand("synth")) {
      apply_threads(c_synth);
      return cmd_synth(c_synth);
    }
    if (app.got_subcommand("preprocess")) {
      apply_threads(c_pre);
      return cmd_preprocess(c_pre);
    }
    if (app.got_subcommand("train")) {
      apply_threads(c_train);
      return cmd_train(c_train, false);
    }
    if (app.got_subcommand("fedtrain")) {
      apply_threads(c_fed);
      return cmd_train(c_fed, true);
    }
    if (app.got_subcommand("eval")) {
      apply_threads(c_eval);
      return cmd_eval(c_eval, eval_model, eval_data);
    }
    if (app.got_subcommand("sweep")) {
      apply_threads(c_sweep);
      return cmd_sweep(c_sweep);
    }
    if (app.got_subcommand("export-features")) {
      apply_threads(c_export);
      return cmd_export(c_export, export_model, export_data);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const InvalidInputError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const TrainingDivergedError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
