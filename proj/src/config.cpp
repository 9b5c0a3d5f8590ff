#include "rffi/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rffi/errors.hpp"

namespace rffi::config {

using nlohmann::json;
using experiment::Ablation;
using experiment::ExperimentConfig;
using experiment::Scenario;
using experiment::SweepGrid;
using experiment::SweepKind;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) fail(path, "unknown key '" + item.key() + "'");
  }
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

// ISR values admit the strings "inf" / "-inf".
double as_double_inf(const json& v, const std::string& path) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(path, "expected a number or \"inf\"/\"-inf\"");
  }
  return as_double(v, path);
}

std::size_t as_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<double>() < 0)
    fail(path, "expected a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<double>() >= 0))
    fail(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

synth::Range as_range(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2)
    fail(path, "expected [lo, hi]");
  synth::Range r{as_double(v[0], path), as_double(v[1], path)};
  if (r.lo > r.hi) fail(path, "lo must be <= hi");
  return r;
}

void parse_ranges(const json& obj, const std::string& path,
                  synth::ImpairmentRanges& out) {
  if (obj.contains("a3")) out.a3 = as_range(obj["a3"], path + ".a3");
  if (obj.contains("a5")) out.a5 = as_range(obj["a5"], path + ".a5");
  if (obj.contains("gain")) out.gain = as_range(obj["gain"], path + ".gain");
  if (obj.contains("phase"))
    out.phase = as_range(obj["phase"], path + ".phase");
  if (obj.contains("cfo")) out.cfo = as_range(obj["cfo"], path + ".cfo");
  if (obj.contains("phase0"))
    out.phase0 = as_range(obj["phase0"], path + ".phase0");
}

void parse_synth(const json& obj, synth::SynthConfig& out) {
  expect_keys(obj, "synth",
              {"emitters", "receivers", "frames_per_pair", "frame_len",
               "snr_db", "modulation", "samples_per_symbol", "bfsk_fdev",
               "min_gap", "fir_len", "fir_jitter", "device_seed",
               "emitter_ranges",
               "receiver_ranges", "channel_taps"});
  if (obj.contains("emitters")) out.M = as_count(obj["emitters"], "synth.emitters");
  if (obj.contains("device_seed"))
    out.device_seed = as_u64(obj["device_seed"], "synth.device_seed");
  if (obj.contains("receivers"))
    out.K = as_count(obj["receivers"], "synth.receivers");
  if (obj.contains("frames_per_pair"))
    out.frames_per_pair = as_count(obj["frames_per_pair"], "synth.frames_per_pair");
  if (obj.contains("frame_len"))
    out.L = as_count(obj["frame_len"], "synth.frame_len");
  if (obj.contains("snr_db"))
    out.snr_db = as_double_inf(obj["snr_db"], "synth.snr_db");
  if (obj.contains("modulation")) {
    const std::string m = as_string(obj["modulation"], "synth.modulation");
    if (m == "bfsk")
      out.modulation = synth::Modulation::BFSK;
    else if (m == "qpsk")
      out.modulation = synth::Modulation::QPSK;
    else
      fail("synth.modulation", "expected \"bfsk\" or \"qpsk\"");
  }
  if (obj.contains("samples_per_symbol"))
    out.samples_per_symbol =
        as_count(obj["samples_per_symbol"], "synth.samples_per_symbol");
  if (obj.contains("bfsk_fdev"))
    out.bfsk_fdev = as_double(obj["bfsk_fdev"], "synth.bfsk_fdev");
  if (obj.contains("min_gap"))
    out.min_gap = as_double(obj["min_gap"], "synth.min_gap");
  if (obj.contains("fir_len"))
    out.fir_len = as_count(obj["fir_len"], "synth.fir_len");
  if (obj.contains("fir_jitter"))
    out.fir_jitter = as_double(obj["fir_jitter"], "synth.fir_jitter");
  if (obj.contains("emitter_ranges")) {
    expect_keys(obj["emitter_ranges"], "synth.emitter_ranges",
                {"a3", "a5", "gain", "phase", "cfo", "phase0"});
    parse_ranges(obj["emitter_ranges"], "synth.emitter_ranges",
                 out.emitter_ranges);
  }
  if (obj.contains("receiver_ranges")) {
    expect_keys(obj["receiver_ranges"], "synth.receiver_ranges",
                {"a3", "a5", "gain", "phase", "cfo", "phase0", "nf", "dc"});
    parse_ranges(obj["receiver_ranges"], "synth.receiver_ranges",
                 out.receiver_ranges);
    const json& rr = obj["receiver_ranges"];
    if (rr.contains("nf"))
      out.receiver_nf = as_range(rr["nf"], "synth.receiver_ranges.nf");
    if (rr.contains("dc"))
      out.receiver_dc = as_range(rr["dc"], "synth.receiver_ranges.dc");
  }
  if (obj.contains("channel_taps")) {
    const json& taps = obj["channel_taps"];
    if (!taps.is_array() || taps.empty())
      fail("synth.channel_taps", "expected a non-empty list of [re, im]");
    out.channel.taps.clear();
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const std::string path = "synth.channel_taps[" + std::to_string(i) + "]";
      if (!taps[i].is_array() || taps[i].size() != 2)
        fail(path, "expected [re, im]");
      out.channel.taps.emplace_back(as_double(taps[i][0], path),
                                    as_double(taps[i][1], path));
    }
  }
}

void parse_train(const json& obj, riei::TrainConfig& out, bool* batch_given) {
  expect_keys(obj, "train",
              {"lambda1", "lambda2", "eta_f", "eta_e", "eta_r", "batch",
               "epochs", "warmup_epochs", "epsilon_log", "epsilon_norm",
               "aggregation", "joint_sgd"});
  if (obj.contains("lambda1"))
    out.lambda1 = as_double(obj["lambda1"], "train.lambda1");
  if (obj.contains("lambda2"))
    out.lambda2 = as_double(obj["lambda2"], "train.lambda2");
  if (obj.contains("eta_f")) out.eta_F = as_double(obj["eta_f"], "train.eta_f");
  if (obj.contains("eta_e")) out.eta_E = as_double(obj["eta_e"], "train.eta_e");
  if (obj.contains("eta_r")) out.eta_R = as_double(obj["eta_r"], "train.eta_r");
  if (obj.contains("batch")) {
    out.batch = as_count(obj["batch"], "train.batch");
    *batch_given = true;
  }
  if (obj.contains("epochs"))
    out.epochs = as_count(obj["epochs"], "train.epochs");
  if (obj.contains("warmup_epochs"))
    out.warmup_epochs = as_count(obj["warmup_epochs"], "train.warmup_epochs");
  if (obj.contains("epsilon_log"))
    out.epsilon_log = as_double(obj["epsilon_log"], "train.epsilon_log");
  if (obj.contains("epsilon_norm"))
    out.epsilon_norm = as_double(obj["epsilon_norm"], "train.epsilon_norm");
  if (obj.contains("aggregation")) {
    const std::string a = as_string(obj["aggregation"], "train.aggregation");
    if (a == "mean")
      out.aggregation = riei::Aggregation::Mean;
    else if (a == "sum")
      out.aggregation = riei::Aggregation::Sum;
    else
      fail("train.aggregation", "expected \"mean\" or \"sum\"");
  }
  if (obj.contains("joint_sgd"))
    out.joint_sgd = as_bool(obj["joint_sgd"], "train.joint_sgd");
}

fed::Compressor parse_compressor(const json& v, const std::string& path) {
  const std::string c = as_string(v, path);
  if (c == "none") return fed::Compressor::None;
  if (c == "sign") return fed::Compressor::Sign;
  if (c == "noisy_sign_gaussian") return fed::Compressor::NoisySignGaussian;
  if (c == "noisy_sign_uniform") return fed::Compressor::NoisySignUniform;
  fail(path,
       "expected \"none\", \"sign\", \"noisy_sign_gaussian\" or "
       "\"noisy_sign_uniform\"");
}

void parse_fed(const json& obj, fed::FedConfig& out) {
  expect_keys(obj, "fed",
              {"rounds", "local_epochs", "compressor", "sigma", "server_eta"});
  if (obj.contains("rounds")) out.T = as_count(obj["rounds"], "fed.rounds");
  if (obj.contains("local_epochs"))
    out.local_epochs = as_count(obj["local_epochs"], "fed.local_epochs");
  if (obj.contains("compressor"))
    out.compressor = parse_compressor(obj["compressor"], "fed.compressor");
  if (obj.contains("sigma")) out.sigma = as_double(obj["sigma"], "fed.sigma");
  if (obj.contains("server_eta"))
    out.server_eta = as_double(obj["server_eta"], "fed.server_eta");
}

dsp::InterferenceKind parse_kind(const json& v, const std::string& path) {
  const std::string k = as_string(v, path);
  if (k == "narrowband") return dsp::InterferenceKind::NarrowbandHopping;
  if (k == "broadband") return dsp::InterferenceKind::BroadbandGaussian;
  fail(path, "expected \"narrowband\" or \"broadband\"");
}

void parse_interference(const json& obj, dsp::InterferenceConfig& out) {
  expect_keys(obj, "interference", {"kind", "isr_db", "n_bins", "n_select"});
  if (obj.contains("kind"))
    out.kind = parse_kind(obj["kind"], "interference.kind");
  if (obj.contains("isr_db"))
    out.isr_db = as_double_inf(obj["isr_db"], "interference.isr_db");
  if (obj.contains("n_bins"))
    out.n_bins = as_count(obj["n_bins"], "interference.n_bins");
  if (obj.contains("n_select"))
    out.n_select = as_count(obj["n_select"], "interference.n_select");
}

json parse_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  return doc;
}

const char* scenario_name(Scenario s) {
  return s == Scenario::Centralized ? "centralized" : "federated";
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::BaselineCE: return "baseline_ce";
    case Ablation::IEOnly: return "ie_only";
    case Ablation::MIOnly: return "mi_only";
  }
  return "full";
}

const char* compressor_name(fed::Compressor c) {
  switch (c) {
    case fed::Compressor::None: return "none";
    case fed::Compressor::Sign: return "sign";
    case fed::Compressor::NoisySignGaussian: return "noisy_sign_gaussian";
    case fed::Compressor::NoisySignUniform: return "noisy_sign_uniform";
  }
  return "none";
}

json range_json(const synth::Range& r) { return json::array({r.lo, r.hi}); }

json ranges_json(const synth::ImpairmentRanges& r) {
  return json{{"a3", range_json(r.a3)},     {"a5", range_json(r.a5)},
              {"gain", range_json(r.gain)}, {"phase", range_json(r.phase)},
              {"cfo", range_json(r.cfo)},   {"phase0", range_json(r.phase0)}};
}

json isr_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  const json doc = parse_document(json_text);
  expect_keys(doc, "top level",
              {"scenario", "seed", "out", "dataset", "held_out_receiver",
               "ablation", "test_frames", "resample_ratios", "synth",
               "preproc", "train", "fed", "interference", "sweep",
               "preprocess"});

  ExperimentConfig cfg;
  cfg.synth = synth::calibrated_scenario();
  cfg.train.epochs = 30;
  cfg.fed.T = 30;

  if (doc.contains("scenario")) {
    const std::string s = as_string(doc["scenario"], "scenario");
    if (s == "centralized")
      cfg.scenario = Scenario::Centralized;
    else if (s == "federated")
      cfg.scenario = Scenario::Federated;
    else
      fail("scenario", "expected \"centralized\" or \"federated\"");
  }
  if (doc.contains("seed")) cfg.seed = as_u64(doc["seed"], "seed");
  if (doc.contains("out")) cfg.out_dir = as_string(doc["out"], "out");
  if (doc.contains("dataset"))
    cfg.dataset_path = as_string(doc["dataset"], "dataset");
  if (doc.contains("synth")) parse_synth(doc["synth"], cfg.synth);

  bool batch_given = false;
  if (doc.contains("train")) parse_train(doc["train"], cfg.train, &batch_given);
  if (!batch_given && cfg.scenario == Scenario::Federated) cfg.train.batch = 16;
  if (doc.contains("fed")) parse_fed(doc["fed"], cfg.fed);

  if (doc.contains("preproc")) {
    expect_keys(doc["preproc"], "preproc", {"normalize"});
    if (doc["preproc"].contains("normalize"))
      cfg.preproc.normalize =
          as_bool(doc["preproc"]["normalize"], "preproc.normalize");
  }
  cfg.held_out_receiver = cfg.synth.K;
  if (doc.contains("held_out_receiver"))
    cfg.held_out_receiver =
        as_count(doc["held_out_receiver"], "held_out_receiver");
  if (doc.contains("ablation")) {
    const std::string a = as_string(doc["ablation"], "ablation");
    if (a == "full")
      cfg.ablation = Ablation::Full;
    else if (a == "baseline_ce")
      cfg.ablation = Ablation::BaselineCE;
    else if (a == "ie_only")
      cfg.ablation = Ablation::IEOnly;
    else if (a == "mi_only")
      cfg.ablation = Ablation::MIOnly;
    else
      fail("ablation",
           "expected \"full\", \"baseline_ce\", \"ie_only\" or \"mi_only\"");
  }
  if (doc.contains("test_frames"))
    cfg.test_frames = as_count(doc["test_frames"], "test_frames");
  if (doc.contains("resample_ratios")) {
    const json& r = doc["resample_ratios"];
    if (!r.is_array()) fail("resample_ratios", "expected a list");
    for (std::size_t i = 0; i < r.size(); ++i)
      cfg.resample_ratios.push_back(as_double(
          r[i], "resample_ratios[" + std::to_string(i) + "]"));
  }
  if (doc.contains("interference")) {
    cfg.has_interference = true;
    parse_interference(doc["interference"], cfg.interference);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_json(const ExperimentConfig& cfg) {
  json doc;
  doc["scenario"] = scenario_name(cfg.scenario);
  if (!cfg.dataset_path.empty()) doc["dataset"] = cfg.dataset_path;
  doc["held_out_receiver"] = cfg.held_out_receiver;
  doc["ablation"] = ablation_name(cfg.ablation);
  doc["test_frames"] = cfg.test_frames;
  if (!cfg.resample_ratios.empty())
    doc["resample_ratios"] = cfg.resample_ratios;
  doc["preproc"] = json{{"normalize", cfg.preproc.normalize}};

  const synth::SynthConfig& sc = cfg.synth;
  json taps = json::array();
  for (const auto& t : sc.channel.taps)
    taps.push_back(json::array({t.real(), t.imag()}));
  json rr = ranges_json(sc.receiver_ranges);
  rr["nf"] = range_json(sc.receiver_nf);
  rr["dc"] = range_json(sc.receiver_dc);
  doc["synth"] = json{
      {"emitters", sc.M},
      {"receivers", sc.K},
      {"frames_per_pair", sc.frames_per_pair},
      {"frame_len", sc.L},
      {"snr_db", isr_json(sc.snr_db)},
      {"modulation", sc.modulation == synth::Modulation::BFSK ? "bfsk" : "qpsk"},
      {"samples_per_symbol", sc.samples_per_symbol},
      {"bfsk_fdev", sc.bfsk_fdev},
      {"min_gap", sc.min_gap},
      {"fir_len", sc.fir_len},
      {"fir_jitter", sc.fir_jitter},
      {"device_seed", sc.device_seed},
      {"emitter_ranges", ranges_json(sc.emitter_ranges)},
      {"receiver_ranges", rr},
      {"channel_taps", taps}};

  const riei::TrainConfig& tc = cfg.train;
  doc["train"] = json{
      {"lambda1", tc.lambda1},
      {"lambda2", tc.lambda2},
      {"eta_f", tc.eta_F},
      {"eta_e", tc.eta_E},
      {"eta_r", tc.eta_R},
      {"batch", tc.batch},
      {"epochs", tc.epochs},
      {"warmup_epochs", tc.warmup_epochs},
      {"epsilon_log", tc.epsilon_log},
      {"epsilon_norm", tc.epsilon_norm},
      {"aggregation",
       tc.aggregation == riei::Aggregation::Mean ? "mean" : "sum"},
      {"joint_sgd", tc.joint_sgd}};

  if (cfg.scenario == Scenario::Federated) {
    const fed::FedConfig& fc = cfg.fed;
    doc["fed"] = json{{"rounds", fc.T},
                      {"local_epochs", fc.local_epochs},
                      {"compressor", compressor_name(fc.compressor)},
                      {"sigma", fc.sigma},
                      {"server_eta", fc.server_eta}};
  }
  if (cfg.has_interference) {
    doc["interference"] =
        json{{"kind", cfg.interference.kind ==
                              dsp::InterferenceKind::NarrowbandHopping
                          ? "narrowband"
                          : "broadband"},
             {"isr_db", isr_json(cfg.interference.isr_db)},
             {"n_bins", cfg.interference.n_bins},
             {"n_select", cfg.interference.n_select}};
  }
  return doc.dump();
}

std::uint64_t config_fingerprint(const ExperimentConfig& cfg) {
  const std::string s = canonical_json(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

SweepKind parse_sweep_kind(const std::string& json_text) {
  const json doc = parse_document(json_text);
  if (!doc.contains("sweep")) throw ConfigError("config: missing sweep block");
  const json& sw = doc["sweep"];
  expect_keys(sw, "sweep", {"kind", "kinds", "isr_db", "ratios", "compressors"});
  if (!sw.contains("kind")) fail("sweep.kind", "required");
  const std::string k = as_string(sw["kind"], "sweep.kind");
  if (k == "isr") return SweepKind::ISR;
  if (k == "sampling_rate") return SweepKind::SamplingRate;
  if (k == "compression") return SweepKind::Compression;
  fail("sweep.kind", "expected \"isr\", \"sampling_rate\" or \"compression\"");
}

SweepGrid parse_sweep_grid(const std::string& json_text) {
  const json doc = parse_document(json_text);
  if (!doc.contains("sweep")) throw ConfigError("config: missing sweep block");
  const json& sw = doc["sweep"];
  expect_keys(sw, "sweep", {"kind", "kinds", "isr_db", "ratios", "compressors"});
  SweepGrid grid;
  if (sw.contains("kinds")) {
    const json& ks = sw["kinds"];
    if (!ks.is_array()) fail("sweep.kinds", "expected a list");
    for (std::size_t i = 0; i < ks.size(); ++i)
      grid.kinds.push_back(
          parse_kind(ks[i], "sweep.kinds[" + std::to_string(i) + "]"));
  }
  if (sw.contains("isr_db")) {
    const json& xs = sw["isr_db"];
    if (!xs.is_array()) fail("sweep.isr_db", "expected a list");
    for (std::size_t i = 0; i < xs.size(); ++i)
      grid.isr_db.push_back(
          as_double_inf(xs[i], "sweep.isr_db[" + std::to_string(i) + "]"));
  }
  if (sw.contains("ratios")) {
    const json& xs = sw["ratios"];
    if (!xs.is_array()) fail("sweep.ratios", "expected a list");
    for (std::size_t i = 0; i < xs.size(); ++i)
      grid.ratios.push_back(
          as_double(xs[i], "sweep.ratios[" + std::to_string(i) + "]"));
  }
  if (sw.contains("compressors")) {
    const json& xs = sw["compressors"];
    if (!xs.is_array()) fail("sweep.compressors", "expected a list");
    for (std::size_t i = 0; i < xs.size(); ++i)
      grid.compressors.push_back(parse_compressor(
          xs[i], "sweep.compressors[" + std::to_string(i) + "]"));
  }
  return grid;
}

PreprocessJob parse_preprocess(const std::string& json_text) {
  const json doc = parse_document(json_text);
  if (!doc.contains("preprocess"))
    throw ConfigError("config: missing preprocess block");
  const json& pp = doc["preprocess"];
  expect_keys(pp, "preprocess",
              {"input", "emitter", "receiver", "emitters", "receivers",
               "frame_len", "hop", "energy_detect", "window",
               "threshold_factor", "lowpass_cutoff", "lowpass_taps",
               "normalize"});
  PreprocessJob job;
  if (!pp.contains("input")) fail("preprocess.input", "required");
  job.input = as_string(pp["input"], "preprocess.input");
  if (pp.contains("emitter"))
    job.emitter = static_cast<int>(as_count(pp["emitter"], "preprocess.emitter"));
  if (pp.contains("receiver"))
    job.receiver =
        static_cast<int>(as_count(pp["receiver"], "preprocess.receiver"));
  job.emitters = static_cast<std::size_t>(job.emitter);
  job.receivers = static_cast<std::size_t>(job.receiver);
  if (pp.contains("emitters"))
    job.emitters = as_count(pp["emitters"], "preprocess.emitters");
  if (pp.contains("receivers"))
    job.receivers = as_count(pp["receivers"], "preprocess.receivers");
  if (pp.contains("frame_len"))
    job.frame_len = as_count(pp["frame_len"], "preprocess.frame_len");
  job.hop = job.frame_len;
  if (pp.contains("hop")) job.hop = as_count(pp["hop"], "preprocess.hop");
  if (pp.contains("energy_detect"))
    job.energy_detect = as_bool(pp["energy_detect"], "preprocess.energy_detect");
  if (pp.contains("window"))
    job.window = as_count(pp["window"], "preprocess.window");
  if (pp.contains("threshold_factor"))
    job.threshold_factor =
        as_double(pp["threshold_factor"], "preprocess.threshold_factor");
  if (pp.contains("lowpass_cutoff"))
    job.lowpass_cutoff =
        as_double(pp["lowpass_cutoff"], "preprocess.lowpass_cutoff");
  if (pp.contains("lowpass_taps"))
    job.lowpass_taps = as_count(pp["lowpass_taps"], "preprocess.lowpass_taps");
  if (pp.contains("normalize"))
    job.normalize = as_bool(pp["normalize"], "preprocess.normalize");
  return job;
}

} // namespace rffi::config
