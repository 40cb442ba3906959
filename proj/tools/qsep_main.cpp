#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qsep/eval.hpp"
#include "qsep/latent.hpp"
#include "qsep/train.hpp"
#include "qsep/wav.hpp"

namespace {

using namespace qsep;

int thread_bound() {
  const char* env = std::getenv("QSEP_THREADS");
  if (!env || !*env) return 1;
  int v = std::atoi(env);
  return v > 0 ? v : 1;
}

// key=value lines; '#' starts a comment, blank lines skipped
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config file: missing '=' in: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

ModelConfig config_from(const std::string& preset,
                        const std::string& config_path) {
  ModelConfig cfg =
      preset == "paper" ? ModelConfig::paper() : ModelConfig::desk();
  if (preset != "paper" && preset != "desk")
    throw std::runtime_error("unknown preset " + preset);
  if (!config_path.empty()) {
    // overlay the file's pairs onto the preset, then reparse the lot
    std::map<std::string, std::string> kv;
    std::istringstream base(cfg.serialize());
    std::string line;
    while (std::getline(base, line)) {
      const std::size_t eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const auto& [k, v] : read_config_file(config_path)) kv[k] = v;
    std::ostringstream merged;
    for (const auto& [k, v] : kv) merged << k << '=' << v << '\n';
    cfg = ModelConfig::deserialize(merged.str());
  }
  cfg.validate();
  return cfg;
}

Waveform read_audio(const std::string& path, int expected_rate) {
  return read_wav(path, expected_rate);
}

int cmd_gen_data(const std::string& out, const std::string& preset,
                 const std::string& config_path, uint64_t seed, int classes,
                 int tracks, double track_seconds) {
  ModelConfig cfg = config_from(preset, config_path);
  std::vector<ClassSpec> specs = default_classes();
  if (classes < 1) throw std::runtime_error("--classes must be >= 1");
  // cycle the timbre families beyond the built-in four
  while (static_cast<int>(specs.size()) < classes) {
    ClassSpec extra = specs[specs.size() % 4];
    extra.id = static_cast<int>(specs.size()) + 1;
    extra.name = "extra_" + std::to_string(extra.id);
    specs.push_back(extra);
  }
  specs.resize(classes);
  write_stem_dir(out, specs, tracks, track_seconds, cfg.sample_rate, seed);
  std::cout << "wrote " << classes << " classes x " << tracks << " tracks to "
            << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out,
              const std::string& preset, const std::string& config_path,
              uint64_t seed, long iterations, long checkpoint_every,
              const std::string& resume) {
  ModelConfig cfg = config_from(preset, config_path);
  StemPool pool = load_stem_dir(data_dir, cfg.sample_rate,
                                cfg.segment_seconds);
  Hyper hyper;
  TrainOptions opts;
  opts.iterations = iterations;
  opts.checkpoint_every = checkpoint_every;
  opts.seed = seed;
  opts.out_dir = out;
  opts.resume = resume;
  TrainSummary sum = train_loop(cfg, hyper, pool, opts);
  std::cout << "trained " << sum.iterations_run << " iterations; checkpoint "
            << sum.checkpoint_path << "\n";
  return 0;
}

LatentVec conditioning_vector(const Checkpoint& ck, const std::string& query,
                              const std::string& cls, bool retrieve,
                              const std::string& data_dir) {
  LatentLibrary lib;
  StemPool pool;
  if (!cls.empty() || retrieve) {
    if (data_dir.empty())
      throw std::runtime_error("--data-dir is required for class means");
    pool = load_stem_dir(data_dir, ck.config.sample_rate,
                         ck.config.segment_seconds);
    lib = build_class_library(ck.params, ck.config, pool);
  }
  if (!query.empty()) {
    Waveform q = read_audio(query, ck.config.sample_rate);
    LatentVec z = encode_waveform(ck.params, ck.config, q);
    if (retrieve) return retrieve_nearest(z, lib).z;
    return z;
  }
  if (cls.empty())
    throw std::runtime_error("need --query or --class to pick a source");
  for (std::size_t c = 0; c < pool.class_names.size(); ++c)
    if (pool.class_names[c] == cls)
      for (const LatentEntry& e : lib.entries)
        if (e.label == static_cast<int>(c)) return e.z;
  throw std::runtime_error("unknown class label " + cls);
}

int cmd_separate(const std::string& checkpoint, const std::string& mixture,
                 const std::string& out, const std::string& query,
                 const std::string& cls, bool retrieve, int rounds,
                 const std::string& data_dir) {
  Checkpoint ck = load_checkpoint(checkpoint);
  Waveform mix = read_audio(mixture, ck.config.sample_rate);
  LatentVec z = conditioning_vector(ck, query, cls, retrieve, data_dir);
  Waveform est;
  if (rounds > 1) {
    Waveform padded = mix;
    if (static_cast<int>(mix.samples.size()) < ck.config.segment_samples())
      padded = fit_length(mix, ck.config.segment_samples());
    IterativeResult res =
        iterative_separate(ck.params, ck.config, padded, z, rounds);
    est = res.estimate;
    est.samples.resize(mix.samples.size());
  } else {
    est = separate_with_vector(ck.params, ck.config, mix, z);
  }
  write_wav(out, est, WavEncoding::kFloat32);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_encode(const std::string& checkpoint, const std::string& audio,
               const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  Waveform w = read_audio(audio, ck.config.sample_rate);
  LatentVec z = encode_waveform(ck.params, ck.config, w);
  char buf[64];
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", z[i]);
    std::cout << (i ? "," : "") << buf;
  }
  std::cout << "\n";
  if (!out.empty()) export_latents({{0, z}}, out);
  return 0;
}

int cmd_interpolate(const std::string& checkpoint, const std::string& query_a,
                    const std::string& query_b, const std::string& mixture,
                    int steps, const std::string& out_dir) {
  if (steps < 1) throw std::runtime_error("--steps must be >= 1");
  Checkpoint ck = load_checkpoint(checkpoint);
  Waveform mix = read_audio(mixture, ck.config.sample_rate);
  LatentVec za = encode_waveform(ck.params, ck.config,
                                 read_audio(query_a, ck.config.sample_rate));
  LatentVec zb = encode_waveform(ck.params, ck.config,
                                 read_audio(query_b, ck.config.sample_rate));
  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < steps; ++i) {
    const double alpha =
        steps == 1 ? 0.0
                   : static_cast<double>(i) / static_cast<double>(steps - 1);
    LatentVec z = slerp(za, zb, alpha);
    Waveform est = separate_with_vector(ck.params, ck.config, mix, z);
    char name[32];
    std::snprintf(name, sizeof name, "interp_%02d.wav", i);
    write_wav((std::filesystem::path(out_dir) / name).string(), est,
              WavEncoding::kFloat32);
  }
  std::cout << "wrote " << steps << " files to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& mode_name, int count, uint64_t seed,
             int rounds, const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  StemPool pool = load_stem_dir(data_dir, ck.config.sample_rate,
                                ck.config.segment_seconds);
  EvalMode mode;
  if (mode_name == "mean-vector") mode = EvalMode::kMeanVector;
  else if (mode_name == "ground-truth-query") mode = EvalMode::kGroundTruthQuery;
  else if (mode_name == "retrieved") mode = EvalMode::kRetrieved;
  else if (mode_name == "iterative") mode = EvalMode::kIterative;
  else throw std::runtime_error("unknown --mode " + mode_name);
  LatentLibrary lib = build_class_library(ck.params, ck.config, pool);
  std::vector<EvalCase> cases =
      make_eval_set(pool, ck.config.spectro(), count, seed);
  EvalReport rep = evaluate(ck.params, ck.config, cases, lib, mode, rounds,
                            pool.class_names);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + out);
    f << rep.tsv();
  }
  std::cout << rep.table();
  return 0;
}

int cmd_export_latents(const std::string& checkpoint,
                       const std::string& data_dir, const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  StemPool pool = load_stem_dir(data_dir, ck.config.sample_rate,
                                ck.config.segment_seconds);
  std::vector<std::pair<int, LatentVec>> rows;
  for (int c = 0; c < pool.classes(); ++c)
    for (const Waveform& seg : pool.segments[c])
      rows.emplace_back(c, encode_waveform(ck.params, ck.config, seg));
  export_latents(rows, out);
  std::cout << "wrote " << rows.size() << " latents to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  (void)thread_bound();  // parsed for interface compatibility; one worker

  CLI::App app{"query-by-example music source separation"};
  app.require_subcommand(1);

  std::string preset = "desk", config_path, data_dir, out, resume;
  std::string checkpoint, mixture, query, query_a, query_b, cls, mode_name;
  uint64_t seed = 1;
  long iterations = 1000, checkpoint_every = 0;
  int classes = 4, tracks = 8, steps = 5, rounds = 1, count = 10;
  double track_seconds = 12.0;
  bool retrieve = false;

  CLI::App* gen = app.add_subcommand("gen-data", "write synthetic stems");
  gen->add_option("--out", out, "output stem directory")->required();
  gen->add_option("--preset", preset, "paper or desk")
      ->capture_default_str();
  gen->add_option("--config", config_path, "key=value overrides");
  gen->add_option("--seed", seed, "generation seed")->capture_default_str();
  gen->add_option("--classes", classes, "number of classes")
      ->capture_default_str();
  gen->add_option("--tracks", tracks, "tracks per class")
      ->capture_default_str();
  gen->add_option("--track-seconds", track_seconds, "seconds per track")
      ->capture_default_str();

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data-dir", data_dir, "stem directory")->required();
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--preset", preset, "paper or desk")
      ->capture_default_str();
  train->add_option("--config", config_path, "key=value overrides");
  train->add_option("--seed", seed, "run seed")->capture_default_str();
  train->add_option("--iterations", iterations, "total iterations")
      ->capture_default_str();
  train->add_option("--checkpoint-every", checkpoint_every,
                    "intermediate checkpoint period (0: only final)")
      ->capture_default_str();
  train->add_option("--resume", resume, "checkpoint to continue from");

  CLI::App* sep = app.add_subcommand("separate", "extract a source");
  sep->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  sep->add_option("--mixture", mixture, "mixture WAV")->required();
  sep->add_option("--out", out, "output WAV")->required();
  sep->add_option("--query", query, "query WAV");
  sep->add_option("--class", cls, "class name for mean conditioning");
  sep->add_flag("--retrieve", retrieve,
                "replace the query encoding with its nearest class mean");
  sep->add_option("--rounds", rounds, "re-encoding rounds (1: plain)")
      ->capture_default_str();
  sep->add_option("--data-dir", data_dir, "stems for class means");

  CLI::App* enc = app.add_subcommand("encode", "encode audio to a latent");
  enc->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  enc->add_option("--audio", query, "input WAV")->required();
  enc->add_option("--out", out, "optional CSV path");

  CLI::App* interp = app.add_subcommand("interpolate",
                                        "sweep between two queries");
  interp->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  interp->add_option("--query-a", query_a, "first query WAV")->required();
  interp->add_option("--query-b", query_b, "second query WAV")->required();
  interp->add_option("--mixture", mixture, "mixture WAV")->required();
  interp->add_option("--steps", steps, "number of interpolation points")
      ->capture_default_str();
  interp->add_option("--out", out, "output directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "score a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  ev->add_option("--data-dir", data_dir, "stem directory")->required();
  ev->add_option("--mode", mode_name,
                 "mean-vector, ground-truth-query, retrieved, or iterative")
      ->default_val("mean-vector");
  ev->add_option("--count", count, "number of test mixtures")
      ->capture_default_str();
  ev->add_option("--seed", seed, "test set seed")->capture_default_str();
  ev->add_option("--rounds", rounds, "rounds for iterative mode")
      ->default_val(2);
  ev->add_option("--out", out, "optional TSV path");

  CLI::App* exl = app.add_subcommand("export-latents",
                                     "encode every stem segment to CSV");
  exl->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  exl->add_option("--data-dir", data_dir, "stem directory")->required();
  exl->add_option("--out", out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(out, preset, config_path, seed, classes, tracks,
                          track_seconds);
    if (train->parsed())
      return cmd_train(data_dir, out, preset, config_path, seed, iterations,
                       checkpoint_every, resume);
    if (sep->parsed())
      return cmd_separate(checkpoint, mixture, out, query, cls, retrieve,
                          rounds, data_dir);
    if (enc->parsed()) return cmd_encode(checkpoint, query, out);
    if (interp->parsed())
      return cmd_interpolate(checkpoint, query_a, query_b, mixture, steps,
                             out);
    if (ev->parsed())
      return cmd_eval(checkpoint, data_dir, mode_name, count, seed, rounds,
                      out);
    if (exl->parsed()) return cmd_export_latents(checkpoint, data_dir, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
