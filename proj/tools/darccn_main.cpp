// darccn: causal speech enhancement toolkit.
// One binary, six subcommands: enhance, mix, train, eval, inspect, bench.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "darccn/bench.hpp"
#include "darccn/common.hpp"
#include "darccn/config.hpp"
#include "darccn/data.hpp"
#include "darccn/metrics.hpp"
#include "darccn/model.hpp"
#include "darccn/registry.hpp"
#include "darccn/signal.hpp"
#include "darccn/training.hpp"
#include "darccn/wav.hpp"

namespace fs = std::filesystem;
using namespace darccn;

namespace {

struct ModelFlags {
  std::string preset = "full";
  std::string config_path;
  std::vector<std::string> sets;
};

void add_model_flags(CLI::App* cmd, ModelFlags& mf) {
  cmd->add_option("--preset", mf.preset, "Base architecture preset: full, desk, or micro")
      ->capture_default_str();
  cmd->add_option("--config", mf.config_path, "key=value config file layered over the preset");
  cmd->add_option("--set", mf.sets, "Inline key=value override, repeatable");
}

nn::ModelConfig resolve_model_config(const ModelFlags& mf, nn::TrainConfig* tc = nullptr) {
  nn::ModelConfig mc = config::preset_by_name(mf.preset);
  config::KvMap kv;
  if (!mf.config_path.empty()) kv = config::parse_kv_file(mf.config_path);
  for (const auto& a : mf.sets) config::parse_assignment(kv, a);
  config::apply_settings(mc, tc, kv);
  return mc;
}

void print_model_config(const nn::ModelConfig& mc) {
  std::cout << "config: sample_rate=" << mc.sample_rate << " win_len=" << mc.win_len
            << " stages=" << mc.stages << " scale=" << mc.scale
            << " glu_blocks=" << mc.glu_blocks << " glu_width=" << mc.glu_width
            << " glu_kernel=" << mc.glu_kernel << "\n";
}

void print_train_config(const nn::TrainConfig& tc) {
  std::cout << "train:  epochs=" << tc.epochs << " batch_size=" << tc.batch_size
            << " lr=" << tc.lr << " seed=" << tc.seed << "\n";
}

nn::Darccn model_from_weights(const std::string& path) {
  nn::WeightsFile wf = nn::load_weights(path);
  nn::ModelConfig mc = nn::config_from_entries(wf.config);
  nn::Darccn model(mc);
  nn::restore(wf, model.registry(), true);  // checkpoints carry optimizer state too
  return model;
}

// Pairs follow the `<stem>_noisy.wav` / `<stem>_clean.wav` convention.
std::vector<std::pair<fs::path, fs::path>> find_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir.string());
  const std::string tag = "_noisy.wav";
  std::vector<fs::path> noisy;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > tag.size() && name.compare(name.size() - tag.size(), tag.size(), tag) == 0)
      noisy.push_back(entry.path());
  }
  std::sort(noisy.begin(), noisy.end());
  if (noisy.empty()) throw io_error("no *_noisy.wav files in " + dir.string());
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& n : noisy) {
    std::string stem = n.filename().string();
    stem.replace(stem.size() - tag.size(), tag.size(), "_clean.wav");
    const fs::path c = n.parent_path() / stem;
    if (!fs::exists(c)) throw io_error("missing clean sibling for " + n.string());
    pairs.emplace_back(n, c);
  }
  return pairs;
}

std::vector<nn::TrainPair> load_pairs(const fs::path& dir, long sample_rate) {
  std::vector<nn::TrainPair> out;
  for (const auto& [np, cp] : find_pairs(dir)) {
    signal::Waveform n = signal::read_wav(np.string());
    signal::Waveform c = signal::read_wav(cp.string());
    if (n.sample_rate != sample_rate || c.sample_rate != sample_rate)
      throw std::invalid_argument("sample rate mismatch under " + dir.string());
    if (n.samples.size() != c.samples.size())
      throw std::invalid_argument("length mismatch: " + np.string());
    out.push_back({std::move(n.samples), std::move(c.samples)});
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_enhance(const std::string& in, const std::string& out, const std::string& weights,
                bool streaming) {
  nn::Darccn model = model_from_weights(weights);
  print_model_config(model.config());
  signal::Waveform wav = signal::read_wav(in);
  signal::Waveform result;
  result.sample_rate = wav.sample_rate;
  if (streaming) {
    if (wav.sample_rate != model.config().sample_rate)
      throw std::invalid_argument("expected " + std::to_string(model.config().sample_rate) +
                                  " Hz input, got " + std::to_string(wav.sample_rate));
    nn::EnhanceSession session(model);
    result.samples = session.feed(wav.samples.data(), wav.samples.size());
    std::vector<double> tail = session.finish();
    result.samples.insert(result.samples.end(), tail.begin(), tail.end());
    result.samples.resize(wav.samples.size(), 0.0);
  } else {
    result = nn::enhance_utterance(model, wav);
  }
  signal::write_wav(out, result);
  std::cout << "mode: " << (streaming ? "streaming" : "batch") << "\n"
            << "wrote " << out << " (" << result.samples.size() << " samples)\n";
  return 0;
}

int cmd_mix(const std::string& manifest, const std::string& out_dir, std::uint64_t seed,
            double seconds) {
  std::cout << "config: manifest=" << manifest << " out=" << out_dir << " seed=" << seed
            << " seconds=" << seconds << "\n";
  data::MixOptions opt;
  opt.seed = seed;
  opt.fix_seconds = seconds;
  data::DatasetReport rep = data::build_dataset(manifest, out_dir, opt);
  for (const auto& r : rep.rows) {
    if (r.ok)
      std::cout << "row\t" << r.row << "\tok\t" << std::fixed << std::setprecision(3)
                << r.requested_snr << "\t" << r.measured_snr << "\n";
    else
      std::cout << "row\t" << r.row << "\tfailed\t" << r.message << "\n";
  }
  std::cout << "rows=" << rep.total << " ok=" << rep.succeeded << " failed=" << rep.failed
            << "\n";
  return rep.failed == 0 ? 0 : 2;
}

int cmd_train(const std::string& data_dir, const std::string& val_dir, const ModelFlags& mf,
              const std::string& out_dir, bool resume) {
  nn::TrainConfig tc;
  nn::ModelConfig mc = resolve_model_config(mf, &tc);
  tc.out_dir = out_dir;
  tc.log = &std::cout;
  print_model_config(mc);
  print_train_config(tc);
  nn::Darccn model(mc);
  std::vector<nn::TrainPair> train = load_pairs(data_dir, mc.sample_rate);
  std::vector<nn::TrainPair> val = load_pairs(val_dir, mc.sample_rate);
  std::cout << "pairs: train=" << train.size() << " val=" << val.size() << "\n";
  nn::Trainer trainer(model, tc);
  nn::TrainResult res = trainer.run(train, val, resume);
  std::cout << "done: epochs_run=" << res.epochs_run << " best_val=" << res.best_val
            << (res.stopped_early ? " (stopped early)" : "") << "\n";
  return 0;
}

int cmd_eval(const std::string& pairs_dir, const std::string& weights,
             const std::string& report_path) {
  nn::Darccn model = model_from_weights(weights);
  print_model_config(model.config());
  const auto pairs = find_pairs(pairs_dir);
  struct Row {
    std::string name;
    double stoi_in, sdr_in, snr_in, stoi_out, sdr_out, snr_out;
  };
  std::vector<Row> rows;
  for (const auto& [np, cp] : pairs) {
    signal::Waveform noisy = signal::read_wav(np.string());
    signal::Waveform clean = signal::read_wav(cp.string());
    signal::Waveform enhanced = nn::enhance_utterance(model, noisy);
    Row r;
    r.name = np.filename().string();
    r.stoi_in = metrics::stoi(clean.samples, noisy.samples);
    r.sdr_in = metrics::si_sdr(noisy.samples, clean.samples);
    r.snr_in = metrics::measure_snr(clean.samples, noisy.samples);
    r.stoi_out = metrics::stoi(clean.samples, enhanced.samples);
    r.sdr_out = metrics::si_sdr(enhanced.samples, clean.samples);
    r.snr_out = metrics::measure_snr(clean.samples, enhanced.samples);
    rows.push_back(r);
  }
  Row mean{"mean", 0, 0, 0, 0, 0, 0};
  for (const auto& r : rows) {
    mean.stoi_in += r.stoi_in;
    mean.sdr_in += r.sdr_in;
    mean.snr_in += r.snr_in;
    mean.stoi_out += r.stoi_out;
    mean.sdr_out += r.sdr_out;
    mean.snr_out += r.snr_out;
  }
  const double n = static_cast<double>(rows.size());
  mean.stoi_in /= n;
  mean.sdr_in /= n;
  mean.snr_in /= n;
  mean.stoi_out /= n;
  mean.sdr_out /= n;
  mean.snr_out /= n;

  std::cout << std::left << std::setw(28) << "pair" << std::right << std::setw(10) << "stoi_in"
            << std::setw(10) << "sdr_in" << std::setw(10) << "snr_in" << std::setw(10)
            << "stoi_out" << std::setw(10) << "sdr_out" << std::setw(10) << "snr_out" << "\n";
  auto line = [](const Row& r) {
    std::cout << std::left << std::setw(28) << r.name << std::right << std::fixed
              << std::setprecision(4) << std::setw(10) << r.stoi_in << std::setw(10) << r.sdr_in
              << std::setw(10) << r.snr_in << std::setw(10) << r.stoi_out << std::setw(10)
              << r.sdr_out << std::setw(10) << r.snr_out << "\n";
  };
  for (const auto& r : rows) line(r);
  line(mean);

  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw io_error("cannot write report: " + report_path);
    f << "pair,stoi_noisy,si_sdr_noisy,snr_noisy,stoi_enhanced,si_sdr_enhanced,snr_enhanced\n";
    auto csv = [&f](const Row& r) {
      f << r.name << ',' << std::setprecision(9) << r.stoi_in << ',' << r.sdr_in << ','
        << r.snr_in << ',' << r.stoi_out << ',' << r.sdr_out << ',' << r.snr_out << "\n";
    };
    for (const auto& r : rows) csv(r);
    csv(mean);
    std::cout << "wrote " << report_path << "\n";
  }
  return 0;
}

int cmd_inspect(const ModelFlags& mf) {
  nn::ModelConfig mc = resolve_model_config(mf);
  print_model_config(mc);
  nn::Darccn model(mc);
  const auto stats = model.layer_stats();
  std::size_t width = 12;
  for (const auto& s : stats) width = std::max(width, s.name.size());
  std::cout << std::left << std::setw(static_cast<int>(width) + 2) << "layer" << std::right
            << std::setw(12) << "params" << std::setw(14) << "macs/stage" << "\n";
  long p_total = 0, m_stage = 0;
  for (const auto& s : stats) {
    std::cout << std::left << std::setw(static_cast<int>(width) + 2) << s.name << std::right
              << std::setw(12) << s.params << std::setw(14) << s.macs << "\n";
    p_total += s.params;
    m_stage += s.macs;
  }
  std::cout << std::left << std::setw(static_cast<int>(width) + 2) << "total" << std::right
            << std::setw(12) << p_total << std::setw(14) << m_stage << "\n";
  std::cout << "stages: " << mc.stages << "\n"
            << "macs per frame, all stages: " << model.macs_per_frame() << "\n";

  // machine-readable block, one record per line
  std::cout << "layer\tparams\tmacs\n";
  for (const auto& s : stats) std::cout << s.name << '\t' << s.params << '\t' << s.macs << "\n";
  std::cout << "total_per_stage\t" << p_total << '\t' << m_stage << "\n";
  std::cout << "total\t" << model.total_params() << '\t' << model.macs_per_frame() << "\n";
  return 0;
}

int cmd_bench(const std::string& weights, const ModelFlags& mf, long utterances, long trials,
              double seconds, std::uint64_t seed, const std::string& report_path) {
  nn::Darccn model = weights.empty() ? nn::Darccn(resolve_model_config(mf))
                                     : model_from_weights(weights);
  print_model_config(model.config());
  bench::BenchConfig bc;
  bc.utterances = utterances;
  bc.trials = trials;
  bc.utt_seconds = seconds;
  bc.seed = seed;
  bench::LatencyReport rep = bench::bench_latency(model, bc);
  std::cout << std::fixed << std::setprecision(4)
            << "utterances:           " << rep.utterances << "\n"
            << "trials:               " << rep.trials << "\n"
            << "frames per utterance: " << rep.frames_per_utterance << "\n"
            << "frame budget (ms):    " << rep.frame_budget_ms << "\n"
            << "mean frame time (ms): " << rep.mean_ms << "\n"
            << "p50 (ms):             " << rep.p50_ms << "\n"
            << "p95 (ms):             " << rep.p95_ms << "\n"
            << "p99 (ms):             " << rep.p99_ms << "\n"
            << "hardware:             " << rep.hardware << "\n"
            << "timings include the full per-frame pipeline (analysis, model, synthesis)\n";
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw io_error("cannot write report: " + report_path);
    f << "key,value\n"
      << "utterances," << rep.utterances << "\n"
      << "trials," << rep.trials << "\n"
      << "frames_per_utterance," << rep.frames_per_utterance << "\n"
      << "frame_budget_ms," << std::setprecision(6) << rep.frame_budget_ms << "\n"
      << "mean_ms," << rep.mean_ms << "\n"
      << "p50_ms," << rep.p50_ms << "\n"
      << "p95_ms," << rep.p95_ms << "\n"
      << "p99_ms," << rep.p99_ms << "\n"
      << "hardware," << rep.hardware << "\n";
    std::cout << "wrote " << report_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"darccn: causal monaural speech enhancement"};
  app.require_subcommand(1);

  // enhance
  auto* enhance = app.add_subcommand("enhance", "Denoise one WAV file");
  std::string en_in, en_out, en_weights;
  bool en_streaming = false;
  enhance->add_option("--in", en_in, "Input 16 kHz WAV")->required();
  enhance->add_option("--out", en_out, "Output WAV path")->required();
  enhance->add_option("--weights", en_weights, "Weights file")->required();
  enhance->add_flag("--streaming", en_streaming, "Frame-by-frame path instead of batch");

  // mix
  auto* mix = app.add_subcommand("mix", "Build a noisy/clean dataset from a manifest");
  mix->alias("mix-dataset");
  std::string mx_manifest, mx_out;
  std::uint64_t mx_seed = 1;
  double mx_seconds = 8.0;
  mix->add_option("--manifest", mx_manifest, "CSV: clean,noise,snr_db,out_noisy,out_clean")
      ->required();
  mix->add_option("--out", mx_out, "Output directory")->required();
  mix->add_option("--seed", mx_seed, "Mixing seed")->capture_default_str();
  mix->add_option("--seconds", mx_seconds, "Fixed utterance length in seconds")
      ->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train on paired WAV directories");
  std::string tr_data, tr_val, tr_out;
  bool tr_resume = false;
  ModelFlags tr_mf;
  train->add_option("--data", tr_data, "Directory of *_noisy.wav / *_clean.wav pairs")
      ->required();
  train->add_option("--val", tr_val, "Validation pair directory")->required();
  train->add_option("--out", tr_out, "Checkpoint directory")->required();
  train->add_flag("--resume", tr_resume, "Continue from checkpoint in --out");
  add_model_flags(train, tr_mf);

  // eval
  auto* eval = app.add_subcommand("eval", "Score enhancement on paired WAVs");
  eval->alias("evaluate");
  std::string ev_pairs, ev_weights, ev_report;
  eval->add_option("--pairs", ev_pairs, "Directory of *_noisy.wav / *_clean.wav pairs")
      ->required();
  eval->add_option("--weights", ev_weights, "Weights file")->required();
  eval->add_option("--report", ev_report, "Write per-pair CSV here");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Print layer table, parameters, and MACs");
  ModelFlags in_mf;
  add_model_flags(inspect, in_mf);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Per-frame streaming latency benchmark");
  std::string bn_weights, bn_report;
  long bn_utts = 500, bn_trials = 5;
  double bn_seconds = 1.0;
  std::uint64_t bn_seed = 99;
  ModelFlags bn_mf;
  bench_cmd->add_option("--weights", bn_weights, "Weights file (default: fresh model)");
  bench_cmd->add_option("--utterances", bn_utts, "Utterances per trial")->capture_default_str();
  bench_cmd->add_option("--trials", bn_trials, "Trial count")->capture_default_str();
  bench_cmd->add_option("--seconds", bn_seconds, "Utterance length")->capture_default_str();
  bench_cmd->add_option("--seed", bn_seed, "Utterance seed")->capture_default_str();
  bench_cmd->add_option("--report", bn_report, "Write CSV report here");
  add_model_flags(bench_cmd, bn_mf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*enhance) return cmd_enhance(en_in, en_out, en_weights, en_streaming);
    if (*mix) return cmd_mix(mx_manifest, mx_out, mx_seed, mx_seconds);
    if (*train) return cmd_train(tr_data, tr_val, tr_mf, tr_out, tr_resume);
    if (*eval) return cmd_eval(ev_pairs, ev_weights, ev_report);
    if (*inspect) return cmd_inspect(in_mf);
    if (*bench_cmd) return cmd_bench(bn_weights, bn_mf, bn_utts, bn_trials, bn_seconds, bn_seed,
                                     bn_report);
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const divergence_error& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const shape_error& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 3;
  } catch (const protocol_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
