// Command-line front end: dataset generation, training, decomposition of
// image files, evaluation sweeps and latency benchmarking.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fmd/cnn.hpp"
#include "fmd/decompose.hpp"
#include "fmd/field_synth.hpp"
#include "fmd/fiber_modes.hpp"
#include "fmd/io.hpp"
#include "fmd/metrics.hpp"

namespace fs = std::filesystem;

namespace {

fmd::Dataset generate_dataset(const fmd::RunConfig& cfg, int count,
                              std::uint64_t seed, double noise_sigma) {
  const fmd::ModeBasis basis = cfg.basis();
  fmd::Dataset ds;
  ds.fiber = cfg.fiber;
  ds.grid = cfg.grid();
  ds.n_modes = cfg.n_modes;
  for (int i = 0; i < count; ++i) {
    fmd::TrainingSample s = fmd::make_sample(basis, seed, i, noise_sigma);
    ds.labels.push_back(std::move(s.label));
    ds.images.push_back(std::move(s.image));
  }
  return ds;
}

int cmd_gen(const std::string& config_path, int count, std::uint64_t seed,
            double noise_sigma, const std::string& out_path) {
  const fmd::RunConfig cfg = fmd::load_run_config(config_path);
  fmd::write_dataset(out_path, generate_dataset(cfg, count, seed, noise_sigma));
  std::cout << "wrote " << count << " samples to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& history_path) {
  const fmd::RunConfig cfg = fmd::load_run_config(config_path);
  const fmd::ModeBasis basis = cfg.basis();
  fmd::Network net(cfg.network());
  net.init_weights(cfg.train.seed);

  // fixed held-out set, scored by full decomposition correlation
  std::vector<fmd::TrainingSample> holdout;
  const std::uint64_t holdout_seed = cfg.train.seed ^ 0x686f6c646f757421ULL;
  const int holdout_count = std::min(cfg.holdout_size, 64);
  for (int i = 0; i < holdout_count; ++i) {
    holdout.push_back(fmd::make_sample(basis, holdout_seed, i, 0.0));
  }
  auto eval = [&](const fmd::Network& n) {
    double sum = 0.0;
    for (const auto& s : holdout) {
      sum += fmd::decompose(n, basis, s.image).correlation;
    }
    return sum / holdout.size();
  };

  const auto history = fmd::train(net, basis, cfg.train, eval);
  fmd::save_checkpoint(out_path, net);

  std::ofstream hs(history_path);
  if (!hs) throw fmd::ParseError("cannot open history CSV: " + history_path);
  hs << "epoch,loss,holdout_correlation\n";
  for (const auto& e : history) {
    hs << e.epoch << "," << e.mean_loss << "," << e.holdout_correlation << "\n";
    std::cout << "epoch " << e.epoch << "  loss " << e.mean_loss
              << "  holdout C " << e.holdout_correlation << "\n";
  }
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

int cmd_decompose(const std::string& checkpoint_path,
                  const std::string& config_path, const std::string& input_path,
                  const std::string& out_path, bool write_recon) {
  const fmd::Network net = fmd::load_checkpoint(checkpoint_path);
  const fmd::RunConfig cfg = fmd::load_run_config(config_path);
  const int n_modes = (net.config().output_dim + 1) / 2;
  const int res = net.config().input_resolution;
  const fmd::ModeBasis basis = fmd::sample_basis(
      cfg.fiber, {res, cfg.window_factor * cfg.fiber.core_radius_um}, n_modes);

  std::vector<std::string> files;
  if (fs::is_directory(input_path)) {
    for (const auto& entry : fs::directory_iterator(input_path)) {
      if (entry.path().extension() == ".pgm") {
        files.push_back(entry.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw fmd::ParseError("no .pgm files in " + input_path);
    }
  } else if (fs::is_regular_file(input_path)) {
    files.push_back(input_path);
  } else {
    throw fmd::ParseError("input path does not exist: " + input_path);
  }

  // decompose everything first so a failure never leaves a partial CSV
  std::ostringstream csv;
  csv << "file";
  for (int i = 1; i <= n_modes; ++i) csv << ",rho2_" << i;
  for (int i = 1; i <= n_modes; ++i) csv << ",theta_" << i;
  csv << ",correlation,latency_ms\n";
  double corr_sum = 0.0;
  for (const auto& file : files) {
    const fmd::BeamImage frame =
        fmd::preprocess_frame(fmd::read_pgm(file), res);
    const fmd::DecompositionResult r = fmd::decompose(net, basis, frame);
    csv << fs::path(file).filename().string();
    for (double w : r.coefficients.weights) csv << "," << w;
    for (int i = 0; i < n_modes; ++i) csv << "," << r.coefficients.phase(i);
    csv << "," << r.correlation << "," << r.elapsed_ms << "\n";
    corr_sum += r.correlation;
    if (write_recon) {
      const fs::path base = fs::path(out_path).parent_path();
      const std::string stem = fs::path(file).stem().string();
      fmd::write_pgm((base / ("recon_" + stem + ".pgm")).string(),
                     r.reconstructed);
      fmd::write_pgm((base / ("residual_" + stem + ".pgm")).string(),
                     fmd::residual(frame, r.reconstructed));
    }
  }
  std::ofstream os(out_path);
  if (!os) throw fmd::ParseError("cannot open output CSV: " + out_path);
  os << csv.str();
  std::cout << "decomposed " << files.size() << " frame(s), mean correlation "
            << corr_sum / files.size() << "\n";
  return 0;
}

struct SweepRow {
  std::string value;
  double mean_correlation;
  fmd::ErrorReport errors;
};

void write_sweep_csv(const std::string& out_path, const std::string& sweep,
                     const std::vector<SweepRow>& rows, int n_modes) {
  std::ofstream os(out_path);
  if (!os) throw fmd::ParseError("cannot open output CSV: " + out_path);
  os << sweep << ",mean_correlation,mean_weight_error_pct,mean_phase_error_pct";
  for (int i = 1; i <= n_modes; ++i) os << ",drho2_" << i << "_pct";
  for (int i = 2; i <= n_modes; ++i) os << ",dtheta_" << i << "_pct";
  os << "\n";
  for (const auto& row : rows) {
    os << row.value << "," << row.mean_correlation << ","
       << row.errors.mean_weight_error << "," << row.errors.mean_phase_error;
    for (double e : row.errors.per_mode_weight_error) os << "," << e;
    for (double e : row.errors.per_mode_phase_error) os << "," << e;
    os << "\n";
  }
}

SweepRow evaluate_point(const fmd::Network& net, const fmd::ModeBasis& basis,
                        int count, std::uint64_t seed, double noise_sigma) {
  std::vector<fmd::ModeCoefficients> predicted, truth;
  double corr_sum = 0.0;
  for (int i = 0; i < count; ++i) {
    fmd::TrainingSample s = fmd::make_sample(basis, seed, i, 0.0);
    fmd::BeamImage input = s.image;
    if (noise_sigma > 0.0) {
      auto rng = fmd::sample_rng(seed ^ 0x6e6f697365ULL, i);
      input = fmd::max_normalize(fmd::add_noise(input, noise_sigma, rng));
    }
    const fmd::DecompositionResult r = fmd::decompose(net, basis, input);
    // score the reconstruction against the clean ground truth
    corr_sum += fmd::correlation(s.image, r.reconstructed);
    predicted.push_back(r.coefficients);
    truth.push_back(s.coeffs);
  }
  SweepRow row;
  row.mean_correlation = corr_sum / count;
  row.errors = fmd::error_stats(predicted, truth);
  return row;
}

int cmd_eval(const std::vector<std::string>& checkpoint_paths,
             const std::string& config_path, const std::string& sweep,
             int count, std::uint64_t seed, const std::string& out_path) {
  const fmd::RunConfig cfg = fmd::load_run_config(config_path);
  std::vector<SweepRow> rows;
  int report_modes = 0;

  if (sweep == "noise") {
    const fmd::Network net = fmd::load_checkpoint(checkpoint_paths.front());
    const int n_modes = (net.config().output_dim + 1) / 2;
    const int res = net.config().input_resolution;
    const fmd::ModeBasis basis = fmd::sample_basis(
        cfg.fiber, {res, cfg.window_factor * cfg.fiber.core_radius_um},
        n_modes);
    report_modes = n_modes;
    for (double sigma : {0.0, 0.08, 0.16, 0.32}) {
      SweepRow row = evaluate_point(net, basis, count, seed, sigma);
      row.value = std::to_string(sigma);
      rows.push_back(std::move(row));
    }
  } else if (sweep == "mode_count" || sweep == "resolution") {
    // one checkpoint per sweep point; mode count and input resolution are
    // taken from each checkpoint itself
    for (const auto& path : checkpoint_paths) {
      const fmd::Network net = fmd::load_checkpoint(path);
      const int n_modes = (net.config().output_dim + 1) / 2;
      const int res = net.config().input_resolution;
      const fmd::ModeBasis basis = fmd::sample_basis(
          cfg.fiber, {res, cfg.window_factor * cfg.fiber.core_radius_um},
          n_modes);
      report_modes = std::max(report_modes, n_modes);
      SweepRow row = evaluate_point(net, basis, count, seed, 0.0);
      row.value = sweep == "mode_count" ? std::to_string(n_modes)
                                        : std::to_string(res);
      rows.push_back(std::move(row));
    }
    // pad per-mode columns to the widest network in the sweep
    for (auto& row : rows) {
      row.errors.per_mode_weight_error.resize(report_modes, 0.0);
      row.errors.per_mode_phase_error.resize(report_modes - 1, 0.0);
    }
  } else {
    throw fmd::ParseError("unknown sweep: " + sweep +
                          " (expected mode_count, noise or resolution)");
  }
  write_sweep_csv(out_path, sweep, rows, report_modes);
  std::cout << "wrote " << rows.size() << " sweep rows to " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& checkpoint_path,
              const std::string& config_path, int count, std::uint64_t seed) {
  const fmd::Network net = fmd::load_checkpoint(checkpoint_path);
  const fmd::RunConfig cfg = fmd::load_run_config(config_path);
  const int n_modes = (net.config().output_dim + 1) / 2;
  const int res = net.config().input_resolution;
  const fmd::ModeBasis basis = fmd::sample_basis(
      cfg.fiber, {res, cfg.window_factor * cfg.fiber.core_radius_um}, n_modes);

  double total_ms = 0.0, forward_ms = 0.0, disambig_ms = 0.0;
  for (int i = 0; i < count; ++i) {
    const fmd::TrainingSample s = fmd::make_sample(basis, seed, i, 0.0);
    const fmd::DecompositionResult r = fmd::decompose(net, basis, s.image);
    total_ms += r.elapsed_ms;
    forward_ms += r.forward_ms;
    disambig_ms += r.disambiguation_ms;
  }
  std::cout << "total_ms=" << total_ms << " mean_ms=" << total_ms / count
            << " forward_ms=" << forward_ms / count
            << " disambiguation_ms=" << disambig_ms / count << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-mode fiber mode decomposition toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint_path, input_path, history_path;
  std::vector<std::string> checkpoint_paths;
  std::string sweep = "noise";
  std::uint64_t seed = 1;
  int count = 1000;
  double noise_sigma = 0.0;
  bool write_recon = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "run config file")->required();
  gen->add_option("--count", count, "number of samples");
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--noise-sigma", noise_sigma, "multiplicative noise level");
  gen->add_option("--out", out_path, "output dataset path")->required();

  auto* train = app.add_subcommand("train", "train a network");
  train->add_option("--config", config_path, "run config file")->required();
  train->add_option("--out", out_path, "output checkpoint path")->required();
  train->add_option("--history", history_path, "training history CSV");

  auto* dec = app.add_subcommand("decompose", "decompose PGM frame(s)");
  dec->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  dec->add_option("--config", config_path, "run config file")->required();
  dec->add_option("--input", input_path, "PGM file or directory")->required();
  dec->add_option("--out", out_path, "output CSV path")->required();
  dec->add_flag("--write-recon", write_recon,
                "also write reconstructed and residual images");

  auto* eval = app.add_subcommand("eval", "evaluation sweep");
  eval->add_option("--checkpoint", checkpoint_paths,
                   "checkpoint(s), one per sweep point")
      ->required();
  eval->add_option("--config", config_path, "run config file")->required();
  eval->add_option("--sweep", sweep, "mode_count, noise or resolution");
  eval->add_option("--count", count, "samples per sweep point");
  eval->add_option("--seed", seed, "RNG seed");
  eval->add_option("--out", out_path, "output CSV path")->required();

  auto* bench = app.add_subcommand("bench", "latency benchmark");
  bench->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  bench->add_option("--config", config_path, "run config file")->required();
  bench->add_option("--count", count, "number of frames");
  bench->add_option("--seed", seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen(config_path, count, seed, noise_sigma, out_path);
    }
    if (train->parsed()) {
      if (history_path.empty()) history_path = out_path + ".history.csv";
      return cmd_train(config_path, out_path, history_path);
    }
    if (dec->parsed()) {
      return cmd_decompose(checkpoint_path, config_path, input_path, out_path,
                           write_recon);
    }
    if (eval->parsed()) {
      return cmd_eval(checkpoint_paths, config_path, sweep, count, seed,
                      out_path);
    }
    if (bench->parsed()) {
      return cmd_bench(checkpoint_path, config_path, count, seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
