#pragma once

// File formats used by the command-line tools: binary PGM (P5) frames,
// the "FMDS" dataset container (labels + float images) and the plain
// key=value run configuration.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fmd/cnn.hpp"
#include "fmd/errors.hpp"
#include "fmd/field_synth.hpp"
#include "fmd/fiber_modes.hpp"

namespace fmd {

// --- PGM (P5) --------------------------------------------------------------

/// Read an 8-bit binary PGM; pixel values are max-normalized to [0,1].
inline BeamImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open image: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw ParseError(path + ": not a binary PGM (P5) file");

  auto next_token = [&]() -> long {
    // skip whitespace and '#' comment lines
    for (;;) {
      int ch = is.peek();
      if (ch == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(ch)) {
        is.get();
      } else {
        break;
      }
    }
    long v;
    if (!(is >> v)) throw ParseError(path + ": malformed PGM header");
    return v;
  };
  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (width < 1 || height < 1) throw ParseError(path + ": bad PGM dimensions");
  if (maxval < 1 || maxval > 255) {
    throw ParseError(path + ": only 8-bit PGM supported (maxval " +
                     std::to_string(maxval) + ")");
  }
  is.get();  // single whitespace after maxval

  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
  is.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw ParseError(path + ": truncated PGM payload at byte offset " +
                     std::to_string(static_cast<long>(is.tellg()) < 0
                                        ? is.gcount()
                                        : static_cast<long>(is.tellg())));
  }
  BeamImage img{static_cast<int>(height), static_cast<int>(width),
                std::vector<double>(raw.size())};
  for (std::size_t p = 0; p < raw.size(); ++p) img.pixels[p] = raw[p];
  return max_normalize(img);
}

/// Write an 8-bit binary PGM; pixels are clamped to [0,1] and quantized.
inline void write_pgm(const std::string& path, const BeamImage& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open image for writing: " + path);
  os << "P5\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (std::size_t p = 0; p < image.size(); ++p) {
    const double v = std::clamp(image.pixels[p], 0.0, 1.0);
    raw[p] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!os) throw ParseError("failed writing image: " + path);
}

// --- dataset container ("FMDS") -------------------------------------------

struct Dataset {
  FiberSpec fiber;
  GridSpec grid;
  int n_modes = 0;
  std::vector<LabelVector> labels;
  std::vector<BeamImage> images;

  std::size_t sample_count() const { return labels.size(); }
};

inline constexpr std::uint16_t kDatasetVersion = 1;

inline void write_dataset(const std::string& path, const Dataset& ds) {
  if (ds.labels.size() != ds.images.size()) {
    throw DimensionMismatch("dataset label/image counts differ");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open dataset for writing: " + path);
  os.write("FMDS", 4);
  detail::put_u16(os, kDatasetVersion);
  detail::put_f64(os, ds.fiber.core_radius_um);
  detail::put_f64(os, ds.fiber.numerical_aperture);
  detail::put_f64(os, ds.fiber.wavelength_um);
  detail::put_f64(os, ds.grid.window_half_width_um);
  detail::put_u32(os, static_cast<std::uint32_t>(ds.grid.resolution));
  detail::put_u32(os, static_cast<std::uint32_t>(ds.n_modes));
  detail::put_u32(os, static_cast<std::uint32_t>(ds.labels.size()));
  const std::size_t label_dim = 2 * ds.n_modes - 1;
  const std::size_t npix =
      static_cast<std::size_t>(ds.grid.resolution) * ds.grid.resolution;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i].values.size() != label_dim ||
        ds.images[i].size() != npix) {
      throw DimensionMismatch("dataset sample shape mismatch");
    }
    for (double v : ds.labels[i].values) {
      detail::put_f32(os, static_cast<float>(v));
    }
    for (double v : ds.images[i].pixels) {
      detail::put_f32(os, static_cast<float>(v));
    }
  }
  if (!os) throw ParseError("failed writing dataset: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open dataset: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "FMDS") {
    throw ParseError("not a dataset file (bad magic): " + path);
  }
  const auto version = detail::get_u16(is);
  if (version != kDatasetVersion) {
    throw ParseError("unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.fiber.core_radius_um = detail::get_f64(is);
  ds.fiber.numerical_aperture = detail::get_f64(is);
  ds.fiber.wavelength_um = detail::get_f64(is);
  ds.grid.window_half_width_um = detail::get_f64(is);
  ds.grid.resolution = static_cast<int>(detail::get_u32(is));
  ds.n_modes = static_cast<int>(detail::get_u32(is));
  const auto count = detail::get_u32(is);
  const std::size_t label_dim = 2 * static_cast<std::size_t>(ds.n_modes) - 1;
  const std::size_t npix =
      static_cast<std::size_t>(ds.grid.resolution) * ds.grid.resolution;
  for (std::uint32_t i = 0; i < count; ++i) {
    LabelVector label;
    label.values.resize(label_dim);
    for (double& v : label.values) v = detail::get_f32(is);
    BeamImage img{ds.grid.resolution, ds.grid.resolution,
                  std::vector<double>(npix)};
    for (double& v : img.pixels) v = detail::get_f32(is);
    ds.labels.push_back(std::move(label));
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// --- run configuration -----------------------------------------------------

// Plain-text key=value configuration. Unknown keys are rejected; the fiber
// parameters and mode count are required, everything else has defaults.
struct RunConfig {
  FiberSpec fiber;
  int n_modes = 0;
  double window_factor = 2.0;  // window half-width as a multiple of a
  int resolution = 64;
  std::string preset = "compact";  // "compact" or "paper"
  TrainConfig train;
  int holdout_size = 200;

  GridSpec grid() const {
    return {resolution, window_factor * fiber.core_radius_um};
  }
  ModeBasis basis() const { return sample_basis(fiber, grid(), n_modes); }
  NetworkConfig network() const {
    NetworkConfig cfg = preset == "paper"
                            ? NetworkConfig::paper_preset(n_modes)
                            : NetworkConfig::compact_preset(n_modes);
    cfg.input_resolution = resolution;
    return cfg;
  }
};

namespace detail {

inline std::vector<std::pair<int, double>> parse_lr_schedule(
    const std::string& text) {
  std::vector<std::pair<int, double>> schedule;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ParseError("lr_schedule entries must look like epoch:rate");
    }
    schedule.emplace_back(std::stoi(item.substr(0, colon)),
                          std::stod(item.substr(colon + 1)));
  }
  if (schedule.empty()) throw ParseError("empty lr_schedule");
  return schedule;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  RunConfig cfg;
  std::map<std::string, bool> seen;
  auto take = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    seen[key] = true;
    return &it->second;
  };
  auto require = [&](const std::string& key) -> const std::string& {
    const std::string* v = take(key);
    if (!v) throw ParseError("config missing required key: " + key);
    return *v;
  };

  cfg.fiber.core_radius_um = std::stod(require("core_radius_um"));
  cfg.fiber.numerical_aperture = std::stod(require("numerical_aperture"));
  cfg.fiber.wavelength_um = std::stod(require("wavelength_um"));
  cfg.n_modes = std::stoi(require("n_modes"));

  if (const auto* v = take("window_factor")) cfg.window_factor = std::stod(*v);
  if (const auto* v = take("resolution")) cfg.resolution = std::stoi(*v);
  if (const auto* v = take("preset")) {
    if (*v != "compact" && *v != "paper") {
      throw ParseError("preset must be 'compact' or 'paper'");
    }
    cfg.preset = *v;
  }
  if (const auto* v = take("samples_per_epoch")) {
    cfg.train.samples_per_epoch = std::stoi(*v);
  }
  if (const auto* v = take("batch_size")) cfg.train.batch_size = std::stoi(*v);
  if (const auto* v = take("epochs")) cfg.train.epochs = std::stoi(*v);
  if (const auto* v = take("lr_schedule")) {
    cfg.train.lr_schedule = detail::parse_lr_schedule(*v);
  }
  if (const auto* v = take("seed")) cfg.train.seed = std::stoull(*v);
  if (const auto* v = take("noise_sigma")) {
    cfg.train.noise_sigma = std::stod(*v);
  }
  if (const auto* v = take("holdout_size")) cfg.holdout_size = std::stoi(*v);

  for (const auto& [key, value] : kv) {
    if (!seen.count(key)) throw ParseError("unknown config key: " + key);
  }
  cfg.fiber.validate();
  if (cfg.n_modes < 1) throw ParseError("n_modes must be >= 1");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config: " + path);
  return parse_run_config(is);
}

}  // namespace fmd
