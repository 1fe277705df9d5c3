#pragma once

// From-scratch convolutional regression network: VGG-style blocks of 3x3
// same-padded convolutions with ReLU, 2x2 stride-2 max pooling, fully
// connected layers and a final sigmoid, trained with plain SGD on the MSE
// loss. Parameters live in one flat vector so that serialization, SGD
// updates and finite-difference checks all address the same storage.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fmd/errors.hpp"
#include "fmd/field_synth.hpp"

namespace fmd {

struct ConvBlockSpec {
  int conv_count = 1;
  int out_channels = 0;
  bool pool = true;
};

struct NetworkConfig {
  int input_resolution = 64;
  std::vector<ConvBlockSpec> blocks;
  std::vector<int> fc_hidden;  // widths of the hidden FC layers
  int output_dim = 0;          // 2N-1 for an N-mode fiber

  /// Full VGG-16-shaped preset: conv blocks (2,2,3,3,3) with channels
  /// (64,128,256,512,512), each pooled, then FC 1024 and 2N-1; 128x128
  /// single-channel input reaching a 4x4x512 map before the first FC.
  static NetworkConfig paper_preset(int n_modes) {
    NetworkConfig cfg;
    cfg.input_resolution = 128;
    cfg.blocks = {{2, 64, true},
                  {2, 128, true},
                  {3, 256, true},
                  {3, 512, true},
                  {3, 512, true}};
    cfg.fc_hidden = {1024};
    cfg.output_dim = 2 * n_modes - 1;
    return cfg;
  }

  /// Desk-scale preset: single-conv blocks with channels (16,32,64) on a
  /// 64x64 input, one hidden FC of width 128.
  static NetworkConfig compact_preset(int n_modes) {
    NetworkConfig cfg;
    cfg.input_resolution = 64;
    cfg.blocks = {{1, 16, true}, {1, 32, true}, {1, 64, true}};
    cfg.fc_hidden = {128};
    cfg.output_dim = 2 * n_modes - 1;
    return cfg;
  }

  /// Spatial side of the feature map after all pooled blocks.
  int conv_output_spatial() const {
    int s = input_resolution;
    for (const auto& b : blocks) {
      if (b.pool) {
        if (s % 2 != 0) throw OddDimension("pooling needs an even spatial size");
        s /= 2;
      }
    }
    return s;
  }

  void validate() const {
    if (input_resolution < 1 || output_dim < 1) {
      throw ShapeMismatch("invalid network dimensions");
    }
    for (const auto& b : blocks) {
      if (b.conv_count < 1 || b.out_channels < 1) {
        throw ShapeMismatch("invalid conv block");
      }
    }
    for (int w : fc_hidden) {
      if (w < 1) throw ShapeMismatch("invalid FC width");
    }
    if (conv_output_spatial() < 1) {
      throw ShapeMismatch("network pools the input away entirely");
    }
  }
};

namespace nn {

/// Elementwise logistic sigmoid.
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// im2col for a 3x3 same-padded convolution. Input is one sample's feature
/// map laid out channel-major (index c*HW + y*W + x); output K has HW rows
/// and in_ch*9 columns, column (c*9 + ky*3 + kx).
inline void im2col3x3(const double* input, int channels, int side,
                      Eigen::MatrixXd& k) {
  const int hw = side * side;
  k.resize(hw, static_cast<Eigen::Index>(channels) * 9);
  for (int c = 0; c < channels; ++c) {
    const double* chan = input + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* col = k.col(static_cast<Eigen::Index>(c) * 9 + ky * 3 + kx).data();
        for (int y = 0; y < side; ++y) {
          const int sy = y + ky - 1;
          for (int x = 0; x < side; ++x) {
            const int sx = x + kx - 1;
            col[y * side + x] =
                (sy < 0 || sy >= side || sx < 0 || sx >= side)
                    ? 0.0
                    : chan[sy * side + sx];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col3x3: accumulate column gradients back onto the input map.
inline void col2im3x3(const Eigen::MatrixXd& dk, int channels, int side,
                      double* d_input) {
  const int hw = side * side;
  for (int c = 0; c < channels; ++c) {
    double* chan = d_input + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* col =
            dk.col(static_cast<Eigen::Index>(c) * 9 + ky * 3 + kx).data();
        for (int y = 0; y < side; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= side) continue;
          for (int x = 0; x < side; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= side) continue;
            chan[sy * side + sx] += col[y * side + x];
          }
        }
      }
    }
  }
}

/// 3x3 same-padded cross-correlation for one sample. `weights` has in_ch*9
/// rows (layout matching im2col3x3) and out_ch columns; output is laid out
/// channel-major like the input. `scratch` holds the im2col matrix.
inline void conv3x3_forward(const double* input, int in_ch, int side,
                            const Eigen::Ref<const Eigen::MatrixXd>& weights,
                            const Eigen::Ref<const Eigen::VectorXd>& bias,
                            double* output, Eigen::MatrixXd& scratch) {
  if (weights.rows() != static_cast<Eigen::Index>(in_ch) * 9 ||
      weights.cols() != bias.size()) {
    throw ShapeMismatch("conv weight shape does not match channel counts");
  }
  const int hw = side * side;
  im2col3x3(input, in_ch, side, scratch);
  Eigen::Map<Eigen::MatrixXd> out(output, hw, weights.cols());
  out.noalias() = scratch * weights;
  out.rowwise() += bias.transpose();
}

/// 2x2 stride-2 max pooling for one channel-major sample; spatial side must
/// be even. `argmax` (optional) receives the source index of every output
/// element, for gradient routing.
inline void maxpool2(const double* input, int channels, int side,
                     double* output, int* argmax = nullptr) {
  if (side % 2 != 0) throw OddDimension("maxpool2 needs an even spatial size");
  const int half = side / 2;
  const int hw_out = half * half;
  for (int c = 0; c < channels; ++c) {
    const double* chan = input + static_cast<std::size_t>(c) * side * side;
    for (int oy = 0; oy < half; ++oy) {
      for (int ox = 0; ox < half; ++ox) {
        int best = (2 * oy) * side + 2 * ox;
        double best_v = chan[best];
        const int cand[3] = {(2 * oy) * side + 2 * ox + 1,
                             (2 * oy + 1) * side + 2 * ox,
                             (2 * oy + 1) * side + 2 * ox + 1};
        for (int idx : cand) {
          if (chan[idx] > best_v) {
            best_v = chan[idx];
            best = idx;
          }
        }
        const int out_idx = c * hw_out + oy * half + ox;
        output[out_idx] = best_v;
        if (argmax) argmax[out_idx] = c * side * side + best;
      }
    }
  }
}

}  // namespace nn

/// Mean over the batch of the summed squared differences per sample.
/// Returns the loss and fills the gradient 2*(output-labels)/M.
inline double mse_loss(const Eigen::MatrixXd& output,
                       const Eigen::MatrixXd& labels, Eigen::MatrixXd& grad) {
  if (output.rows() != labels.rows() || output.cols() != labels.cols()) {
    throw ShapeMismatch("mse_loss shape mismatch");
  }
  const double m = static_cast<double>(output.cols());
  grad = 2.0 * (output - labels) / m;
  return (output - labels).squaredNorm() / m;
}

class Network {
 public:
  explicit Network(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    build_layers();
    params_.assign(param_count_, 0.0);
  }

  /// He fan-in normal initialization, biases zero.
  void init_weights(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& layer : layers_) {
      if (layer.kind == LayerKind::pool) continue;
      const double stddev = std::sqrt(2.0 / layer.fan_in());
      for (std::size_t i = 0; i < layer.weight_count(); ++i) {
        params_[layer.w_offset + i] = gauss(rng) * stddev;
      }
      for (int i = 0; i < layer.out_dim(); ++i) {
        params_[layer.b_offset + i] = 0.0;
      }
    }
  }

  const NetworkConfig& config() const { return config_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return param_count_; }

  /// Forward pass. Input columns are flattened images (res^2 x M); output
  /// is (output_dim x M), every entry in (0,1).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const {
    Workspace ws;
    return run_forward(input, ws);
  }

  Eigen::MatrixXd forward(const BeamImage& image) const {
    return forward(image_matrix({&image}));
  }

  /// Forward + backward for one batch. Returns the MSE loss and fills
  /// `grad` (same layout as params) with the loss gradient.
  double backward(const Eigen::MatrixXd& input, const Eigen::MatrixXd& labels,
                  std::vector<double>& grad) const {
    Workspace ws;
    const Eigen::MatrixXd output = run_forward(input, ws);
    Eigen::MatrixXd delta;
    const double loss = mse_loss(output, labels, delta);
    grad.assign(param_count_, 0.0);
    run_backward(delta, ws, grad);
    return loss;
  }

  /// Flatten a batch of images into forward()'s input layout.
  Eigen::MatrixXd image_matrix(const std::vector<const BeamImage*>& images) const {
    const int res = config_.input_resolution;
    Eigen::MatrixXd input(static_cast<Eigen::Index>(res) * res, images.size());
    for (std::size_t m = 0; m < images.size(); ++m) {
      const BeamImage& img = *images[m];
      if (img.height != res || img.width != res) {
        throw ShapeMismatch("image resolution does not match the network");
      }
      for (std::size_t p = 0; p < img.size(); ++p) {
        input(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m)) =
            img.pixels[p];
      }
    }
    return input;
  }

 private:
  enum class LayerKind { conv, pool, fc };

  struct Layer {
    LayerKind kind;
    int in_ch = 0, out_ch = 0, side = 0;  // conv/pool geometry (input side)
    int in_features = 0, out_features = 0;  // fc geometry
    bool relu = false;     // conv and hidden fc layers
    bool sigmoid = false;  // final fc layer
    std::size_t w_offset = 0, b_offset = 0;

    double fan_in() const {
      return kind == LayerKind::conv ? in_ch * 9.0 : in_features;
    }
    std::size_t weight_count() const {
      return kind == LayerKind::conv
                 ? static_cast<std::size_t>(in_ch) * 9 * out_ch
                 : static_cast<std::size_t>(in_features) * out_features;
    }
    int out_dim() const {
      return kind == LayerKind::conv ? out_ch : out_features;
    }
  };

  struct Workspace {
    // activations[i] is the input of layer i; back() is the conv-stack /
    // fc-stack output before the loss.
    std::vector<Eigen::MatrixXd> activations;
    // per pool layer: argmax source index for every output element
    std::vector<Eigen::MatrixXi> pool_argmax;
    Eigen::MatrixXd output;
  };

  void build_layers() {
    int side = config_.input_resolution;
    int channels = 1;
    std::size_t offset = 0;
    auto add_params = [&](Layer& layer) {
      layer.w_offset = offset;
      offset += layer.weight_count();
      layer.b_offset = offset;
      offset += layer.out_dim();
    };
    for (const auto& block : config_.blocks) {
      for (int c = 0; c < block.conv_count; ++c) {
        Layer layer{LayerKind::conv, channels, block.out_channels, side};
        layer.relu = true;
        add_params(layer);
        layers_.push_back(layer);
        channels = block.out_channels;
      }
      if (block.pool) {
        if (side % 2 != 0) throw OddDimension("pool needs even spatial size");
        Layer layer{LayerKind::pool, channels, channels, side};
        layers_.push_back(layer);
        side /= 2;
      }
    }
    int features = channels * side * side;
    std::vector<int> widths = config_.fc_hidden;
    widths.push_back(config_.output_dim);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      Layer layer{LayerKind::fc};
      layer.in_features = features;
      layer.out_features = widths[i];
      if (i + 1 == widths.size()) {
        layer.sigmoid = true;
      } else {
        layer.relu = true;
      }
      add_params(layer);
      layers_.push_back(layer);
      features = widths[i];
    }
    param_count_ = offset;
  }

  Eigen::Map<const Eigen::MatrixXd> conv_weights(const Layer& l) const {
    return {params_.data() + l.w_offset, static_cast<Eigen::Index>(l.in_ch) * 9,
            l.out_ch};
  }
  Eigen::Map<const Eigen::MatrixXd> fc_weights(const Layer& l) const {
    return {params_.data() + l.w_offset, l.out_features, l.in_features};
  }
  Eigen::Map<const Eigen::VectorXd> biases(const Layer& l) const {
    return {params_.data() + l.b_offset, l.out_dim()};
  }

  Eigen::MatrixXd run_forward(const Eigen::MatrixXd& input, Workspace& ws) const {
    const int res = config_.input_resolution;
    if (input.rows() != static_cast<Eigen::Index>(res) * res) {
      throw ShapeMismatch("input rows must equal input_resolution^2");
    }
    const Eigen::Index batch = input.cols();
    ws.activations.clear();
    ws.pool_argmax.clear();
    ws.activations.push_back(input);

    Eigen::MatrixXd k;  // im2col scratch
    for (const auto& layer : layers_) {
      const Eigen::MatrixXd& x = ws.activations.back();
      Eigen::MatrixXd y;
      switch (layer.kind) {
        case LayerKind::conv: {
          const int hw = layer.side * layer.side;
          y.resize(static_cast<Eigen::Index>(layer.out_ch) * hw, batch);
          const auto w = conv_weights(layer);
          const auto b = biases(layer);
          for (Eigen::Index m = 0; m < batch; ++m) {
            nn::conv3x3_forward(x.col(m).data(), layer.in_ch, layer.side, w, b,
                                y.col(m).data(), k);
          }
          y = y.cwiseMax(0.0);  // ReLU
          break;
        }
        case LayerKind::pool: {
          const int half = layer.side / 2;
          y.resize(static_cast<Eigen::Index>(layer.in_ch) * half * half, batch);
          Eigen::MatrixXi argmax(y.rows(), batch);
          for (Eigen::Index m = 0; m < batch; ++m) {
            nn::maxpool2(x.col(m).data(), layer.in_ch, layer.side,
                         y.col(m).data(), argmax.col(m).data());
          }
          ws.pool_argmax.push_back(std::move(argmax));
          break;
        }
        case LayerKind::fc: {
          const auto w = fc_weights(layer);
          y.noalias() = w * x;
          y.colwise() += biases(layer);
          if (layer.relu) {
            y = y.cwiseMax(0.0);
          } else if (layer.sigmoid) {
            y = y.unaryExpr([](double v) { return nn::sigmoid(v); });
          }
          break;
        }
      }
      ws.activations.push_back(std::move(y));
    }
    ws.output = ws.activations.back();
    return ws.output;
  }

  void run_backward(const Eigen::MatrixXd& output_grad, Workspace& ws,
                    std::vector<double>& grad) const {
    Eigen::MatrixXd delta = output_grad;
    Eigen::MatrixXd k, dk;
    int pool_idx = static_cast<int>(ws.pool_argmax.size());
    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
      const Layer& layer = layers_[li];
      const Eigen::MatrixXd& x = ws.activations[li];
      const Eigen::MatrixXd& y = ws.activations[li + 1];
      const Eigen::Index batch = x.cols();
      Eigen::MatrixXd next_delta;
      switch (layer.kind) {
        case LayerKind::conv: {
          delta.array() *= (y.array() > 0.0).cast<double>();
          const int hw = layer.side * layer.side;
          const auto w = conv_weights(layer);
          Eigen::Map<Eigen::MatrixXd> dw(grad.data() + layer.w_offset,
                                         static_cast<Eigen::Index>(layer.in_ch) * 9,
                                         layer.out_ch);
          Eigen::Map<Eigen::VectorXd> db(grad.data() + layer.b_offset,
                                         layer.out_ch);
          next_delta = Eigen::MatrixXd::Zero(x.rows(), batch);
          for (Eigen::Index m = 0; m < batch; ++m) {
            nn::im2col3x3(x.col(m).data(), layer.in_ch, layer.side, k);
            Eigen::Map<const Eigen::MatrixXd> dy(delta.col(m).data(), hw,
                                                 layer.out_ch);
            dw.noalias() += k.transpose() * dy;
            db.noalias() += dy.colwise().sum().transpose();
            dk.noalias() = dy * w.transpose();
            nn::col2im3x3(dk, layer.in_ch, layer.side, next_delta.col(m).data());
          }
          break;
        }
        case LayerKind::pool: {
          const Eigen::MatrixXi& argmax = ws.pool_argmax[--pool_idx];
          next_delta = Eigen::MatrixXd::Zero(x.rows(), batch);
          for (Eigen::Index m = 0; m < batch; ++m) {
            for (Eigen::Index i = 0; i < delta.rows(); ++i) {
              next_delta(argmax(i, m), m) += delta(i, m);
            }
          }
          break;
        }
        case LayerKind::fc: {
          if (layer.relu) {
            delta.array() *= (y.array() > 0.0).cast<double>();
          } else if (layer.sigmoid) {
            delta = delta.array() * y.array() * (1.0 - y.array());
          }
          const auto w = fc_weights(layer);
          Eigen::Map<Eigen::MatrixXd> dw(grad.data() + layer.w_offset,
                                         layer.out_features, layer.in_features);
          Eigen::Map<Eigen::VectorXd> db(grad.data() + layer.b_offset,
                                         layer.out_features);
          dw.noalias() += delta * x.transpose();
          db.noalias() += delta.rowwise().sum();
          next_delta.noalias() = w.transpose() * delta;
          break;
        }
      }
      delta = std::move(next_delta);
    }
  }

  NetworkConfig config_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  std::size_t param_count_ = 0;
};

// --- checkpoint serialization ("FMDC") ------------------------------------

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}
inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw ParseError("unexpected end of file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("unexpected end of file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("unexpected end of file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Network& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open checkpoint for writing: " + path);
  const NetworkConfig& cfg = net.config();
  os.write("FMDC", 4);
  detail::put_u16(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.input_resolution));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.blocks.size()));
  for (const auto& b : cfg.blocks) {
    detail::put_u32(os, static_cast<std::uint32_t>(b.conv_count));
    detail::put_u32(os, static_cast<std::uint32_t>(b.out_channels));
    detail::put_u32(os, b.pool ? 1 : 0);
  }
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.fc_hidden.size()));
  for (int w : cfg.fc_hidden) detail::put_u32(os, static_cast<std::uint32_t>(w));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.output_dim));
  for (double p : net.params()) detail::put_f32(os, static_cast<float>(p));
  if (!os) throw ParseError("failed writing checkpoint: " + path);
}

inline Network load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "FMDC") {
    throw ParseError("not a checkpoint file (bad magic): " + path);
  }
  const auto version = detail::get_u16(is);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  NetworkConfig cfg;
  cfg.input_resolution = static_cast<int>(detail::get_u32(is));
  const auto n_blocks = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    ConvBlockSpec b;
    b.conv_count = static_cast<int>(detail::get_u32(is));
    b.out_channels = static_cast<int>(detail::get_u32(is));
    b.pool = detail::get_u32(is) != 0;
    cfg.blocks.push_back(b);
  }
  const auto n_fc = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n_fc; ++i) {
    cfg.fc_hidden.push_back(static_cast<int>(detail::get_u32(is)));
  }
  cfg.output_dim = static_cast<int>(detail::get_u32(is));
  Network net(cfg);
  for (double& p : net.params()) p = detail::get_f32(is);
  return net;
}

// --- training --------------------------------------------------------------

struct TrainConfig {
  int samples_per_epoch = 10000;
  int batch_size = 64;
  int epochs = 10;
  // (first epoch, learning rate), 1-based; a rate applies from its epoch on.
  std::vector<std::pair<int, double>> lr_schedule = {{1, 0.01}, {8, 0.001}};
  std::uint64_t seed = 1;
  double noise_sigma = 0.0;  // multiplicative augmentation noise

  double learning_rate(int epoch) const {
    double lr = lr_schedule.empty() ? 0.01 : lr_schedule.front().second;
    for (const auto& [start, rate] : lr_schedule) {
      if (epoch >= start) lr = rate;
    }
    return lr;
  }

  void validate() const {
    if (samples_per_epoch < 1 || batch_size < 1 || epochs < 0) {
      throw ShapeMismatch("train config counts must be positive");
    }
    for (const auto& [start, rate] : lr_schedule) {
      if (rate <= 0.0) throw ShapeMismatch("learning rate must be positive");
    }
  }
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double holdout_correlation = 0.0;  // NaN when no evaluator is supplied
};

/// Deterministic per-sample RNG stream (splitmix64 over seed and index),
/// so that data-parallel generation cannot reorder the sample stream.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(z ^ (z >> 31));
}

struct TrainingSample {
  ModeCoefficients coeffs;
  BeamImage image;
  LabelVector label;
};

/// One synthetic supervised sample: random coefficients, max-normalized
/// intensity, optional multiplicative noise (re-normalized afterwards).
inline TrainingSample make_sample(const ModeBasis& basis, std::uint64_t seed,
                                  std::uint64_t index, double noise_sigma = 0.0) {
  auto rng = sample_rng(seed, index);
  TrainingSample s;
  s.coeffs = sample_coefficients(rng, basis.mode_count());
  s.image = intensity(superpose(basis, s.coeffs), true);
  if (noise_sigma > 0.0) {
    s.image = max_normalize(add_noise(s.image, noise_sigma, rng));
  }
  s.label = encode_label(s.coeffs);
  return s;
}

using HoldoutEval = std::function<double(const Network&)>;

/// Mini-batch SGD over freshly generated batches. Returns per-epoch mean
/// loss and, when an evaluator is supplied, its held-out score.
inline std::vector<EpochStats> train(Network& net, const ModeBasis& basis,
                                     const TrainConfig& cfg,
                                     const HoldoutEval& holdout_eval = nullptr) {
  cfg.validate();
  if (net.config().output_dim != 2 * basis.mode_count() - 1) {
    throw ShapeMismatch("network output dim does not match basis mode count");
  }
  const int res = net.config().input_resolution;
  if (res != basis.resolution()) {
    throw ShapeMismatch("network input resolution does not match basis grid");
  }
  const int batches_per_epoch =
      (cfg.samples_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<EpochStats> history;
  std::vector<double> grad;
  std::uint64_t sample_index = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    double loss_sum = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const int count = std::min(cfg.batch_size,
                                 cfg.samples_per_epoch - b * cfg.batch_size);
      Eigen::MatrixXd input(static_cast<Eigen::Index>(res) * res, count);
      Eigen::MatrixXd labels(net.config().output_dim, count);
      for (int m = 0; m < count; ++m) {
        const TrainingSample s =
            make_sample(basis, cfg.seed, sample_index++, cfg.noise_sigma);
        for (std::size_t p = 0; p < s.image.size(); ++p) {
          input(static_cast<Eigen::Index>(p), m) = s.image.pixels[p];
        }
        for (int d = 0; d < net.config().output_dim; ++d) {
          labels(d, m) = s.label.values[d];
        }
      }
      const double loss = net.backward(input, labels, grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("training loss diverged (non-finite)");
      }
      auto& params = net.params();
      for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * grad[i];
      }
      loss_sum += loss * count;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / cfg.samples_per_epoch;
    stats.holdout_correlation =
        holdout_eval ? holdout_eval(net)
                     : std::numeric_limits<double>::quiet_NaN();
    history.push_back(stats);
  }
  return history;
}

}  // namespace fmd
