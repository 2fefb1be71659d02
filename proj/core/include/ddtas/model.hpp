#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace ddtas {

// One affine layer: output = weight * input + bias. weight is (out x in).
struct LayerParams {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

// Feed-forward embedding map: affine layers with ReLU between them, no
// activation after the last layer, then row-wise L2 normalization.
// Batches are row-major in the sense of one sample per row.
class EmbeddingNet {
 public:
  EmbeddingNet() = default;

  // Zero-initialized parameters for the given dims (input, hidden..., output).
  explicit EmbeddingNet(std::vector<int> layer_dims);

  // Uniform He-style initialization: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  // biases zero.
  static EmbeddingNet he_uniform(std::vector<int> layer_dims, std::uint64_t seed);

  const std::vector<int>& layer_dims() const noexcept { return dims_; }
  int input_dim() const noexcept { return dims_.front(); }
  int embedding_dim() const noexcept { return dims_.back(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }

  const std::vector<LayerParams>& layers() const noexcept { return layers_; }
  std::vector<LayerParams>& layers() noexcept { return layers_; }

  // When > 0, pre-normalization norms below the floor are divided by the floor
  // instead of raising DegenerateEmbeddingError. Off (0) by default.
  double norm_floor() const noexcept { return norm_floor_; }
  void set_norm_floor(double floor);

  bool all_finite() const;

 private:
  std::vector<int> dims_;
  std::vector<LayerParams> layers_;
  double norm_floor_ = 0.0;
};

// Gradient carrier, shape-matched to an EmbeddingNet.
struct ParamGrads {
  std::vector<LayerParams> layers;

  static ParamGrads zeros_like(const EmbeddingNet& net);
  bool all_finite() const;
};

// Intermediate activations kept by forward for backward.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = inputs, then post-ReLU hidden
  Eigen::MatrixXd pre_norm;                  // last affine output
  Eigen::VectorXd norms;                     // effective divisor per row
  Eigen::MatrixXd output;                    // unit rows
};

// Throws std::invalid_argument on empty batch or input-dim mismatch and
// DegenerateEmbeddingError on a zero pre-normalization row.
Eigen::MatrixXd forward(const EmbeddingNet& net, const Eigen::MatrixXd& inputs);
ForwardCache forward_cached(const EmbeddingNet& net, const Eigen::MatrixXd& inputs);

// Exact gradient of <grad_wrt_embeddings, forward(inputs)> w.r.t. the parameters.
ParamGrads backward(const EmbeddingNet& net, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& grad_wrt_embeddings);
ParamGrads backward(const EmbeddingNet& net, const ForwardCache& cache,
                    const Eigen::MatrixXd& grad_wrt_embeddings);

// theta - lr * grads as a new parameter set.
EmbeddingNet sgd_step(const EmbeddingNet& net, const ParamGrads& grads, double lr);

struct AdamState {
  ParamGrads first_moment;
  ParamGrads second_moment;
  std::int64_t step = 0;

  static AdamState init(const EmbeddingNet& net);
};

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamResult {
  EmbeddingNet net;
  AdamState state;
};

AdamResult adam_step(const AdamState& state, const EmbeddingNet& net, const ParamGrads& grads,
                     const AdamOptions& opts);

// Flat views used by finite-difference checks and diagnostics. Order: for each
// layer, weight in column-major storage order, then bias.
std::size_t param_count(const EmbeddingNet& net);
Eigen::VectorXd flatten(const EmbeddingNet& net);
Eigen::VectorXd flatten(const ParamGrads& grads);
EmbeddingNet unflatten(const EmbeddingNet& shape, const Eigen::VectorXd& flat);
ParamGrads unflatten_grads(const EmbeddingNet& shape, const Eigen::VectorXd& flat);

// Text checkpoint, format "ddtas-checkpoint 1". All reals are written as C99
// hexadecimal floats so a round trip is bit-exact. Layout:
//
//   ddtas-checkpoint 1
//   lambda <real>
//   norm_floor <real>
//   dims <n> <d0> <d1> ... <d(n-1)>
//   layer <k> weight <rows> <cols>
//   <cols reals>            (one line per row)
//   layer <k> bias <n>
//   <n reals>
//   ...
//   end
struct Checkpoint {
  EmbeddingNet net;
  double lambda = 0.0;
};

void save_checkpoint(const EmbeddingNet& net, double lambda, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stream-level pieces shared with the trainer's resumable state file.
void write_checkpoint(std::ostream& out, const EmbeddingNet& net, double lambda);
Checkpoint read_checkpoint(std::istream& in, const std::string& source_name);
void write_real(std::ostream& out, double value);
double parse_real(const std::string& token, const std::string& source, std::size_t line);

}  // namespace ddtas
