#include "asgd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "asgd/core.hpp"
#include "asgd/random.hpp"

namespace asgd {

namespace {

void check_dimension(const Objective& objective, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != objective.dimension()) {
    throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                ", objective expects " +
                                std::to_string(objective.dimension()));
  }
}

void check_sample(const Objective& objective, int sample) {
  if (sample < 0 || sample >= objective.dataset_size()) {
    throw std::invalid_argument("sample index " + std::to_string(sample) +
                                " outside dataset of size " +
                                std::to_string(objective.dataset_size()));
  }
}

// Gaussian elimination with partial pivoting; n is tiny at desk scale.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int row = col + 1; row < n; ++row) {
      if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) pivot = row;
    }
    if (std::abs(a[pivot * n + col]) < 1e-14) {
      throw std::invalid_argument("matrix is singular to working precision");
    }
    if (pivot != col) {
      for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    for (int row = col + 1; row < n; ++row) {
      const double factor = a[row * n + col] / a[col * n + col];
      for (int k = col; k < n; ++k) a[row * n + k] -= factor * a[col * n + k];
      b[row] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int row = n - 1; row >= 0; --row) {
    double acc = b[row];
    for (int k = row + 1; k < n; ++k) acc -= a[row * n + k] * x[k];
    x[row] = acc / a[row * n + row];
  }
  return x;
}

// Cholesky feasibility probe used only to validate positive semidefiniteness.
bool is_positive_semidefinite(std::vector<double> a, int n) {
  const double shift = 1e-10;
  for (int i = 0; i < n; ++i) a[i * n + i] += shift;
  for (int col = 0; col < n; ++col) {
    double diag = a[col * n + col];
    for (int k = 0; k < col; ++k) diag -= a[col * n + k] * a[col * n + k];
    if (diag <= 0.0) return false;
    const double root = std::sqrt(diag);
    a[col * n + col] = root;
    for (int row = col + 1; row < n; ++row) {
      double value = a[row * n + col];
      for (int k = 0; k < col; ++k) value -= a[row * n + k] * a[col * n + k];
      a[row * n + col] = value / root;
    }
  }
  return true;
}

double softplus(double t) {
  // log(1 + exp(t)) without overflow
  if (t > 30.0) return t;
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> minibatch_gradient(const Objective& objective,
                                       std::span<const double> theta,
                                       const MinibatchSpec& batch) {
  check_dimension(objective, theta);
  if (batch.sample_indices.empty()) {
    throw std::invalid_argument("mini-batch is empty");
  }
  std::vector<double> grad(theta.size(), 0.0);
  for (int sample : batch.sample_indices) {
    check_sample(objective, sample);
    objective.add_sample_gradient(sample, theta, grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.sample_indices.size());
  for (double& g : grad) g *= inv;
  return grad;
}

double full_loss(const Objective& objective, std::span<const double> theta) {
  check_dimension(objective, theta);
  double sum = 0.0;
  for (int i = 0; i < objective.dataset_size(); ++i) {
    sum += objective.sample_loss(i, theta);
  }
  return sum / static_cast<double>(objective.dataset_size());
}

std::vector<double> full_gradient(const Objective& objective, std::span<const double> theta) {
  check_dimension(objective, theta);
  std::vector<double> grad(theta.size(), 0.0);
  for (int i = 0; i < objective.dataset_size(); ++i) {
    objective.add_sample_gradient(i, theta, grad);
  }
  const double inv = 1.0 / static_cast<double>(objective.dataset_size());
  for (double& g : grad) g *= inv;
  return grad;
}

double gradient_norm_sq(const Objective& objective, std::span<const double> theta) {
  const std::vector<double> grad = full_gradient(objective, theta);
  double norm_sq = 0.0;
  for (double g : grad) norm_sq += g * g;
  return norm_sq;
}

double finite_difference_check(const Objective& objective, std::span<const double> theta,
                               double step) {
  if (step <= 0.0) throw std::invalid_argument("finite-difference step must be positive");
  check_dimension(objective, theta);
  const std::vector<double> analytic = full_gradient(objective, theta);
  std::vector<double> probe(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + step;
    const double upper = full_loss(objective, probe);
    probe[k] = saved - step;
    const double lower = full_loss(objective, probe);
    probe[k] = saved;
    const double central = (upper - lower) / (2.0 * step);
    const double scale = std::max(1.0, std::abs(analytic[k]));
    worst = std::max(worst, std::abs(central - analytic[k]) / scale);
  }
  return worst;
}

std::vector<double> initial_weights(int dimension, std::uint64_t seed) {
  if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  std::mt19937_64 rng(mix_seed(seed, 0x1217));
  std::vector<double> theta(dimension);
  for (double& value : theta) value = uniform_range(rng, -0.1, 0.1);
  return theta;
}

// ---------------------------------------------------------------------------
// Quadratic

QuadraticObjective::QuadraticObjective(std::vector<double> matrix, std::vector<double> linear,
                                       int dataset_size, double noise_scale,
                                       std::uint64_t seed)
    : dim_(static_cast<int>(linear.size())),
      dataset_size_(dataset_size),
      noise_scale_(noise_scale),
      matrix_(std::move(matrix)),
      linear_(std::move(linear)) {
  if (dim_ < 1) throw ConfigError("quadratic objective needs at least one dimension");
  if (dataset_size_ < 1) throw ConfigError("dataset_size must be positive");
  if (matrix_.size() != static_cast<std::size_t>(dim_) * dim_) {
    throw ConfigError("quadratic matrix must be dimension x dimension");
  }
  if (noise_scale_ < 0.0) throw ConfigError("noise_scale must be non-negative");
  for (int r = 0; r < dim_; ++r) {
    for (int c = r + 1; c < dim_; ++c) {
      if (std::abs(matrix_[r * dim_ + c] - matrix_[c * dim_ + r]) > 1e-12) {
        throw ConfigError("quadratic matrix must be symmetric");
      }
    }
  }
  if (!is_positive_semidefinite(matrix_, dim_)) {
    throw ConfigError("quadratic matrix must be positive semidefinite");
  }
  if (static_cast<long long>(dataset_size_) * dim_ * dim_ > 4'000'000LL) {
    throw ConfigError("quadratic objective too large for per-sample storage");
  }

  if (noise_scale_ > 0.0) {
    // Symmetric per-sample perturbations whose dataset mean is exactly
    // subtracted out, so the average loss stays 0.5 x'Ax - b'x.
    std::mt19937_64 rng(mix_seed(seed, 0x51AD));
    const std::size_t mat_stride = static_cast<std::size_t>(dim_) * dim_;
    noise_matrix_.assign(static_cast<std::size_t>(dataset_size_) * mat_stride, 0.0);
    noise_linear_.assign(static_cast<std::size_t>(dataset_size_) * dim_, 0.0);
    for (int i = 0; i < dataset_size_; ++i) {
      double* delta = noise_matrix_.data() + i * mat_stride;
      for (int r = 0; r < dim_; ++r) {
        for (int c = r; c < dim_; ++c) {
          const double value = uniform_range(rng, -noise_scale_, noise_scale_);
          delta[r * dim_ + c] = value;
          delta[c * dim_ + r] = value;
        }
      }
      double* db = noise_linear_.data() + static_cast<std::size_t>(i) * dim_;
      for (int r = 0; r < dim_; ++r) db[r] = uniform_range(rng, -noise_scale_, noise_scale_);
    }
    std::vector<double> mat_mean(mat_stride, 0.0);
    std::vector<double> lin_mean(dim_, 0.0);
    for (int i = 0; i < dataset_size_; ++i) {
      for (std::size_t k = 0; k < mat_stride; ++k) mat_mean[k] += noise_matrix_[i * mat_stride + k];
      for (int k = 0; k < dim_; ++k) lin_mean[k] += noise_linear_[static_cast<std::size_t>(i) * dim_ + k];
    }
    for (std::size_t k = 0; k < mat_stride; ++k) mat_mean[k] /= dataset_size_;
    for (int k = 0; k < dim_; ++k) lin_mean[k] /= dataset_size_;
    for (int i = 0; i < dataset_size_; ++i) {
      for (std::size_t k = 0; k < mat_stride; ++k) noise_matrix_[i * mat_stride + k] -= mat_mean[k];
      for (int k = 0; k < dim_; ++k) noise_linear_[static_cast<std::size_t>(i) * dim_ + k] -= lin_mean[k];
    }
  }
}

std::shared_ptr<QuadraticObjective> QuadraticObjective::diagonal(
    std::vector<double> diag, std::vector<double> linear, int dataset_size,
    double noise_scale, std::uint64_t seed) {
  const int d = static_cast<int>(diag.size());
  std::vector<double> matrix(static_cast<std::size_t>(d) * d, 0.0);
  for (int k = 0; k < d; ++k) matrix[k * d + k] = diag[k];
  return std::make_shared<QuadraticObjective>(std::move(matrix), std::move(linear),
                                              dataset_size, noise_scale, seed);
}

const std::string& QuadraticObjective::kind() const {
  static const std::string name = "quadratic";
  return name;
}

const double* QuadraticObjective::sample_matrix(int sample) const {
  return noise_matrix_.empty()
             ? nullptr
             : noise_matrix_.data() + static_cast<std::size_t>(sample) * dim_ * dim_;
}

const double* QuadraticObjective::sample_linear(int sample) const {
  return noise_linear_.empty()
             ? nullptr
             : noise_linear_.data() + static_cast<std::size_t>(sample) * dim_;
}

double QuadraticObjective::sample_loss(int sample, std::span<const double> theta) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const double* delta_a = sample_matrix(sample);
  const double* delta_b = sample_linear(sample);
  double quad = 0.0;
  double lin = 0.0;
  for (int r = 0; r < dim_; ++r) {
    double row = 0.0;
    for (int c = 0; c < dim_; ++c) {
      double a = matrix_[r * dim_ + c];
      if (delta_a) a += delta_a[r * dim_ + c];
      row += a * theta[c];
    }
    quad += theta[r] * row;
    double b = linear_[r];
    if (delta_b) b += delta_b[r];
    lin += b * theta[r];
  }
  return 0.5 * quad - lin;
}

void QuadraticObjective::add_sample_gradient(int sample, std::span<const double> theta,
                                             std::span<double> grad) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const double* delta_a = sample_matrix(sample);
  const double* delta_b = sample_linear(sample);
  for (int r = 0; r < dim_; ++r) {
    double row = 0.0;
    for (int c = 0; c < dim_; ++c) {
      double a = matrix_[r * dim_ + c];
      if (delta_a) a += delta_a[r * dim_ + c];
      row += a * theta[c];
    }
    double b = linear_[r];
    if (delta_b) b += delta_b[r];
    grad[r] += row - b;
  }
}

std::vector<double> QuadraticObjective::minimizer() const {
  return solve_linear(matrix_, linear_);
}

double QuadraticObjective::minimum_loss() const {
  const std::vector<double> x = minimizer();
  return full_loss(*this, x);
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticRegressionObjective::LogisticRegressionObjective(int dimension, int dataset_size,
                                                         std::uint64_t seed,
                                                         double feature_scale)
    : dim_(dimension), dataset_size_(dataset_size) {
  if (dim_ < 1) throw ConfigError("logistic objective needs at least one feature");
  if (dataset_size_ < 1) throw ConfigError("dataset_size must be positive");
  if (feature_scale <= 0.0) throw ConfigError("feature_scale must be positive");

  std::mt19937_64 rng(mix_seed(seed, 0x106));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> truth(dim_);
  for (double& w : truth) w = normal(rng);

  features_.resize(static_cast<std::size_t>(dataset_size_) * dim_);
  labels_.resize(dataset_size_);
  for (int i = 0; i < dataset_size_; ++i) {
    double margin = 0.0;
    for (int k = 0; k < dim_; ++k) {
      const double x = feature_scale * normal(rng);
      features_[static_cast<std::size_t>(i) * dim_ + k] = x;
      margin += x * truth[k];
    }
    // Label sampled from the true class probability keeps the data
    // non-separable, so the optimum is finite.
    labels_[i] = uniform_unit(rng) < sigmoid(margin) ? 1.0 : -1.0;
  }
}

const std::string& LogisticRegressionObjective::kind() const {
  static const std::string name = "logistic";
  return name;
}

double LogisticRegressionObjective::sample_loss(int sample, std::span<const double> theta) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const double* x = features_.data() + static_cast<std::size_t>(sample) * dim_;
  double margin = 0.0;
  for (int k = 0; k < dim_; ++k) margin += x[k] * theta[k];
  return softplus(-labels_[sample] * margin);
}

void LogisticRegressionObjective::add_sample_gradient(int sample,
                                                      std::span<const double> theta,
                                                      std::span<double> grad) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const double* x = features_.data() + static_cast<std::size_t>(sample) * dim_;
  const double y = labels_[sample];
  double margin = 0.0;
  for (int k = 0; k < dim_; ++k) margin += x[k] * theta[k];
  const double weight = -y * sigmoid(-y * margin);
  for (int k = 0; k < dim_; ++k) grad[k] += weight * x[k];
}

// ---------------------------------------------------------------------------
// Tiny MLP

TinyMlpObjective::TinyMlpObjective(std::vector<int> layer_sizes, int dataset_size,
                                   std::uint64_t seed)
    : layers_(std::move(layer_sizes)), dataset_size_(dataset_size) {
  if (layers_.size() < 2) throw ConfigError("mlp needs at least input and output layers");
  for (int size : layers_) {
    if (size < 1) throw ConfigError("mlp layer sizes must be positive");
  }
  if (dataset_size_ < 1) throw ConfigError("dataset_size must be positive");
  parameter_count_ = 0;
  for (std::size_t layer = 1; layer < layers_.size(); ++layer) {
    parameter_count_ += layers_[layer] * (layers_[layer - 1] + 1);
  }
  if (parameter_count_ > 10'000) {
    throw ConfigError("mlp exceeds the 10000-parameter cap");
  }

  // Targets come from a fixed random teacher with the same architecture.
  std::mt19937_64 rng(mix_seed(seed, 0x3117));
  std::vector<double> teacher(parameter_count_);
  for (double& w : teacher) w = uniform_range(rng, -1.0, 1.0);

  const int in = layers_.front();
  const int out = layers_.back();
  inputs_.resize(static_cast<std::size_t>(dataset_size_) * in);
  targets_.resize(static_cast<std::size_t>(dataset_size_) * out);
  for (int i = 0; i < dataset_size_; ++i) {
    for (int k = 0; k < in; ++k) {
      inputs_[static_cast<std::size_t>(i) * in + k] = uniform_range(rng, -1.0, 1.0);
    }
    const auto activations = forward(teacher, inputs_.data() + static_cast<std::size_t>(i) * in);
    const std::vector<double>& output = activations.back();
    for (int k = 0; k < out; ++k) {
      targets_[static_cast<std::size_t>(i) * out + k] = output[k];
    }
  }
}

const std::string& TinyMlpObjective::kind() const {
  static const std::string name = "mlp";
  return name;
}

// Returns activations per layer; hidden layers use tanh, the output layer
// is linear. theta layout per layer: weights row major, then biases.
std::vector<std::vector<double>> TinyMlpObjective::forward(std::span<const double> theta,
                                                           const double* input) const {
  std::vector<std::vector<double>> activations(layers_.size());
  activations[0].assign(input, input + layers_[0]);
  std::size_t offset = 0;
  for (std::size_t layer = 1; layer < layers_.size(); ++layer) {
    const int rows = layers_[layer];
    const int cols = layers_[layer - 1];
    const double* weights = theta.data() + offset;
    const double* bias = weights + static_cast<std::size_t>(rows) * cols;
    const std::vector<double>& below = activations[layer - 1];
    std::vector<double>& level = activations[layer];
    level.resize(rows);
    const bool hidden = layer + 1 < layers_.size();
    for (int r = 0; r < rows; ++r) {
      double z = bias[r];
      const double* row = weights + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) z += row[c] * below[c];
      level[r] = hidden ? std::tanh(z) : z;
    }
    offset += static_cast<std::size_t>(rows) * (cols + 1);
  }
  return activations;
}

double TinyMlpObjective::sample_loss(int sample, std::span<const double> theta) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const int in = layers_.front();
  const int out = layers_.back();
  const auto activations = forward(theta, inputs_.data() + static_cast<std::size_t>(sample) * in);
  const std::vector<double>& output = activations.back();
  const double* target = targets_.data() + static_cast<std::size_t>(sample) * out;
  double loss = 0.0;
  for (int k = 0; k < out; ++k) {
    const double diff = output[k] - target[k];
    loss += diff * diff;
  }
  return 0.5 * loss;
}

void TinyMlpObjective::add_sample_gradient(int sample, std::span<const double> theta,
                                           std::span<double> grad) const {
  check_sample(*this, sample);
  check_dimension(*this, theta);
  const int in = layers_.front();
  const int out = layers_.back();
  const auto activations = forward(theta, inputs_.data() + static_cast<std::size_t>(sample) * in);

  std::vector<double> delta(activations.back());
  const double* target = targets_.data() + static_cast<std::size_t>(sample) * out;
  for (int k = 0; k < out; ++k) delta[k] -= target[k];

  // Layer parameter offsets, innermost first for the backward sweep.
  std::vector<std::size_t> offsets(layers_.size(), 0);
  std::size_t offset = 0;
  for (std::size_t layer = 1; layer < layers_.size(); ++layer) {
    offsets[layer] = offset;
    offset += static_cast<std::size_t>(layers_[layer]) * (layers_[layer - 1] + 1);
  }

  for (std::size_t layer = layers_.size() - 1; layer >= 1; --layer) {
    const int rows = layers_[layer];
    const int cols = layers_[layer - 1];
    const double* weights = theta.data() + offsets[layer];
    double* grad_weights = grad.data() + offsets[layer];
    double* grad_bias = grad_weights + static_cast<std::size_t>(rows) * cols;
    const std::vector<double>& below = activations[layer - 1];
    for (int r = 0; r < rows; ++r) {
      double* grad_row = grad_weights + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) grad_row[c] += delta[r] * below[c];
      grad_bias[r] += delta[r];
    }
    if (layer == 1) break;
    std::vector<double> next(cols, 0.0);
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < rows; ++r) acc += weights[static_cast<std::size_t>(r) * cols + c] * delta[r];
      // below is a tanh activation for every non-input layer
      next[c] = acc * (1.0 - below[c] * below[c]);
    }
    delta = std::move(next);
  }
}

}  // namespace asgd
