#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace asgd {

/// Indices of the samples forming one mini-batch, drawn with replacement.
struct MinibatchSpec {
  std::vector<int> sample_indices;
};

/// A finite-sum objective: the mean of per-sample losses over a fixed
/// synthetic dataset. Implementations are immutable after construction and
/// safe to evaluate concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual const std::string& kind() const = 0;
  virtual int dimension() const = 0;
  virtual int dataset_size() const = 0;
  virtual double sample_loss(int sample, std::span<const double> theta) const = 0;
  /// Accumulates the gradient of sample's loss at theta into grad.
  virtual void add_sample_gradient(int sample, std::span<const double> theta,
                                   std::span<double> grad) const = 0;
};

/// Mean gradient over the batch: sums per-sample gradients in index order,
/// then divides by the batch length.
std::vector<double> minibatch_gradient(const Objective& objective,
                                       std::span<const double> theta,
                                       const MinibatchSpec& batch);

/// Mean per-sample loss over the whole dataset.
double full_loss(const Objective& objective, std::span<const double> theta);

/// Mean per-sample gradient over the whole dataset, summed in index order.
std::vector<double> full_gradient(const Objective& objective, std::span<const double> theta);

/// Squared Euclidean norm of the full gradient.
double gradient_norm_sq(const Objective& objective, std::span<const double> theta);

/// Max over coordinates of the relative error between the analytic full
/// gradient and central differences of the full loss. Relative error uses
/// max(1, |analytic|) as denominator.
double finite_difference_check(const Objective& objective, std::span<const double> theta,
                               double step);

/// Seeded parameter initialization, uniform in [-0.1, 0.1].
std::vector<double> initial_weights(int dimension, std::uint64_t seed);

/// Per-sample loss 0.5 x'A_i x - b_i' x where the A_i, b_i average exactly
/// to the configured A and b. noise_scale = 0 makes every sample identical.
class QuadraticObjective : public Objective {
 public:
  QuadraticObjective(std::vector<double> matrix, std::vector<double> linear,
                     int dataset_size, double noise_scale, std::uint64_t seed);

  static std::shared_ptr<QuadraticObjective> diagonal(std::vector<double> diag,
                                                      std::vector<double> linear,
                                                      int dataset_size, double noise_scale,
                                                      std::uint64_t seed);

  const std::string& kind() const override;
  int dimension() const override { return dim_; }
  int dataset_size() const override { return dataset_size_; }
  double sample_loss(int sample, std::span<const double> theta) const override;
  void add_sample_gradient(int sample, std::span<const double> theta,
                           std::span<double> grad) const override;

  /// Solves A x = b for the unique stationary point (A must be positive
  /// definite for this to be the minimizer).
  std::vector<double> minimizer() const;
  double minimum_loss() const;

 private:
  const double* sample_matrix(int sample) const;
  const double* sample_linear(int sample) const;

  int dim_;
  int dataset_size_;
  double noise_scale_;
  std::vector<double> matrix_;        // d*d, row major, symmetric
  std::vector<double> linear_;        // d
  std::vector<double> noise_matrix_;  // N*d*d deltas, empty when noise_scale == 0
  std::vector<double> noise_linear_;  // N*d deltas
};

/// Binary logistic regression on synthetic Gaussian features with labels
/// flipped according to the true class probability, so the optimum is finite.
class LogisticRegressionObjective : public Objective {
 public:
  LogisticRegressionObjective(int dimension, int dataset_size, std::uint64_t seed,
                              double feature_scale = 1.0);

  const std::string& kind() const override;
  int dimension() const override { return dim_; }
  int dataset_size() const override { return dataset_size_; }
  double sample_loss(int sample, std::span<const double> theta) const override;
  void add_sample_gradient(int sample, std::span<const double> theta,
                           std::span<double> grad) const override;

 private:
  int dim_;
  int dataset_size_;
  std::vector<double> features_;  // N*d row major
  std::vector<double> labels_;    // +-1
};

/// Fully-connected network with tanh hidden units, a linear output layer
/// and squared-error loss against targets from a fixed random teacher
/// network. Backpropagation is written out by hand; total parameter count
/// is capped at 10000.
class TinyMlpObjective : public Objective {
 public:
  TinyMlpObjective(std::vector<int> layer_sizes, int dataset_size, std::uint64_t seed);

  const std::string& kind() const override;
  int dimension() const override { return parameter_count_; }
  int dataset_size() const override { return dataset_size_; }
  double sample_loss(int sample, std::span<const double> theta) const override;
  void add_sample_gradient(int sample, std::span<const double> theta,
                           std::span<double> grad) const override;

  const std::vector<int>& layer_sizes() const { return layers_; }

 private:
  std::vector<std::vector<double>> forward(std::span<const double> theta,
                                           const double* input) const;

  std::vector<int> layers_;
  int parameter_count_;
  int dataset_size_;
  std::vector<double> inputs_;   // N * layers_.front()
  std::vector<double> targets_;  // N * layers_.back()
};

}  // namespace asgd
