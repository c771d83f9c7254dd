#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aslip/simenv.hpp"

namespace aslip::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Fully connected network: ReLU on hidden layers, linear output. Batched
/// calls take one sample per column.
class Mlp {
 public:
  struct Tape {
    std::vector<MatrixXd> inputs;  // input of each layer
    std::vector<MatrixXd> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// `sizes` = [input, hidden..., output].
  explicit Mlp(std::vector<int> sizes);

  /// He-normal hidden weights, output weights scaled by `output_gain`, zero biases.
  void init(std::mt19937_64& rng, double output_gain);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int parameter_count() const;
  /// Layer by layer: weights (column-major) then biases.
  VectorXd parameters() const;
  void set_parameters(const VectorXd& p);

  MatrixXd forward(const MatrixXd& x) const;
  MatrixXd forward(const MatrixXd& x, Tape& tape) const;
  VectorXd forward(const VectorXd& x) const;
  /// Gradient of sum(dout .* output) with respect to the parameters.
  VectorXd backward(const Tape& tape, const MatrixXd& dout) const;

 private:
  std::vector<int> sizes_;
  std::vector<MatrixXd> weights_;
  std::vector<VectorXd> biases_;
};

/// Diagonal Gaussian policy with a state-independent, fixed log standard deviation.
struct PolicyNet {
  Mlp mean;
  VectorXd log_std;

  int action_dim() const { return mean.output_dim(); }
  void validate() const;
};

double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std, const VectorXd& action);
/// d log p / d mean.
VectorXd gaussian_log_prob_grad(const VectorXd& mean, const VectorXd& log_std, const VectorXd& action);

struct SampledAction {
  VectorXd action;
  double log_prob = 0.0;
};
SampledAction sample_action(const VectorXd& mean, const VectorXd& log_std, std::mt19937_64& rng);

/// Running mean and variance of observations, merged batch-wise.
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim);

  void update(const MatrixXd& batch);  // one observation per column
  VectorXd normalize(const VectorXd& x) const;
  MatrixXd normalize(const MatrixXd& x) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const VectorXd& mean() const { return mean_; }
  VectorXd variance() const;
  void restore(double count, VectorXd mean, VectorXd m2);
  const VectorXd& m2() const { return m2_; }

  static constexpr double kClip = 10.0;

 private:
  double count_ = 0.0;
  VectorXd mean_, m2_;
};

struct PpoConfig {
  double learning_rate = 1e-4;
  double adam_epsilon = 1e-5;
  double gamma = 0.99;
  double clip = 0.2;
  int epochs = 3;
  int minibatch = 64;
  int sample_size = 5096;
  double gae_lambda = 0.95;
  int hidden_width = 64;
  int hidden_layers = 2;
  double log_std = -2.0;

  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// `next_values[t]` is the value of the state reached by step t. A terminal
/// step does not bootstrap; an episode end (terminal or truncated) stops the
/// recursion.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& terminal,
                      const std::vector<bool>& episode_end, double gamma, double lambda);

double clipped_surrogate(double ratio, double advantage, double clip);

struct RolloutBatch {
  MatrixXd observations;  // normalized, one column per step
  MatrixXd actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> next_values;
  std::vector<bool> terminal;
  std::vector<bool> episode_end;
  std::vector<double> advantages;
  std::vector<double> returns;

  int size() const { return static_cast<int>(rewards.size()); }
  void append(const RolloutBatch& other);
  /// Fills advantages and returns.
  void finish(double gamma, double lambda);
  /// Shifts and scales advantages to zero mean and unit standard deviation.
  void normalize_advantages();
};

struct LossStats {
  double policy_loss = 0.0;  // negated clipped surrogate
  double value_loss = 0.0;   // mean squared error
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Minibatch losses with gradients of policy_loss and value_loss.
LossStats ppo_loss(const PolicyNet& policy, const Mlp& value, const RolloutBatch& batch, const std::vector<int>& index,
                   double clip, VectorXd* policy_grad, VectorXd* value_grad);

class Adam {
 public:
  Adam() = default;
  Adam(int n, double lr, double eps, double beta1 = 0.9, double beta2 = 0.999);
  void step(VectorXd& params, const VectorXd& grad);
  int steps() const { return t_; }

 private:
  double lr_ = 1e-4, eps_ = 1e-5, beta1_ = 0.9, beta2_ = 0.999;
  int t_ = 0;
  VectorXd m_, v_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Epochs of shuffled minibatch steps on the clipped surrogate and the value
/// regression. Advantages are normalized first. Throws TrainingDiverged on a
/// non-finite loss.
LossStats ppo_update(PolicyNet& policy, Mlp& value, Adam& policy_opt, Adam& value_opt, RolloutBatch& batch,
                     const PpoConfig& cfg, std::mt19937_64& rng);

// ---- environments ------------------------------------------------------------

struct EnvStep {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // ended by the step cap rather than failure
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Observation reset(std::mt19937_64& rng) = 0;
  virtual EnvStep step(const Action& action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>(int worker)>;

/// Walking with a commanded speed drawn uniformly per episode.
class WalkTask : public Environment {
 public:
  WalkTask(std::shared_ptr<const GaitLibrary> lib, SimConfig cfg, double speed_min, double speed_max);
  int observation_dim() const override { return kObservationDim; }
  int action_dim() const override { return kActionDim; }
  Observation reset(std::mt19937_64& rng) override;
  EnvStep step(const Action& action) override;
  const WalkEnv& env() const { return env_; }

 private:
  WalkEnv env_;
  double speed_min_, speed_max_;
};

/// One-step episodes: observe x ~ U(-1, 1), reward 1 - (a - x)^2. The best
/// expected reward under a fixed standard deviation s is 1 - s^2.
class QuadraticBandit : public Environment {
 public:
  int observation_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Observation reset(std::mt19937_64& rng) override;
  EnvStep step(const Action& action) override;

 private:
  double x_ = 0.0;
};

// ---- training ----------------------------------------------------------------

struct IterationLog {
  int iteration = 0;
  long long steps = 0;
  int episodes = 0;  // episodes finished during this iteration
  double mean_episode_reward = 0.0;
  double mean_episode_length = 0.0;
  double mean_step_reward = 0.0;
  LossStats loss;
};

struct TrainOptions {
  long long total_steps = 1'000'000;
  int workers = 1;
  std::uint64_t seed = 1;
  /// Called after every update with the updated agent.
  std::function<void(const IterationLog&, const struct Agent&)> on_iteration;
};

struct Agent {
  PolicyNet policy;
  Mlp value;
  RunningNorm norm;
  long long steps = 0;

  VectorXd act(const Observation& obs) const;  // mean action
};

struct TrainResult {
  Agent agent;
  std::vector<IterationLog> curve;
};

/// Collection is split evenly over `workers` threads, each owning one
/// environment and one random stream derived from the seed; results are
/// identical for a fixed seed and worker count. `resume` continues training
/// from a saved agent (optimizer moments restart).
TrainResult train(const EnvFactory& factory, const PpoConfig& cfg, const TrainOptions& opts,
                  const Agent* resume = nullptr);

void write_curve_csv(const std::vector<IterationLog>& curve, std::ostream& out,
                     const std::vector<std::string>& header = {});

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Agent& agent, const PpoConfig& cfg, const std::string& path,
                     const std::string& config_fingerprint = {});
Agent load_checkpoint(const std::string& path, PpoConfig* cfg = nullptr);

// ---- evaluation --------------------------------------------------------------

struct EvalReport {
  double commanded_speed = 0.0;
  int horizon = 0;   // control steps requested
  int survived = 0;  // control steps before the episode ended
  bool fell = false;
  /// Per-step reward averaged over the horizon, counting 0 after an early end.
  double mean_step_reward = 0.0;
  double mean_speed = 0.0;  // forward displacement over survived time
  double speed_error = 0.0;
  int touchdowns = 0;
  double mean_touchdown_error = 0.0;
};

struct SpeedSegment {
  double speed = 0.5;
  double seconds = 10.0;
};

/// Deterministic (mean-action) episode from a random phase that holds each
/// commanded speed for its duration in turn; one report per segment. Once the
/// robot falls, later segments report nothing survived.
std::vector<EvalReport> evaluate_script(const Agent& agent, std::shared_ptr<const GaitLibrary> lib, SimConfig cfg,
                                        const std::vector<SpeedSegment>& script, std::uint64_t seed,
                                        std::vector<StepRecord>* log = nullptr);

/// Single-segment evaluate_script.
EvalReport evaluate_policy(const Agent& agent, std::shared_ptr<const GaitLibrary> lib, SimConfig cfg, double speed,
                           double seconds, std::uint64_t seed, std::vector<StepRecord>* log = nullptr);

}  // namespace aslip::rl
