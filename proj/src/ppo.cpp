#include "aslip/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace aslip::rl {

using json = nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

MatrixXd relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

}  // namespace

// ---- networks ----------------------------------------------------------------

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("network needs at least an input and an output size");
  for (int s : sizes_)
    if (s < 1) throw std::invalid_argument("layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.push_back(MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
    biases_.push_back(VectorXd::Zero(sizes_[l + 1]));
  }
}

void Mlp::init(std::mt19937_64& rng, double output_gain) {
  std::normal_distribution<double> N(0.0, 1.0);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double scale = std::sqrt(2.0 / weights_[l].cols()) * (l + 1 == weights_.size() ? output_gain : 1.0);
    for (int j = 0; j < weights_[l].cols(); ++j)
      for (int i = 0; i < weights_[l].rows(); ++i) weights_[l](i, j) = scale * N(rng);
    biases_[l].setZero();
  }
}

int Mlp::parameter_count() const {
  int n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

VectorXd Mlp::parameters() const {
  VectorXd p(parameter_count());
  int at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    p.segment(at, weights_[l].size()) = Eigen::Map<const VectorXd>(weights_[l].data(), weights_[l].size());
    at += weights_[l].size();
    p.segment(at, biases_[l].size()) = biases_[l];
    at += biases_[l].size();
  }
  return p;
}

void Mlp::set_parameters(const VectorXd& p) {
  if (p.size() != parameter_count())
    throw std::invalid_argument("expected " + std::to_string(parameter_count()) + " parameters, got " +
                                std::to_string(p.size()));
  int at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::Map<VectorXd>(weights_[l].data(), weights_[l].size()) = p.segment(at, weights_[l].size());
    at += weights_[l].size();
    biases_[l] = p.segment(at, biases_[l].size());
    at += biases_[l].size();
  }
}

MatrixXd Mlp::forward(const MatrixXd& x, Tape& tape) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("network input has " + std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(input_dim()));
  tape.inputs.clear();
  tape.pre.clear();
  MatrixXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    tape.inputs.push_back(h);
    MatrixXd z = weights_[l] * h;
    z.colwise() += biases_[l];
    tape.pre.push_back(z);
    h = l + 1 == weights_.size() ? z : relu(z);
  }
  return h;
}

MatrixXd Mlp::forward(const MatrixXd& x) const {
  Tape tape;
  return forward(x, tape);
}

VectorXd Mlp::forward(const VectorXd& x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("network input has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(input_dim()));
  VectorXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    VectorXd z = weights_[l] * h + biases_[l];
    h = l + 1 == weights_.size() ? z : VectorXd(z.cwiseMax(0.0));
  }
  return h;
}

VectorXd Mlp::backward(const Tape& tape, const MatrixXd& dout) const {
  VectorXd grad(parameter_count());
  std::vector<int> offset(weights_.size());
  int at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offset[l] = at;
    at += weights_[l].size() + biases_[l].size();
  }
  MatrixXd delta = dout;
  for (int l = static_cast<int>(weights_.size()) - 1; l >= 0; --l) {
    const MatrixXd gw = delta * tape.inputs[l].transpose();
    grad.segment(offset[l], gw.size()) = Eigen::Map<const VectorXd>(gw.data(), gw.size());
    grad.segment(offset[l] + gw.size(), biases_[l].size()) = delta.rowwise().sum();
    if (l > 0) {
      delta = (weights_[l].transpose() * delta).cwiseProduct((tape.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return grad;
}

void PolicyNet::validate() const {
  if (log_std.size() != mean.output_dim()) throw std::invalid_argument("log_std length differs from the action size");
  if (!log_std.allFinite()) throw std::invalid_argument("log_std must be finite");
}

double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std, const VectorXd& action) {
  if (mean.size() != action.size() || log_std.size() != action.size())
    throw std::invalid_argument("gaussian_log_prob: size mismatch");
  const VectorXd z = (action - mean).cwiseQuotient(log_std.array().exp().matrix());
  return -0.5 * z.squaredNorm() - log_std.sum() - 0.5 * action.size() * kLog2Pi;
}

VectorXd gaussian_log_prob_grad(const VectorXd& mean, const VectorXd& log_std, const VectorXd& action) {
  return (action - mean).cwiseQuotient((2.0 * log_std).array().exp().matrix());
}

SampledAction sample_action(const VectorXd& mean, const VectorXd& log_std, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  SampledAction s;
  s.action.resize(mean.size());
  for (int i = 0; i < mean.size(); ++i) s.action(i) = mean(i) + std::exp(log_std(i)) * N(rng);
  s.log_prob = gaussian_log_prob(mean, log_std, s.action);
  return s;
}

// ---- observation normalization ---------------------------------------------

RunningNorm::RunningNorm(int dim) : mean_(VectorXd::Zero(dim)), m2_(VectorXd::Zero(dim)) {}

void RunningNorm::update(const MatrixXd& batch) {
  if (batch.cols() == 0) return;
  if (batch.rows() != dim()) throw std::invalid_argument("normalizer batch has the wrong dimension");
  const double nb = static_cast<double>(batch.cols());
  const VectorXd mb = batch.rowwise().mean();
  const VectorXd m2b = (batch.colwise() - mb).rowwise().squaredNorm();
  const double n = count_ + nb;
  const VectorXd delta = mb - mean_;
  mean_ += delta * (nb / n);
  m2_ += m2b + delta.cwiseProduct(delta) * (count_ * nb / n);
  count_ = n;
}

VectorXd RunningNorm::variance() const {
  if (count_ < 2.0) return VectorXd::Ones(dim());
  return m2_ / count_;
}

VectorXd RunningNorm::normalize(const VectorXd& x) const {
  if (x.size() != dim()) throw std::invalid_argument("observation has the wrong dimension for the normalizer");
  const VectorXd sd = (variance().array().sqrt() + 1e-8).matrix();
  return (x - mean_).cwiseQuotient(sd).cwiseMax(-kClip).cwiseMin(kClip);
}

MatrixXd RunningNorm::normalize(const MatrixXd& x) const {
  MatrixXd out(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) out.col(j) = normalize(VectorXd(x.col(j)));
  return out;
}

void RunningNorm::restore(double count, VectorXd mean, VectorXd m2) {
  if (mean.size() != m2.size() || !(count >= 0.0)) throw std::invalid_argument("inconsistent normalizer statistics");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

// ---- PPO pieces --------------------------------------------------------------

void PpoConfig::validate() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(learning_rate) || !positive(adam_epsilon) || !positive(gamma) || gamma > 1.0)
    throw std::invalid_argument("learning rate, Adam epsilon and discount must be positive (discount <= 1)");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must lie in (0, 1)");
  if (epochs < 1 || minibatch < 1 || sample_size < 1 || minibatch > sample_size)
    throw std::invalid_argument("epochs, minibatch and sample size must be positive with minibatch <= sample size");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("GAE lambda must lie in [0, 1]");
  if (hidden_width < 1 || hidden_layers < 1) throw std::invalid_argument("network needs positive width and depth");
  if (!std::isfinite(log_std)) throw std::invalid_argument("log_std must be finite");
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& terminal,
                      const std::vector<bool>& episode_end, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || terminal.size() != n || episode_end.size() != n)
    throw std::invalid_argument("compute_gae: arrays differ in length");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next = terminal[i] ? 0.0 : next_values[i];
    const double delta = rewards[i] + gamma * next - values[i];
    running = delta + (episode_end[i] ? 0.0 : gamma * lambda * running);
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

void RolloutBatch::append(const RolloutBatch& o) {
  const auto cat = [](MatrixXd& a, const MatrixXd& b) {
    if (a.size() == 0) {
      a = b;
      return;
    }
    MatrixXd c(a.rows(), a.cols() + b.cols());
    c << a, b;
    a = std::move(c);
  };
  cat(observations, o.observations);
  cat(actions, o.actions);
  const auto add = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  add(log_probs, o.log_probs);
  add(rewards, o.rewards);
  add(values, o.values);
  add(next_values, o.next_values);
  add(terminal, o.terminal);
  add(episode_end, o.episode_end);
  add(advantages, o.advantages);
  add(returns, o.returns);
}

void RolloutBatch::finish(double gamma, double lambda) {
  GaeResult g = compute_gae(rewards, values, next_values, terminal, episode_end, gamma, lambda);
  advantages = std::move(g.advantages);
  returns = std::move(g.returns);
}

void RolloutBatch::normalize_advantages() {
  const double n = static_cast<double>(advantages.size());
  if (n < 2) return;
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : advantages) a = (a - mean) / (sd + 1e-12);
}

LossStats ppo_loss(const PolicyNet& policy, const Mlp& value, const RolloutBatch& batch, const std::vector<int>& index,
                   double clip, VectorXd* policy_grad, VectorXd* value_grad) {
  const int m = static_cast<int>(index.size());
  if (m == 0) throw std::invalid_argument("ppo_loss: empty minibatch");
  MatrixXd X(batch.observations.rows(), m), A(batch.actions.rows(), m);
  for (int j = 0; j < m; ++j) {
    X.col(j) = batch.observations.col(index[j]);
    A.col(j) = batch.actions.col(index[j]);
  }

  LossStats s;
  Mlp::Tape ptape, vtape;
  const MatrixXd mu = policy.mean.forward(X, ptape);
  MatrixXd dmu = MatrixXd::Zero(mu.rows(), m);
  for (int j = 0; j < m; ++j) {
    const int i = index[j];
    const VectorXd a = A.col(j), mean = mu.col(j);
    const double logp = gaussian_log_prob(mean, policy.log_std, a);
    const double ratio = std::exp(logp - batch.log_probs[i]);
    const double adv = batch.advantages[i];
    s.policy_loss -= clipped_surrogate(ratio, adv, clip) / m;
    s.approx_kl += (batch.log_probs[i] - logp) / m;
    if (std::abs(ratio - 1.0) > clip) s.clip_fraction += 1.0 / m;
    // the unclipped branch carries the gradient; the clipped one is flat
    if (ratio * adv <= std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv)
      dmu.col(j) = -(adv * ratio / m) * gaussian_log_prob_grad(mean, policy.log_std, a);
  }
  if (policy_grad) *policy_grad = policy.mean.backward(ptape, dmu);

  const MatrixXd v = value.forward(X, vtape);
  MatrixXd dv(1, m);
  for (int j = 0; j < m; ++j) {
    const double err = v(0, j) - batch.returns[index[j]];
    s.value_loss += err * err / m;
    dv(0, j) = 2.0 * err / m;
  }
  if (value_grad) *value_grad = value.backward(vtape, dv);
  return s;
}

Adam::Adam(int n, double lr, double eps, double beta1, double beta2)
    : lr_(lr), eps_(eps), beta1_(beta1), beta2_(beta2), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

LossStats ppo_update(PolicyNet& policy, Mlp& value, Adam& policy_opt, Adam& value_opt, RolloutBatch& batch,
                     const PpoConfig& cfg, std::mt19937_64& rng) {
  batch.normalize_advantages();
  std::vector<int> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  LossStats total;
  int count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < batch.size(); start += cfg.minibatch) {
      const std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min<int>(start + cfg.minibatch, batch.size()));
      VectorXd gp, gv;
      const LossStats s = ppo_loss(policy, value, batch, idx, cfg.clip, &gp, &gv);
      if (!std::isfinite(s.policy_loss) || !std::isfinite(s.value_loss) || !gp.allFinite() || !gv.allFinite()) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "non-finite PPO loss in epoch %d at minibatch offset %d (policy %g, value %g)",
                      epoch, start, s.policy_loss, s.value_loss);
        throw TrainingDiverged(buf);
      }
      VectorXd p = policy.mean.parameters();
      policy_opt.step(p, gp);
      policy.mean.set_parameters(p);
      VectorXd q = value.parameters();
      value_opt.step(q, gv);
      value.set_parameters(q);
      total.policy_loss += s.policy_loss;
      total.value_loss += s.value_loss;
      total.approx_kl += s.approx_kl;
      total.clip_fraction += s.clip_fraction;
      ++count;
    }
  }
  total.policy_loss /= count;
  total.value_loss /= count;
  total.approx_kl /= count;
  total.clip_fraction /= count;
  return total;
}

// ---- environments ------------------------------------------------------------

WalkTask::WalkTask(std::shared_ptr<const GaitLibrary> lib, SimConfig cfg, double speed_min, double speed_max)
    : env_(std::move(lib), cfg), speed_min_(speed_min), speed_max_(speed_max) {
  if (!(speed_min <= speed_max)) throw std::invalid_argument("speed range is empty");
}

Observation WalkTask::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(speed_min_, speed_max_);
  const double speed = speed_min_ == speed_max_ ? speed_min_ : U(rng);
  return env_.reset(speed, rng);
}

EnvStep WalkTask::step(const Action& action) {
  StepResult r = env_.step(action);
  EnvStep s;
  s.observation = std::move(r.observation);
  s.reward = r.reward;
  s.done = r.done;
  s.truncated = r.done && !r.fault && r.reward >= kTerminationReward;
  return s;
}

Observation QuadraticBandit::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  x_ = U(rng);
  return {x_};
}

EnvStep QuadraticBandit::step(const Action& action) {
  if (action.size() != 1) throw std::invalid_argument("bandit action is one-dimensional");
  EnvStep s;
  s.reward = 1.0 - (action[0] - x_) * (action[0] - x_);
  s.done = true;
  s.observation = {x_};
  return s;
}

// ---- training ----------------------------------------------------------------

VectorXd Agent::act(const Observation& obs) const {
  return policy.mean.forward(norm.normalize(VectorXd(Eigen::Map<const VectorXd>(obs.data(), obs.size()))));
}

namespace {

struct Worker {
  std::unique_ptr<Environment> env;
  std::mt19937_64 rng;
  Observation obs;
  bool started = false;
  double episode_reward = 0.0;
  int episode_length = 0;

  RolloutBatch batch;
  MatrixXd raw;
  std::vector<double> finished_rewards;
  std::vector<int> finished_lengths;
};

void collect(Worker& w, const Agent& agent, int steps) {
  const int od = w.env->observation_dim(), ad = w.env->action_dim();
  if (!w.started) {
    w.obs = w.env->reset(w.rng);
    w.started = true;
  }
  RolloutBatch& b = w.batch;
  b = {};
  b.observations.resize(od, steps);
  b.actions.resize(ad, steps);
  w.raw.resize(od, steps);
  w.finished_rewards.clear();
  w.finished_lengths.clear();
  std::vector<bool> bootstrap_next(steps, false);

  const auto value_of = [&](const VectorXd& normalized) { return agent.value.forward(normalized)(0); };
  for (int t = 0; t < steps; ++t) {
    const VectorXd raw = Eigen::Map<const VectorXd>(w.obs.data(), w.obs.size());
    const VectorXd x = agent.norm.normalize(raw);
    const SampledAction sa = sample_action(agent.policy.mean.forward(x), agent.policy.log_std, w.rng);
    const double v = value_of(x);
    const EnvStep st = w.env->step(Action(sa.action.data(), sa.action.data() + ad));

    w.raw.col(t) = raw;
    b.observations.col(t) = x;
    b.actions.col(t) = sa.action;
    b.log_probs.push_back(sa.log_prob);
    b.rewards.push_back(st.reward);
    b.values.push_back(v);
    w.episode_reward += st.reward;
    ++w.episode_length;

    const bool last = t + 1 == steps;
    b.terminal.push_back(st.done && !st.truncated);
    b.episode_end.push_back(st.done || last);
    if (st.done) {
      const VectorXd final_obs = Eigen::Map<const VectorXd>(st.observation.data(), st.observation.size());
      b.next_values.push_back(st.truncated ? value_of(agent.norm.normalize(final_obs)) : 0.0);
      w.finished_rewards.push_back(w.episode_reward);
      w.finished_lengths.push_back(w.episode_length);
      w.episode_reward = 0.0;
      w.episode_length = 0;
      w.obs = w.env->reset(w.rng);
    } else {
      w.obs = st.observation;
      b.next_values.push_back(0.0);
      if (last) {
        b.next_values.back() = value_of(agent.norm.normalize(VectorXd(Eigen::Map<const VectorXd>(w.obs.data(), w.obs.size()))));
      } else {
        bootstrap_next[t] = true;
      }
    }
  }
  for (int t = 0; t + 1 < steps; ++t)
    if (bootstrap_next[t]) b.next_values[t] = b.values[t + 1];
}

}  // namespace

TrainResult train(const EnvFactory& factory, const PpoConfig& cfg, const TrainOptions& opts, const Agent* resume) {
  cfg.validate();
  if (opts.workers < 1) throw std::invalid_argument("need at least one worker");
  if (opts.total_steps < 1) throw std::invalid_argument("total_steps must be positive");

  std::vector<Worker> workers(opts.workers);
  for (int i = 0; i < opts.workers; ++i) {
    workers[i].env = factory(i);
    std::seed_seq seq{static_cast<std::uint64_t>(opts.seed), static_cast<std::uint64_t>(i), std::uint64_t{0x5eed}};
    workers[i].rng.seed(seq);
  }
  const int od = workers[0].env->observation_dim(), ad = workers[0].env->action_dim();

  TrainResult out;
  Agent& agent = out.agent;
  std::seed_seq master_seq{static_cast<std::uint64_t>(opts.seed), std::uint64_t{0x3a57e5}};
  std::mt19937_64 master(master_seq);
  if (resume) {
    agent = *resume;
    if (agent.policy.mean.input_dim() != od || agent.policy.action_dim() != ad)
      throw std::invalid_argument("checkpoint does not match the environment dimensions");
  } else {
    std::vector<int> sizes{od};
    for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden_width);
    sizes.push_back(ad);
    agent.policy.mean = Mlp(sizes);
    agent.policy.mean.init(master, 0.01);
    agent.policy.log_std = VectorXd::Constant(ad, cfg.log_std);
    sizes.back() = 1;
    agent.value = Mlp(sizes);
    agent.value.init(master, 1.0);
    agent.norm = RunningNorm(od);
  }
  agent.policy.validate();

  Adam popt(agent.policy.mean.parameter_count(), cfg.learning_rate, cfg.adam_epsilon);
  Adam vopt(agent.value.parameter_count(), cfg.learning_rate, cfg.adam_epsilon);
  const int per_worker = (cfg.sample_size + opts.workers - 1) / opts.workers;

  const long long target = agent.steps + opts.total_steps;
  for (int it = 0; agent.steps < target; ++it) {
    if (opts.workers == 1) {
      collect(workers[0], agent, per_worker);
    } else {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(opts.workers);
      for (int i = 0; i < opts.workers; ++i)
        threads.emplace_back([&, i] {
          try {
            collect(workers[i], agent, per_worker);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      for (std::thread& t : threads) t.join();
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    RolloutBatch batch;
    IterationLog log;
    log.iteration = it;
    double reward_sum = 0.0, episode_sum = 0.0, length_sum = 0.0;
    for (Worker& w : workers) {
      batch.append(w.batch);
      agent.norm.update(w.raw);
      for (double r : w.batch.rewards) reward_sum += r;
      for (double r : w.finished_rewards) episode_sum += r;
      for (int l : w.finished_lengths) length_sum += l;
      log.episodes += static_cast<int>(w.finished_rewards.size());
    }
    batch.finish(cfg.gamma, cfg.gae_lambda);
    agent.steps += batch.size();
    log.steps = agent.steps;
    log.mean_step_reward = reward_sum / batch.size();
    if (log.episodes > 0) {
      log.mean_episode_reward = episode_sum / log.episodes;
      log.mean_episode_length = length_sum / log.episodes;
    }
    log.loss = ppo_update(agent.policy, agent.value, popt, vopt, batch, cfg, master);
    out.curve.push_back(log);
    if (opts.on_iteration) opts.on_iteration(log, agent);
  }
  return out;
}

void write_curve_csv(const std::vector<IterationLog>& curve, std::ostream& out, const std::vector<std::string>& header) {
  for (const std::string& h : header) out << "# " << h << '\n';
  out << "iteration,steps,episodes,mean_episode_reward,mean_episode_length,mean_step_reward,policy_loss,value_loss,"
         "approx_kl,clip_fraction\n";
  char buf[64];
  for (const IterationLog& l : curve) {
    out << l.iteration << ',' << l.steps << ',' << l.episodes;
    for (double v : {l.mean_episode_reward, l.mean_episode_length, l.mean_step_reward, l.loss.policy_loss,
                     l.loss.value_loss, l.loss.approx_kl, l.loss.clip_fraction}) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

// ---- checkpoints -------------------------------------------------------------

namespace {

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vec_from(const json& j) {
  const std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), v.size());
}

json net_json(const Mlp& net) { return {{"sizes", net.sizes()}, {"parameters", vec_json(net.parameters())}}; }

Mlp net_from(const json& j) {
  Mlp net(j.at("sizes").get<std::vector<int>>());
  net.set_parameters(vec_from(j.at("parameters")));
  return net;
}

}  // namespace

void save_checkpoint(const Agent& agent, const PpoConfig& cfg, const std::string& path,
                     const std::string& config_fingerprint) {
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  if (!config_fingerprint.empty()) doc["config_fingerprint"] = config_fingerprint;
  doc["config"] = {{"learning_rate", cfg.learning_rate}, {"adam_epsilon", cfg.adam_epsilon}, {"gamma", cfg.gamma},
                   {"clip", cfg.clip},                   {"epochs", cfg.epochs},             {"minibatch", cfg.minibatch},
                   {"sample_size", cfg.sample_size},     {"gae_lambda", cfg.gae_lambda},
                   {"hidden_width", cfg.hidden_width},   {"hidden_layers", cfg.hidden_layers},
                   {"log_std", cfg.log_std}};
  doc["policy"] = net_json(agent.policy.mean);
  doc["log_std"] = vec_json(agent.policy.log_std);
  doc["value"] = net_json(agent.value);
  doc["normalizer"] = {{"count", agent.norm.count()}, {"mean", vec_json(agent.norm.mean())},
                       {"m2", vec_json(agent.norm.m2())}};
  doc["steps"] = agent.steps;
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out << doc.dump(1) << '\n';
  if (!out) throw CheckpointError("write to '" + path + "' failed");
}

Agent load_checkpoint(const std::string& path, PpoConfig* cfg) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  try {
    const json doc = json::parse(in);
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version));
    Agent a;
    a.policy.mean = net_from(doc.at("policy"));
    a.policy.log_std = vec_from(doc.at("log_std"));
    a.policy.validate();
    a.value = net_from(doc.at("value"));
    const json& n = doc.at("normalizer");
    a.norm.restore(n.at("count").get<double>(), vec_from(n.at("mean")), vec_from(n.at("m2")));
    if (a.norm.dim() != a.policy.mean.input_dim() || a.value.input_dim() != a.policy.mean.input_dim())
      throw CheckpointError("checkpoint layer shapes are inconsistent");
    a.steps = doc.at("steps").get<long long>();
    if (cfg) {
      const json& c = doc.at("config");
      cfg->learning_rate = c.at("learning_rate");
      cfg->adam_epsilon = c.at("adam_epsilon");
      cfg->gamma = c.at("gamma");
      cfg->clip = c.at("clip");
      cfg->epochs = c.at("epochs");
      cfg->minibatch = c.at("minibatch");
      cfg->sample_size = c.at("sample_size");
      cfg->gae_lambda = c.at("gae_lambda");
      cfg->hidden_width = c.at("hidden_width");
      cfg->hidden_layers = c.at("hidden_layers");
      cfg->log_std = c.at("log_std");
    }
    return a;
  } catch (const CheckpointError&) {
    throw;
  } catch (const json::parse_error& e) {
    throw CheckpointError("'" + path + "': parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  } catch (const std::exception& e) {
    throw CheckpointError("'" + path + "': " + e.what());
  }
}

// ---- evaluation --------------------------------------------------------------

std::vector<EvalReport> evaluate_script(const Agent& agent, std::shared_ptr<const GaitLibrary> lib, SimConfig cfg,
                                        const std::vector<SpeedSegment>& script, std::uint64_t seed,
                                        std::vector<StepRecord>* log) {
  if (script.empty()) throw std::invalid_argument("evaluation script is empty");
  std::vector<EvalReport> out;
  int total = 0;
  for (const SpeedSegment& seg : script) {
    if (!(seg.seconds > 0.0)) throw std::invalid_argument("segment durations must be positive");
    EvalReport rep;
    rep.commanded_speed = seg.speed;
    rep.horizon = std::max(1, static_cast<int>(std::lround(seg.seconds / cfg.control_period)));
    total += rep.horizon;
    out.push_back(rep);
  }
  cfg.max_steps = total;
  WalkEnv env(std::move(lib), cfg);
  std::mt19937_64 rng(seed);
  Observation obs = env.reset(script.front().speed, rng);

  for (std::size_t k = 0; k < script.size() && !env.done(); ++k) {
    EvalReport& rep = out[k];
    env.set_command(script[k].speed);
    const double x0 = env.state().r.x, t0 = env.time();
    double reward = 0.0, td_error = 0.0;
    for (int i = 0; i < rep.horizon && !env.done(); ++i) {
      const VectorXd mean = agent.act(obs);
      const Action a(mean.data(), mean.data() + mean.size());
      const StepResult r = env.step(a);
      reward += r.reward;
      ++rep.survived;
      for (const Touchdown& t : r.touchdowns) {
        td_error += t.error;
        ++rep.touchdowns;
      }
      if (log) log->push_back(record(env, r, a));
      obs = r.observation;
    }
    rep.mean_step_reward = reward / rep.horizon;
    rep.mean_speed = (env.state().r.x - x0) / (env.time() - t0);
    rep.mean_touchdown_error = rep.touchdowns > 0 ? td_error / rep.touchdowns : 0.0;
  }
  for (EvalReport& rep : out) {
    rep.fell = rep.survived < rep.horizon;
    rep.speed_error = std::abs(rep.mean_speed - rep.commanded_speed);
  }
  return out;
}

EvalReport evaluate_policy(const Agent& agent, std::shared_ptr<const GaitLibrary> lib, SimConfig cfg, double speed,
                           double seconds, std::uint64_t seed, std::vector<StepRecord>* log) {
  return evaluate_script(agent, std::move(lib), cfg, {SpeedSegment{speed, seconds}}, seed, log).front();
}

}  // namespace aslip::rl
