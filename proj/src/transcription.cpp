#include "aslip/transcription.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "aslip/dual.hpp"

namespace aslip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// State rate with the given contact flags; shared by the double and dual paths.
template <typename T>
std::array<T, kStateDim> rate(const ModelParams& p, const T* x, const T* u, bool left, bool right,
                              const Vec3T<T>& foot_l, const Vec3T<T>& foot_r) {
  const Vec3T<T> r{x[0], x[1], x[2]};
  const Vec3T<T> v{x[3], x[4], x[5]};
  Vec3T<T> force{T(0.0), T(0.0), T(0.0)};
  if (left) force += spring_leg_force<T>(p, r, v, foot_l, x[6], x[7]);
  if (right) force += spring_leg_force<T>(p, r, v, foot_r, x[8], x[9]);
  const T inv_m = T(1.0 / p.mass);
  std::array<T, kStateDim> f;
  f[0] = x[3];
  f[1] = x[4];
  f[2] = x[5];
  f[3] = force.x * inv_m;
  f[4] = force.y * inv_m;
  f[5] = force.z * inv_m - T(p.gravity);
  f[6] = x[7];
  f[7] = u[0];
  f[8] = x[9];
  f[9] = u[1];
  return f;
}

// Evaluates `fn` on the decision entries listed in `cols`, writing R values at
// out[0..R) and, when requested, the matching Jacobian rows starting at row0.
template <int N, int R, typename Fn>
void eval_rows(const Eigen::VectorXd& z, const std::array<int, N>& cols, Fn&& fn, double* out,
               Eigen::MatrixXd* jac, int row0) {
  if (!jac) {
    std::array<double, N> a;
    for (int i = 0; i < N; ++i) a[i] = z[cols[i]];
    const std::array<double, R> r = fn(a);
    for (int j = 0; j < R; ++j) out[j] = r[j];
    return;
  }
  std::array<Dual<N>, N> a;
  for (int i = 0; i < N; ++i) a[i] = Dual<N>::variable(z[cols[i]], i);
  const std::array<Dual<N>, R> r = fn(a);
  for (int j = 0; j < R; ++j) {
    out[j] = r[j].v;
    for (int i = 0; i < N; ++i) (*jac)(row0 + j, cols[i]) += r[j].d[i];
  }
}

bool is_single(Phase p) { return p != Phase::DoubleStance; }

}  // namespace

ContactSchedule ContactSchedule::walking(int knots_single, int knots_double, DurationBounds single,
                                         DurationBounds dbl) {
  ContactSchedule s;
  s.phases = {{Phase::SingleStanceLeft, knots_single, single},
              {Phase::DoubleStance, knots_double, dbl},
              {Phase::SingleStanceRight, knots_single, single},
              {Phase::DoubleStance, knots_double, dbl}};
  s.validate();
  return s;
}

void ContactSchedule::validate() const {
  if (phases.size() != 4) throw std::invalid_argument("walking schedule needs exactly four phases per cycle");
  if (phases[0].phase != Phase::SingleStanceLeft)
    throw std::invalid_argument("walking schedule must start with left single stance");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const SchedulePhase& ph = phases[i];
    const SchedulePhase& next = phases[(i + 1) % phases.size()];
    if (is_single(ph.phase) == is_single(next.phase))
      throw std::invalid_argument("phases must alternate between single and double stance");
    if (ph.knots < 2) throw std::invalid_argument("every phase needs at least two knots");
    if (!(ph.duration.min > 0.0) || !(ph.duration.max >= ph.duration.min))
      throw std::invalid_argument("phase duration bounds must be positive and ordered");
  }
  if (phases[2].phase != Phase::SingleStanceRight)
    throw std::invalid_argument("single stance phases must alternate legs");
  if (phases[0].knots != phases[2].knots || phases[1].knots != phases[3].knots ||
      phases[0].duration.min != phases[2].duration.min || phases[0].duration.max != phases[2].duration.max ||
      phases[1].duration.min != phases[3].duration.min || phases[1].duration.max != phases[3].duration.max)
    throw std::invalid_argument("mirrored phases must share knot counts and duration bounds");
}

KnotState mirror_swap(const KnotState& x) {
  KnotState m;
  m << x(0), -x(1), x(2), x(3), -x(4), x(5), x(8), x(9), x(6), x(7);
  return m;
}

KnotInput mirror_swap(const KnotInput& u) { return {u(1), u(0)}; }

KnotState knot_rate(const ModelParams& params, const KnotState& x, const KnotInput& u, Phase phase,
                    const Vec3& left_foothold, const Vec3& right_foothold) {
  const auto f = rate<double>(params, x.data(), u.data(), in_stance(phase, Side::Left),
                              in_stance(phase, Side::Right), left_foothold, right_foothold);
  return Eigen::Map<const KnotState>(f.data());
}

KnotState defect(const ModelParams& params, const KnotPoint& k0, const KnotPoint& k1, double h, Phase phase,
                 const Vec3& left_foothold, const Vec3& right_foothold) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("defect step must be positive");
  const KnotState f0 = knot_rate(params, k0.x, k0.u, phase, left_foothold, right_foothold);
  const KnotState f1 = knot_rate(params, k1.x, k1.u, phase, left_foothold, right_foothold);
  return k1.x - k0.x - 0.5 * h * (f0 + f1);
}

GaitNlp::GaitNlp(const ModelParams& params, double target_speed, ContactSchedule schedule,
                 TranscriptionOptions opts)
    : params_(params), target_speed_(target_speed), schedule_(std::move(schedule)), opts_(opts) {
  params_.validate();
  schedule_.validate();
  if (!(target_speed_ >= 0.0) || !std::isfinite(target_speed_))
    throw std::invalid_argument("target speed must be finite and nonnegative");
  const auto ordered = [](double lo, double hi) { return std::isfinite(lo) && std::isfinite(hi) && lo < hi; };
  if (!ordered(opts_.leg_length.min, opts_.leg_length.max) || opts_.leg_length.min <= 0.0)
    throw std::invalid_argument("leg length bounds must satisfy 0 < min < max");
  if (!ordered(opts_.setpoint.min, opts_.setpoint.max) || opts_.setpoint.min <= 0.0)
    throw std::invalid_argument("setpoint bounds must satisfy 0 < min < max");
  if (!ordered(opts_.step_width_min, opts_.step_width_max) || opts_.step_width_min < 0.0)
    throw std::invalid_argument("step width bounds must satisfy 0 <= min < max");
  if (!(opts_.input_max > 0.0) || !(opts_.setpoint_rate_max > 0.0))
    throw std::invalid_argument("input and setpoint rate limits must be positive");
  if (!(opts_.body_height_min > 0.0) || opts_.body_height_min >= opts_.leg_length.max)
    throw std::invalid_argument("minimum body height must lie below the maximum leg length");
  if (opts_.grf_min < 0.0 || opts_.grf_min >= params_.stiffness * (opts_.setpoint.max - opts_.leg_length.min))
    throw std::invalid_argument("stance force floor is unreachable within the setpoint bounds");
  // Average speed must be reachable: the body travels one step length while
  // the stance leg sweeps at most across its reach on either side.
  const double reach = 2.0 * std::sqrt(std::max(0.0, opts_.leg_length.max * opts_.leg_length.max -
                                                         opts_.body_height_min * opts_.body_height_min));
  if (target_speed_ * (schedule_.phases[0].duration.min + schedule_.phases[1].duration.min) > reach)
    throw std::invalid_argument("target speed is unreachable within the leg length and duration bounds");

  const int k0 = schedule_.phases[0].knots, k1 = schedule_.phases[1].knots;
  phase_start_ = {0, k0 - 1, k0 + k1 - 2};
  layout_ = DecisionLayout(k0 + k1 - 1, 2);

  const int n = layout_.size();
  lower_ = Eigen::VectorXd::Constant(n, -kInf);
  upper_ = Eigen::VectorXd::Constant(n, kInf);
  for (int k = 0; k < layout_.knots(); ++k) {
    lower_(layout_.state(k, 2)) = opts_.body_height_min;
    upper_(layout_.state(k, 2)) = opts_.leg_length.max;
    for (int leg : {6, 8}) {
      lower_(layout_.state(k, leg)) = opts_.setpoint.min;
      upper_(layout_.state(k, leg)) = opts_.setpoint.max;
      lower_(layout_.state(k, leg + 1)) = -opts_.setpoint_rate_max;
      upper_(layout_.state(k, leg + 1)) = opts_.setpoint_rate_max;
    }
    for (int i = 0; i < kInputDim; ++i) {
      lower_(layout_.input(k, i)) = -opts_.input_max;
      upper_(layout_.input(k, i)) = opts_.input_max;
    }
  }
  for (int p = 0; p < 2; ++p) {
    lower_(layout_.duration(p)) = schedule_.phases[p].duration.min;
    upper_(layout_.duration(p)) = schedule_.phases[p].duration.max;
  }
  // Left stance foot pins the forward gauge; both feet stay on the ground.
  lower_(layout_.foothold(Side::Left, 0)) = upper_(layout_.foothold(Side::Left, 0)) = 0.0;
  lower_(layout_.foothold(Side::Left, 2)) = upper_(layout_.foothold(Side::Left, 2)) = 0.0;
  lower_(layout_.foothold(Side::Right, 2)) = upper_(layout_.foothold(Side::Right, 2)) = 0.0;
  lower_(layout_.foothold(Side::Left, 1)) = opts_.step_width_min;
  upper_(layout_.foothold(Side::Left, 1)) = opts_.step_width_max;
  lower_(layout_.foothold(Side::Right, 1)) = -opts_.step_width_max;
  upper_(layout_.foothold(Side::Right, 1)) = -opts_.step_width_min;

  for (int i = 0; i + 1 < layout_.knots(); ++i)
    for (int c = 0; c < kStateDim; ++c) eq_rows_.push_back({ConstraintKind::Defect, i, Side::Left, c});
  for (int c = 0; c < kStateDim + kInputDim; ++c)
    eq_rows_.push_back({ConstraintKind::Periodicity, layout_.knots() - 1, Side::Left, c});
  eq_rows_.push_back({ConstraintKind::AverageSpeed});
  eq_rows_.push_back({ConstraintKind::FootholdMirror});

  for (int k = 0; k < layout_.knots(); ++k)
    for (Side s : {Side::Left, Side::Right})
      if (knot_in_stance(k, s)) {
        ineq_rows_.push_back({ConstraintKind::LegLengthMax, k, s});
        ineq_rows_.push_back({ConstraintKind::LegLengthMin, k, s});
        ineq_rows_.push_back({ConstraintKind::StanceForce, k, s});
      }

  const DecisionLayout& L = layout_;
  const int last = L.knots() - 1;
  for (const ConstraintRow& r : eq_rows_) {
    std::vector<int> cols;
    switch (r.kind) {
      case ConstraintKind::Defect: {
        const auto c = defect_columns(r.knot);
        cols.assign(c.begin(), c.end());
        break;
      }
      case ConstraintKind::Periodicity:
        if (r.component < kStateDim) {
          static const int kSwap[kStateDim] = {0, 1, 2, 3, 4, 5, 8, 9, 6, 7};
          cols = {L.state(last, r.component), L.state(0, kSwap[r.component])};
          if (r.component == 0) cols.insert(cols.end(), {L.foothold(Side::Left, 0), L.foothold(Side::Right, 0)});
        } else {
          const int j = r.component - kStateDim;
          cols = {L.input(last, j), L.input(0, 1 - j)};
        }
        break;
      case ConstraintKind::AverageSpeed:
        cols = {L.foothold(Side::Left, 0), L.foothold(Side::Right, 0), L.duration(0), L.duration(1)};
        break;
      default:
        cols = {L.foothold(Side::Left, 1), L.foothold(Side::Right, 1)};
        break;
    }
    std::sort(cols.begin(), cols.end());
    eq_sparsity_.push_back(std::move(cols));
  }
  for (const ConstraintRow& r : ineq_rows_) {
    const auto c = leg_columns(r.knot, r.side);
    std::vector<int> cols(c.begin(), c.end());
    std::sort(cols.begin(), cols.end());
    ineq_sparsity_.push_back(std::move(cols));
  }
}

std::array<int, 2 * (kStateDim + kInputDim) + 7> GaitNlp::defect_columns(int interval) const {
  std::array<int, 2 * (kStateDim + kInputDim) + 7> cols;
  int n = 0;
  for (int k : {interval, interval + 1})
    for (int j = 0; j < kStateDim + kInputDim; ++j) cols[n++] = layout_.state(k, 0) + j;
  cols[n++] = layout_.duration(interval_phase_index(interval));
  for (Side s : {Side::Left, Side::Right})
    for (int a = 0; a < 3; ++a) cols[n++] = layout_.foothold(s, a);
  return cols;
}

std::array<int, kStateDim + 3> GaitNlp::leg_columns(int knot, Side side) const {
  std::array<int, kStateDim + 3> cols;
  for (int j = 0; j < kStateDim; ++j) cols[j] = layout_.state(knot, j);
  for (int a = 0; a < 3; ++a) cols[kStateDim + a] = layout_.foothold(side, a);
  return cols;
}

int GaitNlp::interval_phase_index(int interval) const {
  if (interval < 0 || interval >= layout_.knots() - 1) throw std::out_of_range("interval index");
  return interval < phase_start_[1] ? 0 : 1;
}

Phase GaitNlp::interval_phase(int interval) const { return schedule_.phases[interval_phase_index(interval)].phase; }

bool GaitNlp::knot_in_stance(int knot, Side side) const {
  // A knot carries the contacts of every interval it bounds.
  bool stance = false;
  if (knot > 0) stance = stance || in_stance(interval_phase(knot - 1), side);
  if (knot + 1 < layout_.knots()) stance = stance || in_stance(interval_phase(knot), side);
  return stance;
}

ConstraintCounts GaitNlp::counts() const {
  ConstraintCounts c;
  for (const ConstraintRow& r : eq_rows_) {
    switch (r.kind) {
      case ConstraintKind::Defect: ++c.defects; break;
      case ConstraintKind::Periodicity: ++c.periodicity; break;
      case ConstraintKind::AverageSpeed: ++c.speed; break;
      case ConstraintKind::FootholdMirror: ++c.mirror; break;
      default: break;
    }
  }
  for (const ConstraintRow& r : ineq_rows_) {
    if (r.kind == ConstraintKind::StanceForce)
      ++c.stance_force;
    else
      ++c.leg_length;
  }
  return c;
}

Eigen::VectorXd GaitNlp::pack(const GaitDecision& d) const {
  if (static_cast<int>(d.knots.size()) != layout_.knots() || static_cast<int>(d.durations.size()) != 2)
    throw std::invalid_argument("decision does not match the layout");
  Eigen::VectorXd z(layout_.size());
  for (int k = 0; k < layout_.knots(); ++k) {
    for (int i = 0; i < kStateDim; ++i) z(layout_.state(k, i)) = d.knots[k].x(i);
    for (int i = 0; i < kInputDim; ++i) z(layout_.input(k, i)) = d.knots[k].u(i);
  }
  for (int p = 0; p < 2; ++p) z(layout_.duration(p)) = d.durations[p];
  const Vec3* feet[2] = {&d.left_foothold, &d.right_foothold};
  for (int s = 0; s < 2; ++s) {
    const Side side = s == 0 ? Side::Left : Side::Right;
    z(layout_.foothold(side, 0)) = feet[s]->x;
    z(layout_.foothold(side, 1)) = feet[s]->y;
    z(layout_.foothold(side, 2)) = feet[s]->z;
  }
  return z;
}

GaitDecision GaitNlp::unpack(const Eigen::VectorXd& z) const {
  if (z.size() != layout_.size()) throw std::invalid_argument("decision vector has the wrong length");
  GaitDecision d;
  d.knots.resize(layout_.knots());
  for (int k = 0; k < layout_.knots(); ++k) {
    for (int i = 0; i < kStateDim; ++i) d.knots[k].x(i) = z(layout_.state(k, i));
    for (int i = 0; i < kInputDim; ++i) d.knots[k].u(i) = z(layout_.input(k, i));
  }
  d.durations = {z(layout_.duration(0)), z(layout_.duration(1))};
  d.left_foothold = {z(layout_.foothold(Side::Left, 0)), z(layout_.foothold(Side::Left, 1)),
                     z(layout_.foothold(Side::Left, 2))};
  d.right_foothold = {z(layout_.foothold(Side::Right, 0)), z(layout_.foothold(Side::Right, 1)),
                      z(layout_.foothold(Side::Right, 2))};
  return d;
}

double GaitNlp::objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
  if (grad) grad->setZero(layout_.size());
  double cost = 0.0;
  for (int i = 0; i + 1 < layout_.knots(); ++i) {
    const int p = interval_phase_index(i);
    const double T = z(layout_.duration(p));
    const double h = T / (schedule_.phases[p].knots - 1);
    double s = 0.0;
    for (int k : {i, i + 1})
      for (int j = 0; j < kInputDim; ++j) s += z(layout_.input(k, j)) * z(layout_.input(k, j));
    // factor 2 (mirrored half) times 1/2 (trapezoid) is 1
    cost += h * s;
    if (grad) {
      for (int k : {i, i + 1})
        for (int j = 0; j < kInputDim; ++j) (*grad)(layout_.input(k, j)) += 2.0 * h * z(layout_.input(k, j));
      (*grad)(layout_.duration(p)) += s / (schedule_.phases[p].knots - 1);
    }
  }
  return cost;
}

void GaitNlp::equalities(const Eigen::VectorXd& z, Eigen::VectorXd& c, Eigen::MatrixXd* jac) const {
  const int m = static_cast<int>(eq_rows_.size());
  c.resize(m);
  if (jac) jac->setZero(m, layout_.size());
  const DecisionLayout& L = layout_;
  const ModelParams& P = params_;
  int row = 0;

  // Defects: x_k(10) u_k(2) x_k1(10) u_k1(2) T(1) foot_l(3) foot_r(3)
  constexpr int kDefectVars = 2 * (kStateDim + kInputDim) + 1 + 6;
  for (int i = 0; i + 1 < L.knots(); ++i) {
    const int p = interval_phase_index(i);
    const Phase phase = schedule_.phases[p].phase;
    const bool left = in_stance(phase, Side::Left), right = in_stance(phase, Side::Right);
    const double segments = schedule_.phases[p].knots - 1;
    const std::array<int, kDefectVars> cols = defect_columns(i);
    const auto fn = [&](const auto& v) {
      using T = std::decay_t<decltype(v[0])>;
      const T* x0 = &v[0];
      const T* u0 = &v[kStateDim];
      const T* x1 = &v[kStateDim + kInputDim];
      const T* u1 = &v[2 * kStateDim + kInputDim];
      const T h = v[24] / T(segments);
      const Vec3T<T> fl{v[25], v[26], v[27]}, fr{v[28], v[29], v[30]};
      const auto f0 = rate<T>(P, x0, u0, left, right, fl, fr);
      const auto f1 = rate<T>(P, x1, u1, left, right, fl, fr);
      std::array<T, kStateDim> r;
      for (int j = 0; j < kStateDim; ++j) r[j] = x1[j] - x0[j] - T(0.5) * h * (f0[j] + f1[j]);
      return r;
    };
    eval_rows<kDefectVars, kStateDim>(z, cols, fn, c.data() + row, jac, row);
    row += kStateDim;
  }

  // Periodicity under the leg swap, shifted forward by one step length.
  const int last = L.knots() - 1;
  const double step = z(L.foothold(Side::Right, 0)) - z(L.foothold(Side::Left, 0));
  KnotState x0, xN;
  KnotInput u0, uN;
  for (int j = 0; j < kStateDim; ++j) {
    x0(j) = z(L.state(0, j));
    xN(j) = z(L.state(last, j));
  }
  for (int j = 0; j < kInputDim; ++j) {
    u0(j) = z(L.input(0, j));
    uN(j) = z(L.input(last, j));
  }
  KnotState target = mirror_swap(x0);
  target(0) += step;
  c.segment(row, kStateDim) = xN - target;
  c.segment(row + kStateDim, kInputDim) = uN - mirror_swap(u0);
  if (jac) {
    static const int kSwap[kStateDim] = {0, 1, 2, 3, 4, 5, 8, 9, 6, 7};
    static const double kSign[kStateDim] = {1, -1, 1, 1, -1, 1, 1, 1, 1, 1};
    for (int j = 0; j < kStateDim; ++j) {
      (*jac)(row + j, L.state(last, j)) += 1.0;
      (*jac)(row + j, L.state(0, kSwap[j])) -= kSign[j];
    }
    (*jac)(row, L.foothold(Side::Right, 0)) -= 1.0;
    (*jac)(row, L.foothold(Side::Left, 0)) += 1.0;
    for (int j = 0; j < kInputDim; ++j) {
      (*jac)(row + kStateDim + j, L.input(last, j)) += 1.0;
      (*jac)(row + kStateDim + j, L.input(0, 1 - j)) -= 1.0;
    }
  }
  row += kStateDim + kInputDim;

  // Average speed: one step length per (single + double) stance time.
  const double t_step = z(L.duration(0)) + z(L.duration(1));
  c(row) = step - target_speed_ * t_step;
  if (jac) {
    (*jac)(row, L.foothold(Side::Right, 0)) += 1.0;
    (*jac)(row, L.foothold(Side::Left, 0)) -= 1.0;
    (*jac)(row, L.duration(0)) -= target_speed_;
    (*jac)(row, L.duration(1)) -= target_speed_;
  }
  ++row;

  c(row) = z(L.foothold(Side::Left, 1)) + z(L.foothold(Side::Right, 1));
  if (jac) {
    (*jac)(row, L.foothold(Side::Left, 1)) = 1.0;
    (*jac)(row, L.foothold(Side::Right, 1)) = 1.0;
  }
}

void GaitNlp::inequalities(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac) const {
  const int m = static_cast<int>(ineq_rows_.size());
  g.resize(m);
  if (jac) jac->setZero(m, layout_.size());
  const ModelParams& P = params_;
  const TranscriptionOptions& O = opts_;
  constexpr int kVars = kStateDim + 3;
  for (int row = 0; row < m; row += 3) {
    const ConstraintRow& r = ineq_rows_[row];
    const int leg = r.side == Side::Left ? 6 : 8;
    const std::array<int, kVars> cols = leg_columns(r.knot, r.side);
    const auto fn = [&](const auto& v) {
      using T = std::decay_t<decltype(v[0])>;
      const Vec3T<T> body{v[0], v[1], v[2]}, vel{v[3], v[4], v[5]};
      const Vec3T<T> foot{v[10], v[11], v[12]};
      using std::sqrt;
      const T len = sqrt((body - foot).squaredNorm());
      const T force = spring_force_magnitude<T>(P, body, vel, foot, v[leg], v[leg + 1]);
      return std::array<T, 3>{len - T(O.leg_length.max), T(O.leg_length.min) - len, T(O.grf_min) - force};
    };
    eval_rows<kVars, 3>(z, cols, fn, g.data() + row, jac, row);
  }
}

nlp::NlpProblem GaitNlp::problem() const {
  auto self = std::make_shared<const GaitNlp>(*this);
  nlp::NlpProblem p;
  p.n = layout_.size();
  p.objective = [self](const Eigen::VectorXd& z, Eigen::VectorXd* g) { return self->objective(z, g); };
  p.n_eq = static_cast<int>(eq_rows_.size());
  p.equalities = [self](const Eigen::VectorXd& z, Eigen::VectorXd& c, Eigen::MatrixXd* J) {
    self->equalities(z, c, J);
  };
  p.n_ineq = static_cast<int>(ineq_rows_.size());
  p.inequalities = [self](const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* J) {
    self->inequalities(z, g, J);
  };
  p.lower = lower_;
  p.upper = upper_;
  return p;
}

Eigen::VectorXd GaitNlp::initial_guess() const {
  const double t_ss = std::clamp(0.3, schedule_.phases[0].duration.min, schedule_.phases[0].duration.max);
  const double t_ds = std::clamp(0.1, schedule_.phases[1].duration.min, schedule_.phases[1].duration.max);
  const double width = 0.5 * (opts_.step_width_min + opts_.step_width_max);
  const double height = 0.9 * opts_.leg_length.max;
  const double step = target_speed_ * (t_ss + t_ds);

  GaitDecision d;
  d.durations = {t_ss, t_ds};
  d.left_foothold = {0.0, width, 0.0};
  d.right_foothold = {step, -width, 0.0};
  d.knots.resize(layout_.knots());
  for (int k = 0; k < layout_.knots(); ++k) {
    const double t = k < phase_start_[1] ? t_ss * k / (phase_start_[1])
                                         : t_ss + t_ds * (k - phase_start_[1]) / (phase_start_[2] - phase_start_[1]);
    KnotState& x = d.knots[k].x;
    x.setZero();
    x(0) = -0.5 * target_speed_ * t_ss + target_speed_ * t;
    x(2) = height;
    x(3) = target_speed_;
    const int loaded = (knot_in_stance(k, Side::Left) ? 1 : 0) + (knot_in_stance(k, Side::Right) ? 1 : 0);
    const Vec3 r{x(0), x(1), x(2)};
    for (Side s : {Side::Left, Side::Right}) {
      const int leg = s == Side::Left ? 6 : 8;
      if (knot_in_stance(k, s)) {
        const Vec3& foot = s == Side::Left ? d.left_foothold : d.right_foothold;
        const double len = norm(r - foot);
        x(leg) = len + params_.mass * params_.gravity / (params_.stiffness * loaded) * len / height;
      } else {
        x(leg) = height;
      }
      x(leg) = std::clamp(x(leg), opts_.setpoint.min, opts_.setpoint.max);
    }
  }
  return pack(d);
}

Eigen::VectorXd GaitNlp::warm_start_from(const Eigen::VectorXd& other) const {
  GaitDecision d = unpack(other);
  const double t_ss = d.durations[0], t_ds = d.durations[1];
  const double old_speed = (d.right_foothold.x - d.left_foothold.x) / (t_ss + t_ds);
  const double dv = target_speed_ - old_speed;
  for (int k = 0; k < layout_.knots(); ++k) {
    const double t = k < phase_start_[1] ? t_ss * k / phase_start_[1]
                                         : t_ss + t_ds * (k - phase_start_[1]) / (phase_start_[2] - phase_start_[1]);
    d.knots[k].x(0) += dv * (t - 0.5 * t_ss);
    d.knots[k].x(3) += dv;
  }
  d.right_foothold.x = d.left_foothold.x + target_speed_ * (t_ss + t_ds);
  return pack(d);
}

Eigen::VectorXd GaitNlp::regrid_from(const GaitNlp& other, const Eigen::VectorXd& z) const {
  const GaitDecision src = other.unpack(z);
  GaitDecision d = src;
  d.knots.assign(layout_.knots(), {});
  for (int p = 0; p < half_phases(); ++p) {
    const int a = phase_start_[p], b = phase_start_[p + 1];
    const int sa = other.phase_start(p), sb = other.phase_start(p + 1);
    for (int k = a; k <= b; ++k) {
      const double pos = sa + static_cast<double>(k - a) * (sb - sa) / (b - a);
      const int i = std::min(static_cast<int>(pos), sb - 1);
      const double w = pos - i;
      d.knots[k].x = (1.0 - w) * src.knots[i].x + w * src.knots[i + 1].x;
      d.knots[k].u = (1.0 - w) * src.knots[i].u + w * src.knots[i + 1].u;
    }
  }
  return pack(d);
}

}  // namespace aslip
