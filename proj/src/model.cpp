#include "aslip/model.hpp"

#include <cstdint>
#include <cstdio>

namespace aslip {

void ModelParams::validate() const {
  const auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!positive(mass) || !positive(stiffness) || !positive(damping) || !positive(actuator_inertia) ||
      !positive(gravity)) {
    throw std::invalid_argument("model parameters must be finite and strictly positive");
  }
}

std::string fingerprint(const ModelParams& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%.17g|%.17g|%.17g", p.mass, p.stiffness, p.damping,
                p.actuator_inertia, p.gravity);
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* c = buf; *c; ++c) {
    h ^= static_cast<unsigned char>(*c);
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::SingleStanceLeft:
      return "single_left";
    case Phase::SingleStanceRight:
      return "single_right";
    case Phase::DoubleStance:
      return "double";
  }
  return "?";
}

Phase phase_from_string(const std::string& name) {
  if (name == "single_left") return Phase::SingleStanceLeft;
  if (name == "single_right") return Phase::SingleStanceRight;
  if (name == "double") return Phase::DoubleStance;
  throw std::invalid_argument("unknown phase label '" + name + "'");
}

void AslipState::check_consistent() const {
  if (left.in_contact != in_stance(phase, Side::Left) || right.in_contact != in_stance(phase, Side::Right)) {
    throw InvalidState(std::string("contact flags inconsistent with phase ") + to_string(phase));
  }
  if (!left.in_contact && !right.in_contact) throw InvalidState("no leg in contact (flight is not modelled)");
}

LegLength leg_length(const Vec3& r, const Vec3& foothold, const Vec3& v) {
  const Vec3 leg = r - foothold;
  const double len = norm(leg);
  if (!(len > 1e-12)) throw InvalidState("degenerate zero-length leg");
  return {len, leg.dot(v) / len};
}

Vec3 leg_force(const ModelParams& params, const Vec3& r, const Vec3& v, const LegState& leg) {
  if (!leg.in_contact) return {};
  leg_length(r, leg.foothold);  // geometry check
  return spring_leg_force<double>(params, r, v, leg.foothold, leg.d, leg.d_dot);
}

StateDerivative dynamics(const ModelParams& params, const AslipState& state, const LegInput& input) {
  state.check_consistent();
  Vec3 force = leg_force(params, state.r, state.v, state.left) + leg_force(params, state.r, state.v, state.right);
  StateDerivative out;
  out.r_dot = state.v;
  out.v_dot = force / params.mass - Vec3{0.0, 0.0, params.gravity};
  out.left_d_dot = state.left.d_dot;
  out.left_d_ddot = input.left;
  out.right_d_dot = state.right.d_dot;
  out.right_d_ddot = input.right;
  return out;
}

GroundReaction grf(const ModelParams& params, const AslipState& state) {
  return {leg_force(params, state.r, state.v, state.left), leg_force(params, state.r, state.v, state.right)};
}

double mechanical_energy(const ModelParams& p, const AslipState& s) {
  double e = 0.5 * p.mass * s.v.squaredNorm() + p.mass * p.gravity * s.r.z;
  for (const LegState* leg : {&s.left, &s.right}) {
    if (!leg->in_contact) continue;
    const double defl = leg->d - leg_length(s.r, leg->foothold).length;
    e += 0.5 * p.stiffness * defl * defl;
  }
  return e;
}

double actuator_power(const ModelParams& p, const AslipState& s) {
  double power = 0.0;
  for (const LegState* leg : {&s.left, &s.right}) {
    if (!leg->in_contact) continue;
    power += spring_force_magnitude<double>(p, s.r, s.v, leg->foothold, leg->d, leg->d_dot) * leg->d_dot;
  }
  return power;
}

double damper_dissipation(const ModelParams& p, const AslipState& s) {
  double loss = 0.0;
  for (const LegState* leg : {&s.left, &s.right}) {
    if (!leg->in_contact) continue;
    const double rel = leg->d_dot - leg_length(s.r, leg->foothold, s.v).rate;
    loss += p.damping * rel * rel;
  }
  return loss;
}

}  // namespace aslip
