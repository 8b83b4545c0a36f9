/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <string>

#include "idyn/common.hpp"

namespace idyn {

/// Half-space {x : normal . (x - point) <= 0}, i.e. bodies live on the
/// normal side.
struct Halfspace {
  Vector3d point = Vector3d::Zero();
  Vector3d normal = Vector3d::UnitZ();
};

/// Single contact between body_a and body_b.  The normal points from body_a
/// toward body_b so that gap_rate = normal . (v_b(p) - v_a(p)); {normal, s, t}
/// is a right-handed orthonormal triad.
struct ContactPoint {
  Vector3d point = Vector3d::Zero();
  Vector3d normal = Vector3d::UnitZ();
  Vector3d tangent_s = Vector3d::UnitX();
  Vector3d tangent_t = Vector3d::UnitY();
  double gap = 0;  // signed distance, negative in penetration
  double mu = 0;   // infinity marks a no-slip contact
  std::string body_a;
  std::string body_b;
  int feature_a = -1;  // collision geometry index on body_a, -1 environment
  int feature_b = -1;

  bool no_slip() const { return !std::isfinite(mu); }
};

/// Velocity kinematics needed to build generalized contact wrenches.
/// Environment (static) bodies report a zero Jacobian.
class WrenchModel {
 public:
  virtual ~WrenchModel() = default;
  virtual int num_dofs() const = 0;
  virtual bool has_body(const std::string& body) const = 0;
  /// 3-by-m map from generalized velocity to the world velocity of the
  /// material point of `body` currently at p.
  virtual MatrixXd point_jacobian(const std::string& body,
                                  const Vector3d& p) const = 0;
};

/// Contacts plus the generalized wrench matrices used by every solver.
/// Row i of N/S/T is the wrench of contacts[i] along its normal and tangent
/// directions.  F stacks the k pyramid directions in n-row blocks ordered
/// [+S; -S; +T; -T] for k = 4, and E selects each contact's k pyramid
/// components.
struct ContactSet {
  std::vector<ContactPoint> contacts;
  MatrixXd N, S, T;  // n-by-m
  MatrixXd F;        // nk-by-m
  MatrixXd E;        // n-by-nk, 0/1 with k ones per row
  int k = 4;

  int size() const { return static_cast<int>(contacts.size()); }
  VectorXd gaps() const {
    VectorXd phi(size());
    for (int i = 0; i < size(); ++i) phi[i] = contacts[i].gap;
    return phi;
  }
  VectorXd mu() const {
    VectorXd out(size());
    for (int i = 0; i < size(); ++i) out[i] = contacts[i].mu;
    return out;
  }
  bool all_no_slip() const {
    for (const auto& c : contacts)
      if (!c.no_slip()) return false;
    return true;
  }
};

/// Deterministic right-handed contact frame: the coordinate axis least
/// aligned with the normal seeds s, then t = normal x s.
std::pair<Vector3d, Vector3d> contact_frame(const Vector3d& normal);

/// Sphere vs. half-space closest features; the contact point sits at the
/// midpoint of the closest-feature segment.
ContactPoint closest_sphere_halfspace(const Vector3d& center, double radius,
                                      const Halfspace& plane);

/// Sphere vs. sphere closest features; normal along c2 - c1.
ContactPoint closest_sphere_sphere(const Vector3d& c1, double r1,
                                   const Vector3d& c2, double r2);

/// Assemble N/S/T/F/E for the contact list against the model's kinematics.
ContactSet build_wrenches(const WrenchModel& model,
                          const std::vector<ContactPoint>& contacts,
                          int k = 4);

}  // namespace idyn
