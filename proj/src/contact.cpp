/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/contact.hpp"

#include <cmath>

namespace idyn {

std::pair<Vector3d, Vector3d> contact_frame(const Vector3d& normal) {
  require(std::abs(normal.norm() - 1.0) <= 1e-9, ErrorCode::zero_normal,
          "contact_frame: normal must be unit length");
  // axis least aligned with the normal, lowest index on ties
  int axis = 0;
  double best = std::abs(normal[0]);
  for (int i = 1; i < 3; ++i) {
    if (std::abs(normal[i]) < best) {
      best = std::abs(normal[i]);
      axis = i;
    }
  }
  Vector3d seed = Vector3d::Zero();
  seed[axis] = 1.0;
  const Vector3d s = (seed - seed.dot(normal) * normal).normalized();
  const Vector3d t = normal.cross(s);
  return {s, t};
}

namespace {

ContactPoint finish(ContactPoint c) {
  auto [s, t] = contact_frame(c.normal);
  c.tangent_s = s;
  c.tangent_t = t;
  return c;
}

}  // namespace

ContactPoint closest_sphere_halfspace(const Vector3d& center, double radius,
                                      const Halfspace& plane) {
  require(radius > 0, ErrorCode::config_error,
          "closest_sphere_halfspace: radius must be positive");
  const Vector3d n = plane.normal.normalized();
  const double center_dist = n.dot(center - plane.point);
  ContactPoint c;
  c.normal = n;
  c.gap = center_dist - radius;
  const Vector3d on_sphere = center - radius * n;
  const Vector3d on_plane = center - center_dist * n;
  c.point = 0.5 * (on_sphere + on_plane);
  c.feature_a = -1;
  return finish(c);
}

ContactPoint closest_sphere_sphere(const Vector3d& c1, double r1,
                                   const Vector3d& c2, double r2) {
  require(r1 > 0 && r2 > 0, ErrorCode::config_error,
          "closest_sphere_sphere: radii must be positive");
  const Vector3d u = c2 - c1;
  const double dist = u.norm();
  require(dist > 1e-12, ErrorCode::coincident_centers,
          "closest_sphere_sphere: coincident centers");
  ContactPoint c;
  c.normal = u / dist;
  c.gap = dist - r1 - r2;
  const Vector3d p1 = c1 + r1 * c.normal;
  const Vector3d p2 = c2 - r2 * c.normal;
  c.point = 0.5 * (p1 + p2);
  return finish(c);
}

ContactSet build_wrenches(const WrenchModel& model,
                          const std::vector<ContactPoint>& contacts, int k) {
  require(k > 0 && k % 2 == 0, ErrorCode::config_error,
          "build_wrenches: pyramid edge count must be even");
  const int n = static_cast<int>(contacts.size());
  const int m = model.num_dofs();
  ContactSet out;
  out.contacts = contacts;
  out.k = k;
  out.N.setZero(n, m);
  out.S.setZero(n, m);
  out.T.setZero(n, m);
  out.F.setZero(n * k, m);
  out.E.setZero(n, n * k);

  for (int i = 0; i < n; ++i) {
    const ContactPoint& c = contacts[i];
    MatrixXd rel = MatrixXd::Zero(3, m);  // velocity of b relative to a at p
    if (!c.body_b.empty()) {
      require(model.has_body(c.body_b), ErrorCode::unknown_body,
              "build_wrenches: unknown body " + c.body_b);
      rel += model.point_jacobian(c.body_b, c.point);
    }
    if (!c.body_a.empty()) {
      require(model.has_body(c.body_a), ErrorCode::unknown_body,
              "build_wrenches: unknown body " + c.body_a);
      rel -= model.point_jacobian(c.body_a, c.point);
    }
    out.N.row(i) = c.normal.transpose() * rel;
    out.S.row(i) = c.tangent_s.transpose() * rel;
    out.T.row(i) = c.tangent_t.transpose() * rel;
    // pyramid directions in +/- pairs: [d0, -d0, d1, -d1, ...]; the k = 4
    // pyramid uses the tangent axes exactly
    for (int j = 0; j < k; ++j) {
      const int pair = j / 2;
      Vector3d dir;
      if (k <= 4) {
        dir = (pair == 0) ? c.tangent_s : c.tangent_t;
      } else {
        const double angle = M_PI * pair / (k / 2);
        dir = std::cos(angle) * c.tangent_s + std::sin(angle) * c.tangent_t;
      }
      if (j % 2 == 1) dir = -dir;
      out.F.row(j * n + i) = dir.transpose() * rel;
      out.E(i, j * n + i) = 1.0;
    }
  }
  return out;
}

}  // namespace idyn
