/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#include "idyn/multibody.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "idyn/inverse_dynamics.hpp"
#include "idyn/lcp.hpp"
#include "idyn/qp.hpp"

namespace idyn {

namespace {

using nlohmann::json;

// planar helpers: the working plane is x-z, angles grow from +x toward +z
Vector3d dir(double a) { return Vector3d(std::cos(a), 0, std::sin(a)); }
Vector3d perp(const Vector3d& w) { return Vector3d(-w.z(), 0, w.x()); }

Eigen::Matrix3d quat_to_rot(const Eigen::Vector4d& q) {
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  return quat.normalized().toRotationMatrix();
}

Eigen::Matrix3d skew(const Vector3d& a) {
  Eigen::Matrix3d S;
  S << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return S;
}

enum CompKind { kFree6, kPoint3, kPlanar3, kChain };

struct CompRef {
  CompKind kind;
  int index;  // within its family
  int q_off, q_len;
  int v_off, v_len;
};

std::vector<CompRef> layout(const Mechanism& mech) {
  std::vector<CompRef> comps;
  int qo = 0, vo = 0;
  for (int i = 0; i < static_cast<int>(mech.free_bodies.size()); ++i) {
    comps.push_back({kFree6, i, qo, 7, vo, 6});
    qo += 7;
    vo += 6;
  }
  for (int i = 0; i < static_cast<int>(mech.point_masses.size()); ++i) {
    comps.push_back({kPoint3, i, qo, 3, vo, 3});
    qo += 3;
    vo += 3;
  }
  for (int i = 0; i < static_cast<int>(mech.planar_bodies.size()); ++i) {
    comps.push_back({kPlanar3, i, qo, 3, vo, 3});
    qo += 3;
    vo += 3;
  }
  for (int i = 0; i < static_cast<int>(mech.chains.size()); ++i) {
    const auto& ch = mech.chains[i];
    const int d = (ch.floating ? 3 : 0) + static_cast<int>(ch.links.size());
    comps.push_back({kChain, i, qo, d, vo, d});
    qo += d;
    vo += d;
  }
  return comps;
}

// forward kinematics of one chain (articulated planar tree) at its
// coordinate slice
struct ChainKin {
  Vector3d base_pos;
  double base_theta;
  std::vector<double> alpha;       // frame angle per link
  std::vector<double> par_alpha;   // frame angle of the parent of each link
  std::vector<Vector3d> joint_pos; // world attach point of joint i
  std::vector<Vector3d> tip_pos;   // world position of the link tip frame
  std::vector<Vector3d> com_pos;
};

Vector3d rot_offset(const Vector3d& off, double ang) {
  return off.x() * dir(ang) + off.z() * perp(dir(ang));
}

ChainKin chain_fk(const ChainDesc& ch, const double* qc) {
  ChainKin k;
  int at = 0;
  if (ch.floating) {
    k.base_pos = Vector3d(qc[0], 0, qc[1]);
    k.base_theta = qc[2];
    at = 3;
  } else {
    k.base_pos = Vector3d(ch.base_x, 0, ch.base_z);
    k.base_theta = ch.base_theta;
  }
  for (const auto& link : ch.links) {
    const double qj = qc[at++];
    const int par = link.parent;
    const Vector3d ppos = par < 0 ? k.base_pos : k.tip_pos[par];
    const double pang = par < 0 ? k.base_theta : k.alpha[par];
    const Vector3d attach = ppos + rot_offset(link.attach, pang);
    k.par_alpha.push_back(pang);
    k.joint_pos.push_back(attach);
    if (link.joint == JointType::revolute) {
      const double a = pang + qj;
      k.alpha.push_back(a);
      k.com_pos.push_back(attach + link.com * dir(a));
      k.tip_pos.push_back(attach + link.length * dir(a));
    } else {
      k.alpha.push_back(pang);
      const Vector3d slide = dir(pang + link.dir_angle);
      const Vector3d tip = attach + (link.length + qj) * slide;
      k.com_pos.push_back(tip);
      k.tip_pos.push_back(tip);
    }
  }
  return k;
}

// ancestors of link li (itself included), root-last
IndexSet chain_ancestry(const ChainDesc& ch, int li) {
  IndexSet out;
  for (int j = li; j >= 0; j = ch.links[j].parent) out.push_back(j);
  return out;
}

// 3-by-d jacobian of a world point rigidly attached to link `li` (or the
// base for li = -1), columns over the chain slice only
MatrixXd chain_point_jac(const ChainDesc& ch, const ChainKin& k, int li,
                         const Vector3d& p) {
  const int d = (ch.floating ? 3 : 0) + static_cast<int>(ch.links.size());
  MatrixXd J = MatrixXd::Zero(3, d);
  int at = 0;
  if (ch.floating) {
    J.col(0) = Vector3d(1, 0, 0);
    J.col(1) = Vector3d(0, 0, 1);
    J.col(2) = perp(p - k.base_pos);
    at = 3;
  } else if (li < 0) {
    return J;  // fixed base is static
  }
  for (int j : chain_ancestry(ch, li)) {
    if (ch.links[j].joint == JointType::revolute)
      J.col(at + j) = perp(p - k.joint_pos[j]);
    else
      J.col(at + j) = dir(k.par_alpha[j] + ch.links[j].dir_angle);
  }
  return J;
}

// 1-by-d angular rate row of link li (base: li = -1)
Eigen::RowVectorXd chain_ang_jac(const ChainDesc& ch, int li) {
  const int d = (ch.floating ? 3 : 0) + static_cast<int>(ch.links.size());
  Eigen::RowVectorXd J = Eigen::RowVectorXd::Zero(d);
  int at = 0;
  if (ch.floating) {
    J[2] = 1;
    at = 3;
  }
  if (li >= 0)
    for (int j : chain_ancestry(ch, li))
      if (ch.links[j].joint == JointType::revolute) J[at + j] = 1;
  return J;
}

// chain block inertia at the chain's own coordinates
MatrixXd chain_inertia(const ChainDesc& ch, const double* qc) {
  const ChainKin k = chain_fk(ch, qc);
  const int d = (ch.floating ? 3 : 0) + static_cast<int>(ch.links.size());
  MatrixXd M = MatrixXd::Zero(d, d);
  if (ch.floating) {
    const MatrixXd Jb = chain_point_jac(ch, k, -1, k.base_pos);
    M += ch.base_mass * Jb.transpose() * Jb;
    M(2, 2) += ch.base_inertia;
  }
  for (int i = 0; i < static_cast<int>(ch.links.size()); ++i) {
    const MatrixXd Jc = chain_point_jac(ch, k, i, k.com_pos[i]);
    const Eigen::RowVectorXd Ja = chain_ang_jac(ch, i);
    M += ch.links[i].mass * Jc.transpose() * Jc;
    M += ch.links[i].inertia * Ja.transpose() * Ja;
  }
  return M;
}

std::string chain_body_name(const ChainDesc& ch, int li) {
  if (li < 0) return ch.name + "/base";
  return ch.name + "/" + ch.links[li].name;
}

}  // namespace

int num_coords(const Mechanism& mech) {
  int n = 0;
  for (const auto& c : layout(mech)) n = c.q_off + c.q_len;
  return n;
}

int num_dofs(const Mechanism& mech) {
  int n = 0;
  for (const auto& c : layout(mech)) n = c.v_off + c.v_len;
  return n;
}

VectorXd initial_coords(const Mechanism& mech) {
  VectorXd q = VectorXd::Zero(num_coords(mech));
  for (const auto& c : layout(mech)) {
    switch (c.kind) {
      case kFree6: {
        const auto& b = mech.free_bodies[c.index];
        q.segment<3>(c.q_off) = b.pos;
        q.segment<4>(c.q_off + 3) = b.quat;
        break;
      }
      case kPoint3:
        q.segment<3>(c.q_off) = mech.point_masses[c.index].pos;
        break;
      case kPlanar3: {
        const auto& b = mech.planar_bodies[c.index];
        q[c.q_off] = b.x;
        q[c.q_off + 1] = b.z;
        q[c.q_off + 2] = b.theta;
        break;
      }
      case kChain: {
        const auto& ch = mech.chains[c.index];
        int at = c.q_off;
        if (ch.floating) {
          q[at++] = ch.base_x;
          q[at++] = ch.base_z;
          q[at++] = ch.base_theta;
        }
        for (const auto& link : ch.links) q[at++] = link.q0;
        break;
      }
    }
  }
  return q;
}

VectorXd initial_velocity(const Mechanism& mech) {
  VectorXd v = VectorXd::Zero(num_dofs(mech));
  for (const auto& c : layout(mech)) {
    switch (c.kind) {
      case kFree6: {
        const auto& b = mech.free_bodies[c.index];
        v.segment<3>(c.v_off) = b.vel;
        v.segment<3>(c.v_off + 3) = b.angvel;
        break;
      }
      case kPoint3:
        v.segment<3>(c.v_off) = mech.point_masses[c.index].vel;
        break;
      case kPlanar3: {
        const auto& b = mech.planar_bodies[c.index];
        v[c.v_off] = b.vx;
        v[c.v_off + 1] = b.vz;
        v[c.v_off + 2] = b.vtheta;
        break;
      }
      case kChain: {
        const auto& ch = mech.chains[c.index];
        int at = c.v_off;
        if (ch.floating) {
          v[at++] = ch.base_vx;
          v[at++] = ch.base_vz;
          v[at++] = ch.base_vtheta;
        }
        for (const auto& link : ch.links) v[at++] = link.v0;
        break;
      }
    }
  }
  return v;
}

bool MultibodyState::has_body(const std::string& body) const {
  for (const auto& b : mech_->free_bodies)
    if (b.name == body) return true;
  for (const auto& b : mech_->point_masses)
    if (b.name == body) return true;
  for (const auto& b : mech_->planar_bodies)
    if (b.name == body) return true;
  for (const auto& ch : mech_->chains) {
    if (chain_body_name(ch, -1) == body) return true;
    for (int i = 0; i < static_cast<int>(ch.links.size()); ++i)
      if (chain_body_name(ch, i) == body) return true;
  }
  return false;
}

MatrixXd MultibodyState::point_jacobian(const std::string& body,
                                        const Vector3d& p) const {
  const int m = num_dofs();
  MatrixXd J = MatrixXd::Zero(3, m);
  for (const auto& c : layout(*mech_)) {
    switch (c.kind) {
      case kFree6: {
        const auto& b = mech_->free_bodies[c.index];
        if (b.name != body) break;
        const Vector3d com = q.segment<3>(c.q_off);
        J.block<3, 3>(0, c.v_off).setIdentity();
        J.block<3, 3>(0, c.v_off + 3) = -skew(p - com);
        return J;
      }
      case kPoint3:
        if (mech_->point_masses[c.index].name != body) break;
        J.block<3, 3>(0, c.v_off).setIdentity();
        return J;
      case kPlanar3: {
        const auto& b = mech_->planar_bodies[c.index];
        if (b.name != body) break;
        const Vector3d pos(q[c.q_off], 0, q[c.q_off + 1]);
        J.col(c.v_off) = Vector3d(1, 0, 0);
        J.col(c.v_off + 1) = Vector3d(0, 0, 1);
        J.col(c.v_off + 2) = perp(p - pos);
        return J;
      }
      case kChain: {
        const auto& ch = mech_->chains[c.index];
        int li = -2;
        if (chain_body_name(ch, -1) == body) li = -1;
        for (int i = 0; i < static_cast<int>(ch.links.size()); ++i)
          if (chain_body_name(ch, i) == body) li = i;
        if (li == -2) break;
        const ChainKin k = chain_fk(ch, q.data() + c.q_off);
        J.block(0, c.v_off, 3, c.v_len) = chain_point_jac(ch, k, li, p);
        return J;
      }
    }
  }
  throw IdynError(ErrorCode::unknown_body, "point_jacobian: unknown body " + body);
}

std::vector<MultibodyState::GeomInstance> MultibodyState::geometry() const {
  std::vector<GeomInstance> out;
  int comp_id = 0;
  for (const auto& c : layout(*mech_)) {
    switch (c.kind) {
      case kFree6: {
        const auto& b = mech_->free_bodies[c.index];
        const Eigen::Matrix3d R = quat_to_rot(q.segment<4>(c.q_off + 3));
        const Vector3d pos = q.segment<3>(c.q_off);
        for (int s = 0; s < static_cast<int>(b.spheres.size()); ++s)
          out.push_back({b.name, s, pos + R * b.spheres[s].offset,
                         b.spheres[s].radius, comp_id});
        break;
      }
      case kPoint3: {
        const auto& b = mech_->point_masses[c.index];
        out.push_back({b.name, 0, q.segment<3>(c.q_off), b.radius, comp_id});
        break;
      }
      case kPlanar3: {
        const auto& b = mech_->planar_bodies[c.index];
        const Vector3d pos(q[c.q_off], 0, q[c.q_off + 1]);
        const double th = q[c.q_off + 2];
        for (int s = 0; s < static_cast<int>(b.spheres.size()); ++s) {
          const auto& g = b.spheres[s];
          const Vector3d off =
              g.offset.x() * dir(th) + g.offset.z() * perp(dir(th));
          out.push_back({b.name, s, pos + off, g.radius, comp_id});
        }
        break;
      }
      case kChain: {
        const auto& ch = mech_->chains[c.index];
        const ChainKin k = chain_fk(ch, q.data() + c.q_off);
        for (int s = 0; s < static_cast<int>(ch.base_spheres.size()); ++s) {
          const auto& g = ch.base_spheres[s];
          const Vector3d off = g.offset.x() * dir(k.base_theta) +
                               g.offset.z() * perp(dir(k.base_theta));
          out.push_back(
              {chain_body_name(ch, -1), s, k.base_pos + off, g.radius, comp_id});
        }
        for (int i = 0; i < static_cast<int>(ch.links.size()); ++i) {
          for (int s = 0; s < static_cast<int>(ch.links[i].spheres.size());
               ++s) {
            const auto& g = ch.links[i].spheres[s];
            const Vector3d off = g.offset.x() * dir(k.alpha[i]) +
                                 g.offset.z() * perp(dir(k.alpha[i]));
            out.push_back({chain_body_name(ch, i), s, k.tip_pos[i] + off,
                           g.radius, comp_id});
          }
        }
        break;
      }
    }
    ++comp_id;
  }
  return out;
}

MultibodyState assemble_dynamics(const std::shared_ptr<const Mechanism>& mech,
                                 const VectorXd& q, const VectorXd& v) {
  require(mech != nullptr, ErrorCode::config_error, "null mechanism");
  require(q.size() == num_coords(*mech) && v.size() == num_dofs(*mech),
          ErrorCode::dimension_mismatch, "assemble_dynamics: state sizes");
  const int m = num_dofs(*mech);
  MultibodyState st;
  st.mech_ = mech;
  st.q = q;
  st.v = v;
  st.M = MatrixXd::Zero(m, m);
  st.f_ext = VectorXd::Zero(m);
  const Vector3d g3 = mech->gravity;

  IndexSet actuated;
  for (const auto& c : layout(*mech)) {
    switch (c.kind) {
      case kFree6: {
        const auto& b = mech->free_bodies[c.index];
        const Eigen::Matrix3d R = quat_to_rot(q.segment<4>(c.q_off + 3));
        const Eigen::Matrix3d Iw =
            R * b.inertia.asDiagonal() * R.transpose();
        st.M.block<3, 3>(c.v_off, c.v_off) =
            b.mass * Eigen::Matrix3d::Identity();
        st.M.block<3, 3>(c.v_off + 3, c.v_off + 3) = Iw;
        st.f_ext.segment<3>(c.v_off) = b.mass * g3;
        const Vector3d w = v.segment<3>(c.v_off + 3);
        st.f_ext.segment<3>(c.v_off + 3) = -w.cross(Iw * w);
        if (b.actuated)
          for (int i = 0; i < 6; ++i) actuated.push_back(c.v_off + i);
        break;
      }
      case kPoint3: {
        const auto& b = mech->point_masses[c.index];
        st.M.block<3, 3>(c.v_off, c.v_off) =
            b.mass * Eigen::Matrix3d::Identity();
        st.f_ext.segment<3>(c.v_off) = b.mass * g3;
        if (b.actuated)
          for (int i = 0; i < 3; ++i) actuated.push_back(c.v_off + i);
        break;
      }
      case kPlanar3: {
        const auto& b = mech->planar_bodies[c.index];
        st.M(c.v_off, c.v_off) = b.mass;
        st.M(c.v_off + 1, c.v_off + 1) = b.mass;
        st.M(c.v_off + 2, c.v_off + 2) = b.inertia;
        st.f_ext[c.v_off] = b.mass * g3.x();
        st.f_ext[c.v_off + 1] = b.mass * g3.z();
        if (!b.actuated_dofs.empty()) {
          for (int i : b.actuated_dofs) {
            require(i >= 0 && i < 3, ErrorCode::config_error,
                    "planar body actuated_dofs out of range");
            actuated.push_back(c.v_off + i);
          }
        } else if (b.actuated) {
          for (int i = 0; i < 3; ++i) actuated.push_back(c.v_off + i);
        }
        break;
      }
      case kChain: {
        const auto& ch = mech->chains[c.index];
        const int d = c.v_len;
        VectorXd qc = q.segment(c.q_off, c.q_len);
        st.M.block(c.v_off, c.v_off, d, d) = chain_inertia(ch, qc.data());

        // gravity through the com jacobians
        const ChainKin k = chain_fk(ch, qc.data());
        VectorXd fg = VectorXd::Zero(d);
        if (ch.floating) {
          const MatrixXd Jb = chain_point_jac(ch, k, -1, k.base_pos);
          fg += ch.base_mass * Jb.transpose() * g3;
        }
        for (int i = 0; i < static_cast<int>(ch.links.size()); ++i) {
          const MatrixXd Jc = chain_point_jac(ch, k, i, k.com_pos[i]);
          fg += ch.links[i].mass * Jc.transpose() * g3;
        }

        // velocity-product terms from central differences of the kinetic
        // energy metric
        const VectorXd vc = v.segment(c.v_off, d);
        VectorXd fcor = VectorXd::Zero(d);
        if (vc.cwiseAbs().maxCoeff() > 0) {
          const double h = 1e-6;
          std::vector<MatrixXd> dM(d);
          for (int kk = 0; kk < d; ++kk) {
            VectorXd qp = qc, qm = qc;
            qp[kk] += h;
            qm[kk] -= h;
            dM[kk] =
                (chain_inertia(ch, qp.data()) - chain_inertia(ch, qm.data())) /
                (2 * h);
          }
          for (int i = 0; i < d; ++i) {
            double acc = 0;
            for (int j = 0; j < d; ++j)
              for (int kk = 0; kk < d; ++kk)
                acc += 0.5 *
                       (dM[kk](i, j) + dM[j](i, kk) - dM[i](j, kk)) * vc[j] *
                       vc[kk];
            fcor[i] = -acc;
          }
        }
        st.f_ext.segment(c.v_off, d) = fg + fcor;

        int at = c.v_off;
        if (ch.floating) {
          if (ch.base_actuated)
            for (int i = 0; i < 3; ++i) actuated.push_back(at + i);
          at += 3;
        }
        for (const auto& link : ch.links) {
          if (link.actuated) actuated.push_back(at);
          ++at;
        }
        break;
      }
    }
  }

  st.P = MatrixXd::Zero(static_cast<int>(actuated.size()), m);
  for (int r = 0; r < static_cast<int>(actuated.size()); ++r)
    st.P(r, actuated[r]) = 1.0;
  return st;
}

VectorXd actuated_positions(const Mechanism& mech, const VectorXd& q,
                            const MatrixXd& P) {
  // map velocity indices to coordinate indices; free-body angular
  // coordinates have no scalar position
  const int m = num_dofs(mech);
  std::vector<int> v_to_q(m, -1);
  for (const auto& c : layout(mech)) {
    if (c.kind == kFree6) {
      for (int i = 0; i < 3; ++i) v_to_q[c.v_off + i] = c.q_off + i;
    } else {
      for (int i = 0; i < c.v_len; ++i) v_to_q[c.v_off + i] = c.q_off + i;
    }
  }
  VectorXd out(P.rows());
  for (int r = 0; r < P.rows(); ++r) {
    int col = -1;
    for (int j = 0; j < m; ++j)
      if (P(r, j) == 1.0) col = j;
    require(col >= 0 && v_to_q[col] >= 0, ErrorCode::unsupported_mechanism,
            "actuated_positions: coordinate without a scalar position");
    out[r] = q[v_to_q[col]];
  }
  return out;
}

VectorXd integrate_coords(const Mechanism& mech, const VectorXd& q,
                          const VectorXd& v, double dt) {
  VectorXd out = q;
  for (const auto& c : layout(mech)) {
    if (c.kind == kFree6) {
      out.segment<3>(c.q_off) += dt * v.segment<3>(c.v_off);
      const Vector3d w = v.segment<3>(c.v_off + 3);
      Eigen::Quaterniond quat(q[c.q_off + 3], q[c.q_off + 4], q[c.q_off + 5],
                              q[c.q_off + 6]);
      const double angle = w.norm() * dt;
      if (angle > 0) {
        const Eigen::Quaterniond dq(
            Eigen::AngleAxisd(angle, w.normalized()));
        quat = (dq * quat).normalized();
      }
      out[c.q_off + 3] = quat.w();
      out[c.q_off + 4] = quat.x();
      out[c.q_off + 5] = quat.y();
      out[c.q_off + 6] = quat.z();
    } else {
      out.segment(c.q_off, c.q_len) += dt * v.segment(c.v_off, c.v_len);
    }
  }
  return out;
}

std::vector<ContactPoint> detect_contacts(const MultibodyState& state,
                                          double dt, double margin_scale,
                                          double margin_abs) {
  std::vector<ContactPoint> out;
  const auto geoms = state.geometry();
  const auto& mech = state.mechanism();
  auto speed_at = [&](const MultibodyState::GeomInstance& g) {
    return (state.point_jacobian(g.body, g.center) * state.v).norm();
  };
  for (const auto& g : geoms) {
    for (const auto& gp : mech.ground) {
      ContactPoint c = closest_sphere_halfspace(g.center, g.radius, gp.plane);
      const double margin =
          std::max(margin_abs, margin_scale * speed_at(g) * dt);
      if (c.gap > margin) continue;
      c.body_a = "";  // static environment
      c.body_b = g.body;
      c.feature_b = g.feature;
      c.mu = gp.mu;
      out.push_back(c);
    }
  }
  for (size_t i = 0; i < geoms.size(); ++i) {
    for (size_t j = i + 1; j < geoms.size(); ++j) {
      if (geoms[i].component == geoms[j].component) continue;
      ContactPoint c = closest_sphere_sphere(geoms[i].center, geoms[i].radius,
                                             geoms[j].center, geoms[j].radius);
      const double margin = std::max(
          margin_abs,
          margin_scale * (speed_at(geoms[i]) + speed_at(geoms[j])) * dt);
      if (c.gap > margin) continue;
      c.body_a = geoms[i].body;
      c.feature_a = geoms[i].feature;
      c.body_b = geoms[j].body;
      c.feature_b = geoms[j].feature;
      c.mu = mech.mu_pair;
      out.push_back(c);
    }
  }
  return out;
}

namespace {

// fold pyramid components back to signed tangential impulses; exact for the
// k = 4 pyramid used throughout
void fold_friction(const ContactSet& cs, const IndexSet& fin,
                   const VectorXd& fF, VectorXd& fS, VectorXd& fT) {
  const int nf = static_cast<int>(fin.size());
  for (int fi = 0; fi < nf; ++fi) {
    const int i = fin[fi];
    double s = 0, t = 0;
    for (int j = 0; j < cs.k; ++j) {
      const int pair = j / 2;
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      double cs_a = 1.0, sn_a = 0.0;
      if (cs.k <= 4) {
        cs_a = (pair == 0) ? 1.0 : 0.0;
        sn_a = (pair == 0) ? 0.0 : 1.0;
      } else {
        const double angle = M_PI * pair / (cs.k / 2);
        cs_a = std::cos(angle);
        sn_a = std::sin(angle);
      }
      s += sign * cs_a * fF[j * nf + fi];
      t += sign * sn_a * fF[j * nf + fi];
    }
    fS[i] = s;
    fT[i] = t;
  }
}

std::vector<ContactMode> classify_contacts(const ContactSet& cs,
                                           const VectorXd& v_plus,
                                           const VectorXd& fN) {
  std::vector<ContactMode> modes(cs.size(), ContactMode::inactive);
  for (int i = 0; i < cs.size(); ++i) {
    if (fN[i] <= 1e-12) continue;
    const double vs = cs.S.row(i).dot(v_plus);
    const double vt = cs.T.row(i).dot(v_plus);
    modes[i] = (std::hypot(vs, vt) > 1e-8) ? ContactMode::sliding
                                           : ContactMode::sticking;
  }
  return modes;
}

StepResult rigid_step_complementarity(const MultibodyState& state,
                                      const ContactSet& cs,
                                      const VectorXd& imp_ext, double dt) {
  const int m = state.num_dofs();
  const int n = cs.size();
  IndexSet fin, inf;
  for (int i = 0; i < n; ++i)
    (cs.contacts[i].no_slip() ? inf : fin).push_back(i);

  // independent no-slip rows (no actuation block in the forward problem)
  const MatrixXd Sinf = select_rows(cs.S, inf);
  const MatrixXd Tinf = select_rows(cs.T, inf);
  const auto [sel_s, sel_t] =
      find_indices(state.M, MatrixXd::Zero(0, m), Sinf, Tinf);
  const MatrixXd Ssel = select_rows(Sinf, sel_s);
  const MatrixXd Tsel = select_rows(Tinf, sel_t);
  const int ns = static_cast<int>(sel_s.size());
  const int nt = static_cast<int>(sel_t.size());
  const int nf = static_cast<int>(fin.size());
  const int k = cs.k;

  // friction pyramid rows for the finite-mu subset, block order preserved
  MatrixXd Ffin(nf * k, m);
  for (int j = 0; j < k; ++j)
    for (int fi = 0; fi < nf; ++fi)
      Ffin.row(j * nf + fi) = cs.F.row(j * n + fin[fi]);

  Mlcp mlcp;
  const int p = m + ns + nt;
  const int t = n + nf * k + nf;
  mlcp.A.setZero(p, p);
  mlcp.A.topLeftCorner(m, m) = state.M;
  mlcp.A.block(0, m, m, ns) = -Ssel.transpose();
  mlcp.A.block(0, m + ns, m, nt) = -Tsel.transpose();
  mlcp.A.block(m, 0, ns, m) = Ssel;
  mlcp.A.block(m + ns, 0, nt, m) = Tsel;
  mlcp.C.setZero(p, t);
  mlcp.C.block(0, 0, m, n) = -cs.N.transpose();
  mlcp.C.block(0, n, m, nf * k) = -Ffin.transpose();
  mlcp.D.setZero(t, p);
  mlcp.D.block(0, 0, n, m) = cs.N;
  mlcp.D.block(n, 0, nf * k, m) = Ffin;
  mlcp.B.setZero(t, t);
  for (int fi = 0; fi < nf; ++fi) {
    for (int j = 0; j < k; ++j) {
      mlcp.B(n + j * nf + fi, n + nf * k + fi) = 1.0;   // E' lambda
      mlcp.B(n + nf * k + fi, n + j * nf + fi) = -1.0;  // -E f_F
    }
    mlcp.B(n + nf * k + fi, fin[fi]) = cs.contacts[fin[fi]].mu;
  }
  mlcp.g.setZero(p);
  mlcp.g.head(m) = -(state.M * state.v + imp_ext);
  mlcp.h.setZero(t);
  mlcp.h.head(n) = cs.gaps() / dt;

  auto [lcp, rec] = mlcp_to_lcp(mlcp);
  const LcpSolution sol = solve_lemke(lcp);
  const VectorXd x = recover_unconstrained(rec, sol.z);

  StepResult out;
  out.v_plus = x.head(m);
  out.f_N = sol.z.head(n);
  out.f_S = VectorXd::Zero(n);
  out.f_T = VectorXd::Zero(n);
  for (int i = 0; i < ns; ++i) out.f_S[inf[sel_s[i]]] = x[m + i];
  for (int i = 0; i < nt; ++i) out.f_T[inf[sel_t[i]]] = x[m + ns + i];
  fold_friction(cs, fin, sol.z.segment(n, nf * k), out.f_S, out.f_T);
  out.pivots = sol.pivot_count;
  out.regularization = sol.regularization_used;
  out.contact_events = classify_contacts(cs, out.v_plus, out.f_N);
  return out;
}

StepResult rigid_step_energy_qp(const MultibodyState& state,
                                const ContactSet& cs, const VectorXd& imp_ext,
                                double dt) {
  const int m = state.num_dofs();
  const int n = cs.size();
  IndexSet fin, inf;
  for (int i = 0; i < n; ++i)
    (cs.contacts[i].no_slip() ? inf : fin).push_back(i);
  const MatrixXd Sinf = select_rows(cs.S, inf);
  const MatrixXd Tinf = select_rows(cs.T, inf);
  const auto [sel_s, sel_t] =
      find_indices(state.M, MatrixXd::Zero(0, m), Sinf, Tinf);
  const MatrixXd Ssel = select_rows(Sinf, sel_s);
  const MatrixXd Tsel = select_rows(Tinf, sel_t);
  const int ns = static_cast<int>(sel_s.size());
  const int nt = static_cast<int>(sel_t.size());
  const int nf = static_cast<int>(fin.size());
  const int k = cs.k;

  MatrixXd Ffin(nf * k, m);
  for (int j = 0; j < k; ++j)
    for (int fi = 0; fi < nf; ++fi)
      Ffin.row(j * nf + fi) = cs.F.row(j * n + fin[fi]);

  // impulse variables z = (f_N, f_F, f_Sinf, f_Tinf)
  const int nz = n + nf * k + ns + nt;
  MatrixXd R(m, nz);
  R.block(0, 0, m, n) = cs.N.transpose();
  R.block(0, n, m, nf * k) = Ffin.transpose();
  R.block(0, n + nf * k, m, ns) = Ssel.transpose();
  R.block(0, n + nf * k + ns, m, nt) = Tsel.transpose();

  const VectorXd vtilde = state.v + state.M.llt().solve(imp_ext);
  const MatrixXd MinvR = state.M.llt().solve(R);

  Qp qp;
  qp.H = R.transpose() * MinvR;
  qp.H = 0.5 * (qp.H + qp.H.transpose());
  qp.c = R.transpose() * vtilde;
  const int ncone = nf;
  qp.Aineq.setZero(n + ncone, nz);
  qp.bineq.setZero(n + ncone);
  qp.Aineq.topRows(n) = cs.N * MinvR;
  qp.bineq.head(n) = -cs.gaps() / dt - cs.N * vtilde;
  for (int fi = 0; fi < nf; ++fi) {
    qp.Aineq(n + fi, fin[fi]) = cs.contacts[fin[fi]].mu;
    for (int j = 0; j < k; ++j) qp.Aineq(n + fi, n + j * nf + fi) = -1.0;
  }
  for (int i = 0; i < n + nf * k; ++i) qp.lb_zero.push_back(i);

  const QpResult qr = solve_qp(qp);
  StepResult out;
  out.v_plus = vtilde + MinvR * qr.x;
  out.f_N = qr.x.head(n);
  out.f_S = VectorXd::Zero(n);
  out.f_T = VectorXd::Zero(n);
  for (int i = 0; i < ns; ++i) out.f_S[inf[sel_s[i]]] = qr.x[n + nf * k + i];
  for (int i = 0; i < nt; ++i)
    out.f_T[inf[sel_t[i]]] = qr.x[n + nf * k + ns + i];
  fold_friction(cs, fin, qr.x.segment(n, nf * k), out.f_S, out.f_T);
  out.pivots = qr.diagnostics.pivots;
  out.regularization = qr.diagnostics.regularization;
  out.contact_events = classify_contacts(cs, out.v_plus, out.f_N);
  return out;
}

}  // namespace

StepResult forward_step_rigid(const MultibodyState& state,
                              const ContactSet& contacts, const VectorXd& tau,
                              double dt, ContactModel model) {
  require(dt > 0, ErrorCode::config_error, "forward_step_rigid: dt > 0");
  const int m = state.num_dofs();
  VectorXd imp_ext = dt * state.f_ext;
  if (tau.size() > 0) {
    require(tau.size() == state.P.rows(), ErrorCode::dimension_mismatch,
            "forward_step_rigid: tau length");
    imp_ext += dt * (state.P.transpose() * tau);
  }
  if (contacts.size() == 0) {
    StepResult out;
    out.v_plus = state.v + state.M.llt().solve(imp_ext);
    out.f_N.resize(0);
    out.f_S.resize(0);
    out.f_T.resize(0);
    return out;
  }
  require(contacts.N.cols() == m, ErrorCode::dimension_mismatch,
          "forward_step_rigid: contact set built for another model");
  if (model == ContactModel::complementarity)
    return rigid_step_complementarity(state, contacts, imp_ext, dt);
  return rigid_step_energy_qp(state, contacts, imp_ext, dt);
}

StepResult forward_step_compliant(const MultibodyState& state,
                                  const ContactSet& contacts,
                                  const VectorXd& tau, double dt,
                                  double stiffness, double damping) {
  require(dt > 0 && stiffness >= 0 && damping >= 0, ErrorCode::config_error,
          "forward_step_compliant: bad parameters");
  const int n = contacts.size();
  VectorXd force = state.f_ext;
  if (tau.size() > 0) force += state.P.transpose() * tau;
  StepResult out;
  out.f_N = VectorXd::Zero(n);
  out.f_S = VectorXd::Zero(n);
  out.f_T = VectorXd::Zero(n);
  const double v_reg = 1e-3;  // sliding-speed regularization (m/s)
  for (int i = 0; i < n; ++i) {
    const double gap = contacts.contacts[i].gap;
    const double gap_rate = contacts.N.row(i).dot(state.v);
    const double fn = std::max(0.0, -stiffness * gap - damping * gap_rate);
    out.f_N[i] = fn * dt;  // recorded as impulses, consistent with rigid steps
    if (fn == 0.0) continue;
    const double mu = contacts.contacts[i].mu;
    if (std::isfinite(mu) && mu > 0) {
      const double vs = contacts.S.row(i).dot(state.v);
      const double vt = contacts.T.row(i).dot(state.v);
      const double speed = std::hypot(vs, vt);
      const double scale = -mu * fn / std::max(speed, v_reg);
      out.f_S[i] = scale * vs * dt;
      out.f_T[i] = scale * vt * dt;
    }
    force += contacts.N.row(i).transpose() * fn +
             contacts.S.row(i).transpose() * (out.f_S[i] / dt) +
             contacts.T.row(i).transpose() * (out.f_T[i] / dt);
  }
  out.v_plus = state.v + dt * state.M.llt().solve(force);
  out.contact_events = classify_contacts(contacts, out.v_plus, out.f_N);
  return out;
}

// ---------------------------------------------------------------------------
// JSON mechanism description

namespace {

json vec3_to_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3d vec3_from_json(const json& j) {
  require(j.is_array() && j.size() == 3, ErrorCode::config_error,
          "mechanism json: expected [x, y, z]");
  return Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json spheres_to_json(const std::vector<SphereGeom>& spheres) {
  json arr = json::array();
  for (const auto& s : spheres)
    arr.push_back({{"offset", vec3_to_json(s.offset)}, {"radius", s.radius}});
  return arr;
}

std::vector<SphereGeom> spheres_from_json(const json& j) {
  std::vector<SphereGeom> out;
  for (const auto& s : j)
    out.push_back({vec3_from_json(s.at("offset")), s.at("radius").get<double>()});
  return out;
}

double mu_from_json(const json& j) {
  if (j.is_string()) {
    require(j.get<std::string>() == "inf", ErrorCode::config_error,
            "mechanism json: mu must be a number or \"inf\"");
    return std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

json mu_to_json(double mu) {
  if (!std::isfinite(mu)) return json("inf");
  return json(mu);
}

}  // namespace

Mechanism mechanism_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw IdynError(ErrorCode::config_error,
                    std::string("mechanism json parse error: ") + e.what());
  }
  Mechanism mech;
  if (j.contains("gravity")) mech.gravity = vec3_from_json(j["gravity"]);
  if (j.contains("mu_pair")) mech.mu_pair = mu_from_json(j["mu_pair"]);
  for (const auto& g : j.value("ground", json::array())) {
    GroundPlane gp;
    if (g.contains("point")) gp.plane.point = vec3_from_json(g["point"]);
    if (g.contains("normal")) gp.plane.normal = vec3_from_json(g["normal"]);
    if (g.contains("mu")) gp.mu = mu_from_json(g["mu"]);
    mech.ground.push_back(gp);
  }
  for (const auto& b : j.value("free_bodies", json::array())) {
    FreeBodyDesc d;
    d.name = b.at("name").get<std::string>();
    d.mass = b.at("mass").get<double>();
    if (b.contains("inertia")) d.inertia = vec3_from_json(b["inertia"]);
    if (b.contains("pos")) d.pos = vec3_from_json(b["pos"]);
    if (b.contains("quat")) {
      const auto& q = b["quat"];
      d.quat = Eigen::Vector4d(q[0], q[1], q[2], q[3]);
    }
    if (b.contains("vel")) d.vel = vec3_from_json(b["vel"]);
    if (b.contains("angvel")) d.angvel = vec3_from_json(b["angvel"]);
    d.actuated = b.value("actuated", false);
    if (b.contains("spheres")) d.spheres = spheres_from_json(b["spheres"]);
    mech.free_bodies.push_back(d);
  }
  for (const auto& b : j.value("point_masses", json::array())) {
    PointMassDesc d;
    d.name = b.at("name").get<std::string>();
    d.mass = b.at("mass").get<double>();
    if (b.contains("pos")) d.pos = vec3_from_json(b["pos"]);
    if (b.contains("vel")) d.vel = vec3_from_json(b["vel"]);
    d.radius = b.value("radius", 0.05);
    d.actuated = b.value("actuated", false);
    mech.point_masses.push_back(d);
  }
  for (const auto& b : j.value("planar_bodies", json::array())) {
    PlanarBodyDesc d;
    d.name = b.at("name").get<std::string>();
    d.mass = b.at("mass").get<double>();
    d.inertia = b.value("inertia", 1e-2);
    d.x = b.value("x", 0.0);
    d.z = b.value("z", 0.0);
    d.theta = b.value("theta", 0.0);
    d.vx = b.value("vx", 0.0);
    d.vz = b.value("vz", 0.0);
    d.vtheta = b.value("vtheta", 0.0);
    d.actuated = b.value("actuated", false);
    if (b.contains("actuated_dofs"))
      for (const auto& i : b["actuated_dofs"])
        d.actuated_dofs.push_back(i.get<int>());
    if (b.contains("spheres")) d.spheres = spheres_from_json(b["spheres"]);
    mech.planar_bodies.push_back(d);
  }
  for (const auto& c : j.value("chains", json::array())) {
    ChainDesc d;
    d.name = c.at("name").get<std::string>();
    d.floating = c.value("floating", false);
    d.base_x = c.value("base_x", 0.0);
    d.base_z = c.value("base_z", 0.0);
    d.base_theta = c.value("base_theta", 0.0);
    d.base_mass = c.value("base_mass", 1.0);
    d.base_inertia = c.value("base_inertia", 1e-2);
    d.base_actuated = c.value("base_actuated", false);
    if (c.contains("base_spheres"))
      d.base_spheres = spheres_from_json(c["base_spheres"]);
    for (const auto& l : c.value("links", json::array())) {
      LinkDesc ld;
      ld.name = l.at("name").get<std::string>();
      ld.parent = l.value("parent", -1);
      if (l.contains("attach")) ld.attach = vec3_from_json(l["attach"]);
      ld.joint = l.value("type", std::string("revolute")) == "prismatic"
                     ? JointType::prismatic
                     : JointType::revolute;
      ld.q0 = l.value("q0", 0.0);
      ld.v0 = l.value("v0", 0.0);
      ld.actuated = l.value("actuated", true);
      ld.length = l.value("length", 0.1);
      ld.dir_angle = l.value("dir_angle", 0.0);
      ld.mass = l.value("mass", 0.2);
      ld.inertia = l.value("inertia", 1e-4);
      ld.com = l.value("com", ld.length / 2);
      if (l.contains("spheres")) ld.spheres = spheres_from_json(l["spheres"]);
      d.links.push_back(ld);
    }
    mech.chains.push_back(d);
  }
  return mech;
}

std::string mechanism_to_json(const Mechanism& mech) {
  json j;
  j["gravity"] = vec3_to_json(mech.gravity);
  j["mu_pair"] = mu_to_json(mech.mu_pair);
  j["ground"] = json::array();
  for (const auto& g : mech.ground)
    j["ground"].push_back({{"point", vec3_to_json(g.plane.point)},
                           {"normal", vec3_to_json(g.plane.normal)},
                           {"mu", mu_to_json(g.mu)}});
  j["free_bodies"] = json::array();
  for (const auto& b : mech.free_bodies)
    j["free_bodies"].push_back(
        {{"name", b.name},
         {"mass", b.mass},
         {"inertia", vec3_to_json(b.inertia)},
         {"pos", vec3_to_json(b.pos)},
         {"quat", json::array({b.quat[0], b.quat[1], b.quat[2], b.quat[3]})},
         {"vel", vec3_to_json(b.vel)},
         {"angvel", vec3_to_json(b.angvel)},
         {"actuated", b.actuated},
         {"spheres", spheres_to_json(b.spheres)}});
  j["point_masses"] = json::array();
  for (const auto& b : mech.point_masses)
    j["point_masses"].push_back({{"name", b.name},
                                 {"mass", b.mass},
                                 {"pos", vec3_to_json(b.pos)},
                                 {"vel", vec3_to_json(b.vel)},
                                 {"radius", b.radius},
                                 {"actuated", b.actuated}});
  j["planar_bodies"] = json::array();
  for (const auto& b : mech.planar_bodies)
    j["planar_bodies"].push_back({{"name", b.name},
                                  {"mass", b.mass},
                                  {"inertia", b.inertia},
                                  {"x", b.x},
                                  {"z", b.z},
                                  {"theta", b.theta},
                                  {"vx", b.vx},
                                  {"vz", b.vz},
                                  {"vtheta", b.vtheta},
                                  {"actuated", b.actuated},
                                  {"actuated_dofs", b.actuated_dofs},
                                  {"spheres", spheres_to_json(b.spheres)}});
  j["chains"] = json::array();
  for (const auto& c : mech.chains) {
    json links = json::array();
    for (const auto& l : c.links)
      links.push_back(
          {{"name", l.name},
           {"parent", l.parent},
           {"attach", vec3_to_json(l.attach)},
           {"type", l.joint == JointType::prismatic ? "prismatic" : "revolute"},
           {"q0", l.q0},
           {"v0", l.v0},
           {"actuated", l.actuated},
           {"length", l.length},
           {"dir_angle", l.dir_angle},
           {"mass", l.mass},
           {"inertia", l.inertia},
           {"com", l.com},
           {"spheres", spheres_to_json(l.spheres)}});
    j["chains"].push_back({{"name", c.name},
                           {"floating", c.floating},
                           {"base_x", c.base_x},
                           {"base_z", c.base_z},
                           {"base_theta", c.base_theta},
                           {"base_mass", c.base_mass},
                           {"base_inertia", c.base_inertia},
                           {"base_actuated", c.base_actuated},
                           {"base_spheres", spheres_to_json(c.base_spheres)},
                           {"links", links}});
  }
  return j.dump(2);
}

Mechanism load_mechanism(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "load_mechanism: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return mechanism_from_json(ss.str());
}

}  // namespace idyn
