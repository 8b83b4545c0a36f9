/****************************************************************************
 * This library is distributed under the terms of the Apache V2.0 license
 * (obtainable from http://www.apache.org/licenses/LICENSE-2.0).
 ****************************************************************************/
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "idyn/contact.hpp"

namespace idyn {

struct SphereGeom {
  Vector3d offset = Vector3d::Zero();  // body frame
  double radius = 0.05;
};

/// Free rigid body with 6-DoF world-frame velocity (linear, angular).
struct FreeBodyDesc {
  std::string name;
  double mass = 1;
  Vector3d inertia = Vector3d::Ones() * 1e-2;  // body-frame diagonal
  Vector3d pos = Vector3d::Zero();
  Eigen::Vector4d quat = Eigen::Vector4d(1, 0, 0, 0);  // w, x, y, z
  Vector3d vel = Vector3d::Zero();
  Vector3d angvel = Vector3d::Zero();
  bool actuated = false;  // wrench actuation on all six DoF
  std::vector<SphereGeom> spheres;
};

/// Translational point mass (3 DoF) with one spherical geometry.
struct PointMassDesc {
  std::string name;
  double mass = 1;
  Vector3d pos = Vector3d::Zero();
  Vector3d vel = Vector3d::Zero();
  double radius = 0.05;
  bool actuated = false;
};

/// Free planar body in the x-z plane: coordinates (x, z, theta), com at the
/// body origin.  actuated_dofs lists actuated coordinates (empty with
/// actuated = true means all three).
struct PlanarBodyDesc {
  std::string name;
  double mass = 1;
  double inertia = 1e-2;  // about the plane normal through the com
  double x = 0, z = 0, theta = 0;
  double vx = 0, vz = 0, vtheta = 0;
  bool actuated = false;
  IndexSet actuated_dofs;
  std::vector<SphereGeom> spheres;  // offsets use (x, z) components
};

enum class JointType { revolute, prismatic };

struct LinkDesc {
  std::string name;
  int parent = -1;          // -1: the chain base; otherwise an earlier link
  Vector3d attach = Vector3d::Zero();  // joint location in the parent frame
  JointType joint = JointType::revolute;
  double q0 = 0;
  double v0 = 0;
  bool actuated = true;
  double length = 0.1;      // joint-to-tip distance (rest length if prismatic)
  double dir_angle = 0;     // prismatic: slide direction in the parent frame
  double mass = 0.2;
  double inertia = 1e-4;    // about the plane normal through the com
  double com = 0.05;        // revolute: com distance along the link axis
  std::vector<SphereGeom> spheres;  // attached at the link tip frame
};

/// Planar articulated tree (links reference earlier links or the base),
/// optionally on a 3-DoF floating base.
struct ChainDesc {
  std::string name;
  bool floating = false;
  double base_x = 0, base_z = 0, base_theta = 0;
  double base_vx = 0, base_vz = 0, base_vtheta = 0;
  double base_mass = 1;
  double base_inertia = 1e-2;
  bool base_actuated = false;
  std::vector<SphereGeom> base_spheres;
  std::vector<LinkDesc> links;
};

struct GroundPlane {
  Halfspace plane;
  double mu = std::numeric_limits<double>::infinity();
};

/// Desk-scale mechanism: a composite of the supported families.
struct Mechanism {
  std::vector<FreeBodyDesc> free_bodies;
  std::vector<PointMassDesc> point_masses;
  std::vector<PlanarBodyDesc> planar_bodies;
  std::vector<ChainDesc> chains;
  std::vector<GroundPlane> ground;
  Vector3d gravity = Vector3d(0, 0, -9.8);
  double mu_pair = 1.0;  // friction for body-body sphere contacts
};

Mechanism mechanism_from_json(const std::string& text);
std::string mechanism_to_json(const Mechanism& mech);
Mechanism load_mechanism(const std::string& path);

/// Snapshot of the mechanism dynamics at (q, v): generalized inertia,
/// external forces (gravity plus velocity-product terms), the actuation
/// selection matrix, and the kinematics needed for contact wrenches.
class MultibodyState : public WrenchModel {
 public:
  VectorXd q;      // mixed-unit coordinates (quaternions for free bodies)
  VectorXd v;      // generalized velocity, dimension m
  MatrixXd M;      // m-by-m symmetric PD
  VectorXd f_ext;  // length m
  MatrixXd P;      // nq-by-m binary selection

  int num_dofs() const override { return static_cast<int>(v.size()); }
  int num_actuated() const { return static_cast<int>(P.rows()); }
  bool has_body(const std::string& body) const override;
  MatrixXd point_jacobian(const std::string& body,
                          const Vector3d& p) const override;

  /// World center of every collision sphere with its owning body and
  /// per-body geometry index.
  struct GeomInstance {
    std::string body;
    int feature = 0;
    Vector3d center;
    double radius = 0;
    int component = 0;  // index of the mechanism component owning it
  };
  std::vector<GeomInstance> geometry() const;

  const Mechanism& mechanism() const { return *mech_; }

 private:
  friend MultibodyState assemble_dynamics(
      const std::shared_ptr<const Mechanism>&, const VectorXd&,
      const VectorXd&);
  std::shared_ptr<const Mechanism> mech_;
};

/// Coordinate/velocity layout sizes for a mechanism.
int num_coords(const Mechanism& mech);
int num_dofs(const Mechanism& mech);
VectorXd initial_coords(const Mechanism& mech);
VectorXd initial_velocity(const Mechanism& mech);

/// Positions of the actuated coordinates in the row order of P.  Only
/// defined for joint/planar coordinates (not free-body orientations).
VectorXd actuated_positions(const Mechanism& mech, const VectorXd& q,
                            const MatrixXd& P);

MultibodyState assemble_dynamics(const std::shared_ptr<const Mechanism>& mech,
                                 const VectorXd& q, const VectorXd& v);

/// First-order position update (velocity then position; quaternions advance
/// by the exponential map).
VectorXd integrate_coords(const Mechanism& mech, const VectorXd& q,
                          const VectorXd& v, double dt);

/// Geometric contact detection against ground planes and between sphere
/// pairs across components; a pair is active when its gap is within the
/// velocity-scaled margin.
std::vector<ContactPoint> detect_contacts(const MultibodyState& state,
                                          double dt,
                                          double margin_scale = 1.0,
                                          double margin_abs = 1e-9);

enum class ContactModel { complementarity, complementarity_free };

enum class ContactMode { inactive, sticking, sliding };

struct StepResult {
  VectorXd v_plus;
  // per-contact impulses (N s): normal and signed tangential components
  VectorXd f_N, f_S, f_T;
  std::vector<ContactMode> contact_events;
  int pivots = 0;
  double regularization = 0;
};

/// One rigid time step: solves the contact model with the actuator forces
/// given.  tau is in force units; impulses are applied internally.
StepResult forward_step_rigid(const MultibodyState& state,
                              const ContactSet& contacts, const VectorXd& tau,
                              double dt, ContactModel model);

/// Penalty (spring-damper) contact step with regularized Coulomb friction.
StepResult forward_step_compliant(const MultibodyState& state,
                                  const ContactSet& contacts,
                                  const VectorXd& tau, double dt,
                                  double stiffness, double damping);

}  // namespace idyn
