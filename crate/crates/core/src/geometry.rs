//! Domain, solid and boundary geometry.
//!
//! The fluid occupies a spherical container minus the rigid solid. The solid
//! is a sphere or triaxial ellipsoid moved rigidly by a pose `(h, R)`. The
//! control patch is the polar cap of the container boundary. Boundaries are
//! carried by latitude-longitude quadrature grids.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POSE_ORTHOGONALITY_TOL: f64 = 1e-10;

/// Solid configuration: center of mass and orientation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pose {
    pub h: Vector3<f64>,
    pub rot: Matrix3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            h: Vector3::zeros(),
            rot: Matrix3::identity(),
        }
    }

    pub fn new(h: Vector3<f64>, rot: Matrix3<f64>) -> Result<Self> {
        let pose = Self { h, rot };
        pose.validate()?;
        Ok(pose)
    }

    pub fn translated(h: Vector3<f64>) -> Self {
        Self {
            h,
            rot: Matrix3::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let defect = (self.rot.transpose() * self.rot - Matrix3::identity()).norm();
        if defect > POSE_ORTHOGONALITY_TOL {
            return Err(Error::InvalidPose(format!(
                "R^T R deviates from identity by {defect:.3e}"
            )));
        }
        let det = self.rot.determinant();
        if (det - 1.0).abs() > POSE_ORTHOGONALITY_TOL {
            return Err(Error::InvalidPose(format!("det R = {det} is not 1")));
        }
        Ok(())
    }

    /// Maps a reference point (solid frame, centered at the origin) to the
    /// current configuration.
    pub fn apply(&self, x0: &Vector3<f64>) -> Vector3<f64> {
        self.h + self.rot * x0
    }
}

/// Pose together with linear and angular velocity, packed as
/// `q' = (h', omega)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidState {
    pub pose: Pose,
    pub velocity: Vector6<f64>,
}

impl RigidState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            velocity: Vector6::zeros(),
        }
    }

    pub fn linear(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(0).into_owned()
    }

    pub fn angular(&self) -> Vector3<f64> {
        self.velocity.fixed_rows::<3>(3).into_owned()
    }

    /// Rigid velocity field `h' + omega ^ (x - h)`.
    pub fn velocity_at(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.linear() + self.angular().cross(&(x - self.pose.h))
    }
}

/// The rotation matrix as the product of the three angle factors, in the
/// z-, then y-, then x-axis factor order.
pub fn rotation_from_euler(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (s1, c1) = theta[0].sin_cos();
    let (s2, c2) = theta[1].sin_cos();
    let (s3, c3) = theta[2].sin_cos();
    let r1 = Matrix3::new(c1, -s1, 0.0, s1, c1, 0.0, 0.0, 0.0, 1.0);
    let r2 = Matrix3::new(c2, 0.0, -s2, 0.0, 1.0, 0.0, s2, 0.0, c2);
    let r3 = Matrix3::new(1.0, 0.0, 0.0, 0.0, c3, -s3, 0.0, s3, c3);
    r1 * r2 * r3
}

/// Inverse of [`rotation_from_euler`]; principal branch, valid away from
/// the `theta_2 = +-pi/2` gimbal configuration.
pub fn euler_from_rotation(rot: &Matrix3<f64>) -> Vector3<f64> {
    let s2 = rot[(2, 0)].clamp(-1.0, 1.0);
    let theta2 = s2.asin();
    let theta1 = rot[(1, 0)].atan2(rot[(0, 0)]);
    let theta3 = rot[(2, 1)].atan2(rot[(2, 2)]);
    Vector3::new(theta1, theta2, theta3)
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Nearest rotation matrix in the Frobenius sense (polar projection).
pub fn polar_project(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // flip the weakest singular direction
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// One RK4 step of `dR/dt = (omega ^) R` with constant omega, followed by
/// re-orthonormalization.
pub fn advance_rotation(rot: &Matrix3<f64>, omega: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
    let w = skew(omega);
    let k1 = w * rot;
    let k2 = w * (rot + (dt / 2.0) * k1);
    let k3 = w * (rot + (dt / 2.0) * k2);
    let k4 = w * (rot + dt * k3);
    let next = rot + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    polar_project(&next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: Vector3<f64> },
}

/// Reference solid, centered at the origin of the body frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolidShape {
    pub kind: ShapeKind,
    pub mass: f64,
    pub inertia0: Matrix3<f64>,
}

impl SolidShape {
    /// Uniform sphere, `I0 = (2/5) m a^2 Id`.
    pub fn sphere(radius: f64, mass: f64) -> Result<Self> {
        let shape = Self {
            kind: ShapeKind::Sphere { radius },
            mass,
            inertia0: Matrix3::identity() * (0.4 * mass * radius * radius),
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Uniform ellipsoid with the standard diagonal inertia.
    pub fn ellipsoid(semi_axes: Vector3<f64>, mass: f64) -> Result<Self> {
        let (a, b, c) = (semi_axes[0], semi_axes[1], semi_axes[2]);
        let shape = Self {
            kind: ShapeKind::Ellipsoid { semi_axes },
            mass,
            inertia0: Matrix3::from_diagonal(&Vector3::new(
                mass / 5.0 * (b * b + c * c),
                mass / 5.0 * (a * a + c * c),
                mass / 5.0 * (a * a + b * b),
            )),
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn with_inertia(mut self, inertia0: Matrix3<f64>) -> Result<Self> {
        self.inertia0 = inertia0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mass <= 0.0 || !self.mass.is_finite() {
            return Err(Error::InvalidShape(format!("mass {} must be > 0", self.mass)));
        }
        match self.kind {
            ShapeKind::Sphere { radius } => {
                if radius <= 0.0 {
                    return Err(Error::InvalidShape(format!("radius {radius} must be > 0")));
                }
            }
            ShapeKind::Ellipsoid { semi_axes } => {
                if semi_axes.min() <= 0.0 {
                    return Err(Error::InvalidShape("semi-axes must be > 0".into()));
                }
            }
        }
        let sym_defect = (self.inertia0 - self.inertia0.transpose()).norm();
        if sym_defect > 1e-12 * self.inertia0.norm() {
            return Err(Error::InvalidShape("inertia0 not symmetric".into()));
        }
        let eig = self.inertia0.symmetric_eigen();
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::InvalidShape(format!(
                "inertia0 not positive definite (min eigenvalue {:.3e})",
                eig.eigenvalues.min()
            )));
        }
        Ok(())
    }

    pub fn semi_axes(&self) -> Vector3<f64> {
        match self.kind {
            ShapeKind::Sphere { radius } => Vector3::repeat(radius),
            ShapeKind::Ellipsoid { semi_axes } => semi_axes,
        }
    }

    /// Circumscribed radius in the body frame.
    pub fn bounding_radius(&self) -> f64 {
        self.semi_axes().max()
    }

    /// True if the body-frame point lies strictly inside the solid.
    pub fn contains_local(&self, y: &Vector3<f64>) -> bool {
        let ax = self.semi_axes();
        let s = (y[0] / ax[0]).powi(2) + (y[1] / ax[1]).powi(2) + (y[2] / ax[2]).powi(2);
        s < 1.0
    }

    /// Analytic surface area for spheres; `None` for ellipsoids.
    pub fn analytic_area(&self) -> Option<f64> {
        match self.kind {
            ShapeKind::Sphere { radius } => Some(4.0 * PI * radius * radius),
            ShapeKind::Ellipsoid { .. } => None,
        }
    }
}

/// Spherical container of radius `radius` centered at the origin, control
/// patch `Gamma = {x : x_3 / radius > cos(gamma_cap)}`, and clearance
/// parameter `delta` defining the admissible pose set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainGeometry {
    pub radius: f64,
    pub gamma_cap: f64,
    pub delta: f64,
}

impl DomainGeometry {
    pub fn new(radius: f64, gamma_cap: f64, delta: f64) -> Result<Self> {
        let dom = Self {
            radius,
            gamma_cap,
            delta,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "outer radius {} must be > 0",
                self.radius
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "delta {} must be > 0",
                self.delta
            )));
        }
        if self.gamma_cap <= 0.0 || self.gamma_cap >= PI {
            return Err(Error::InvalidDomain(format!(
                "gamma_cap {} must be in (0, pi)",
                self.gamma_cap
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        x.norm() < self.radius
    }
}

/// Distance from the solid in pose `q` to the outer boundary. Exact for
/// sphere solids; a conservative node-sampled surrogate for ellipsoids.
/// Negative values signal overlap.
pub fn clearance(shape: &SolidShape, pose: &Pose, domain: &DomainGeometry) -> f64 {
    match shape.kind {
        ShapeKind::Sphere { radius } => domain.radius - pose.h.norm() - radius,
        ShapeKind::Ellipsoid { .. } => {
            let nodes = solid_boundary(shape, pose, (16, 32)).expect("internal resolution");
            nodes
                .iter()
                .map(|n| domain.radius - n.point.norm())
                .fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn in_q_delta(shape: &SolidShape, pose: &Pose, domain: &DomainGeometry) -> bool {
    clearance(shape, pose, domain) >= domain.delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchTag {
    Solid,
    Gamma,
    Wall,
}

/// Quadrature node on the fluid boundary. The normal points out of the
/// fluid: into the solid on the solid boundary, radially outward on the
/// container boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub weight: f64,
    pub tag: PatchTag,
}

/// Discrete carrier of the fluid boundary: solid surface nodes followed by
/// container nodes (tagged Gamma or Wall).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryDiscretization {
    pub nodes: Vec<BoundaryNode>,
    pub solid_idx: Vec<usize>,
    pub gamma_idx: Vec<usize>,
    pub wall_idx: Vec<usize>,
    /// Grid-adjacent pairs of Gamma nodes, for the discrete trace seminorm.
    pub gamma_neighbors: Vec<(usize, usize)>,
}

impl BoundaryDiscretization {
    pub fn assemble(
        shape: &SolidShape,
        pose: &Pose,
        domain: &DomainGeometry,
        solid_res: (usize, usize),
        outer_res: (usize, usize),
    ) -> Result<Self> {
        let solid_nodes = solid_boundary(shape, pose, solid_res)?;
        let n_solid = solid_nodes.len();
        let mut nodes = solid_nodes;
        let (outer_nodes, neighbors) = outer_boundary(domain, outer_res)?;
        let gamma_neighbors = neighbors
            .into_iter()
            .map(|(a, b)| (a + n_solid, b + n_solid))
            .collect();
        nodes.extend(outer_nodes);

        let mut solid_idx = Vec::new();
        let mut gamma_idx = Vec::new();
        let mut wall_idx = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            match node.tag {
                PatchTag::Solid => solid_idx.push(i),
                PatchTag::Gamma => gamma_idx.push(i),
                PatchTag::Wall => wall_idx.push(i),
            }
        }
        if gamma_idx.is_empty() {
            return Err(Error::InvalidDomain(
                "control patch contains no quadrature nodes".into(),
            ));
        }
        Ok(Self {
            nodes,
            solid_idx,
            gamma_idx,
            wall_idx,
            gamma_neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn solid_area(&self) -> f64 {
        self.solid_idx.iter().map(|&i| self.nodes[i].weight).sum()
    }
}

/// Latitude-longitude discretization of the solid surface in pose `q`.
/// Reference nodes are mapped by `x -> h + R x0`; normals are rotated and
/// flipped to point out of the fluid; weights are transported unchanged.
pub fn solid_boundary(
    shape: &SolidShape,
    pose: &Pose,
    resolution: (usize, usize),
) -> Result<Vec<BoundaryNode>> {
    let (n_polar, n_azim) = resolution;
    if n_polar < 4 || n_azim < 4 {
        return Err(Error::DegenerateResolution(n_polar, n_azim));
    }
    pose.validate()?;
    let ax = shape.semi_axes();
    let d_theta = PI / n_polar as f64;
    let d_phi = 2.0 * PI / n_azim as f64;
    let mut nodes = Vec::with_capacity(n_polar * n_azim);
    for k in 0..n_polar {
        let theta = (k as f64 + 0.5) * d_theta;
        let (st, ct) = theta.sin_cos();
        for j in 0..n_azim {
            let phi = j as f64 * d_phi;
            let (sp, cp) = phi.sin_cos();
            let x0 = Vector3::new(ax[0] * st * cp, ax[1] * st * sp, ax[2] * ct);
            // |x_theta x x_phi| = s_t * |(a2 a3 s_t c_p, a1 a3 s_t s_p, a1 a2 c_t)|
            let cross = Vector3::new(
                ax[1] * ax[2] * st * cp,
                ax[0] * ax[2] * st * sp,
                ax[0] * ax[1] * ct,
            );
            let weight = st * cross.norm() * d_theta * d_phi;
            let n_out = cross.normalize();
            let point = pose.apply(&x0);
            // out of the fluid = into the solid
            let normal = -(pose.rot * n_out);
            nodes.push(BoundaryNode {
                point,
                normal,
                weight,
                tag: PatchTag::Solid,
            });
        }
    }
    Ok(nodes)
}

/// Latitude-longitude discretization of the container sphere, tagged Gamma
/// on the polar cap and Wall elsewhere. Also returns grid-adjacent Gamma
/// node pairs (indices local to the returned vector).
pub fn outer_boundary(
    domain: &DomainGeometry,
    resolution: (usize, usize),
) -> Result<(Vec<BoundaryNode>, Vec<(usize, usize)>)> {
    let (n_polar, n_azim) = resolution;
    if n_polar < 4 || n_azim < 4 {
        return Err(Error::DegenerateResolution(n_polar, n_azim));
    }
    let r = domain.radius;
    let d_theta = PI / n_polar as f64;
    let d_phi = 2.0 * PI / n_azim as f64;
    let mut nodes = Vec::with_capacity(n_polar * n_azim);
    let mut tags = vec![false; n_polar * n_azim];
    for k in 0..n_polar {
        let theta = (k as f64 + 0.5) * d_theta;
        let (st, ct) = theta.sin_cos();
        for j in 0..n_azim {
            let phi = j as f64 * d_phi;
            let (sp, cp) = phi.sin_cos();
            let dir = Vector3::new(st * cp, st * sp, ct);
            let in_gamma = ct > domain.gamma_cap.cos();
            tags[k * n_azim + j] = in_gamma;
            nodes.push(BoundaryNode {
                point: r * dir,
                normal: dir,
                weight: r * r * st * d_theta * d_phi,
                tag: if in_gamma { PatchTag::Gamma } else { PatchTag::Wall },
            });
        }
    }
    let mut neighbors = Vec::new();
    for k in 0..n_polar {
        for j in 0..n_azim {
            let i = k * n_azim + j;
            if !tags[i] {
                continue;
            }
            let j_next = k * n_azim + (j + 1) % n_azim;
            if tags[j_next] && j_next != i {
                neighbors.push((i, j_next));
            }
            if k + 1 < n_polar {
                let k_next = (k + 1) * n_azim + j;
                if tags[k_next] {
                    neighbors.push((i, k_next));
                }
            }
        }
    }
    Ok((nodes, neighbors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn euler_identity() {
        let r = rotation_from_euler(&Vector3::zeros());
        assert!((r - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn euler_first_factor_quarter_turn() {
        let r = rotation_from_euler(&Vector3::new(PI / 2.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).norm() < 1e-15);
    }

    #[test]
    fn euler_orthogonality() {
        let r = rotation_from_euler(&Vector3::new(0.3, 0.2, 0.1));
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let theta = Vector3::new(
                rng.gen_range(-1.4..1.4),
                rng.gen_range(-1.4..1.4),
                rng.gen_range(-1.4..1.4),
            );
            let r = rotation_from_euler(&theta);
            let back = euler_from_rotation(&r);
            assert!((rotation_from_euler(&back) - r).norm() < 1e-10);
        }
    }

    #[test]
    fn advance_rotation_zero_velocity() {
        let r = rotation_from_euler(&Vector3::new(0.4, -0.2, 0.7));
        let next = advance_rotation(&r, &Vector3::zeros(), 0.1);
        assert!((next - r).norm() < 1e-14);
    }

    #[test]
    fn advance_rotation_fourth_order() {
        // oracle: closed-form rotation by w*t about e3
        let w = 1.3;
        let t = 1.0;
        let omega = Vector3::new(0.0, 0.0, w);
        let exact = rotation_from_euler(&Vector3::new(w * t, 0.0, 0.0));
        let mut errors = Vec::new();
        for steps in [10usize, 20, 40] {
            let dt = t / steps as f64;
            let mut r = Matrix3::identity();
            for _ in 0..steps {
                r = advance_rotation(&r, &omega, dt);
            }
            errors.push((r - exact).norm());
        }
        assert!(errors[0] / errors[1] > 8.0);
        assert!(errors[1] / errors[2] > 8.0);
    }

    #[test]
    fn advance_rotation_stays_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = Matrix3::identity();
        for _ in 0..200 {
            let omega = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            r = advance_rotation(&r, &omega, 0.05);
            assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-12);
        }
    }

    #[test]
    fn sphere_quadrature_area() {
        let shape = SolidShape::sphere(0.1, 1.0).unwrap();
        let nodes = solid_boundary(&shape, &Pose::identity(), (16, 32)).unwrap();
        let area: f64 = nodes.iter().map(|n| n.weight).sum();
        let exact = 4.0 * PI * 0.01;
        assert!((area - exact).abs() / exact < 0.005);
    }

    #[test]
    fn quadrature_second_order_convergence() {
        let shape = SolidShape::sphere(0.25, 1.0).unwrap();
        let exact = 4.0 * PI * 0.0625;
        let errs: Vec<f64> = [(8, 16), (16, 32), (32, 64)]
            .iter()
            .map(|&res| {
                let nodes = solid_boundary(&shape, &Pose::identity(), res).unwrap();
                let area: f64 = nodes.iter().map(|n| n.weight).sum();
                (area - exact).abs() / exact
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.0);
        assert!(errs[1] / errs[2] > 3.0);
    }

    #[test]
    fn ellipsoid_quadrature_consistent_with_fine_reference() {
        let shape = SolidShape::ellipsoid(Vector3::new(0.1, 0.15, 0.2), 1.0).unwrap();
        let coarse: f64 = solid_boundary(&shape, &Pose::identity(), (16, 32))
            .unwrap()
            .iter()
            .map(|n| n.weight)
            .sum();
        let fine: f64 = solid_boundary(&shape, &Pose::identity(), (128, 256))
            .unwrap()
            .iter()
            .map(|n| n.weight)
            .sum();
        assert!((coarse - fine).abs() / fine < 0.005);
    }

    #[test]
    fn solid_boundary_identity_pose_and_translation() {
        let shape = SolidShape::sphere(0.1, 1.0).unwrap();
        let base = solid_boundary(&shape, &Pose::identity(), (8, 16)).unwrap();
        let t = Vector3::new(0.2, -0.1, 0.05);
        let moved = solid_boundary(&shape, &Pose::translated(t), (8, 16)).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            assert!((b.point - a.point - t).norm() < 1e-15);
            assert!((b.normal - a.normal).norm() < 1e-15);
            assert_relative_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn solid_boundary_rigid_equivariance() {
        let shape = SolidShape::ellipsoid(Vector3::new(0.1, 0.12, 0.08), 1.0).unwrap();
        let rot = rotation_from_euler(&Vector3::new(0.5, -0.3, 0.9));
        let h = Vector3::new(0.1, 0.2, -0.1);
        let pose = Pose::new(h, rot).unwrap();
        let base = solid_boundary(&shape, &Pose::identity(), (8, 16)).unwrap();
        let moved = solid_boundary(&shape, &pose, (8, 16)).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            assert!((b.point - (h + rot * a.point)).norm() <= 1e-14);
            assert!((b.normal - rot * a.normal).norm() <= 1e-14);
        }
    }

    #[test]
    fn normals_unit_and_inward() {
        let shape = SolidShape::sphere(0.1, 1.0).unwrap();
        let nodes = solid_boundary(&shape, &Pose::identity(), (8, 16)).unwrap();
        for n in &nodes {
            assert!((n.normal.norm() - 1.0).abs() < 1e-12);
            // out of the fluid means anti-parallel to the radial direction
            assert!(n.normal.dot(&n.point) < 0.0);
        }
    }

    #[test]
    fn degenerate_resolution_rejected() {
        let shape = SolidShape::sphere(0.1, 1.0).unwrap();
        assert!(matches!(
            solid_boundary(&shape, &Pose::identity(), (3, 16)),
            Err(Error::DegenerateResolution(3, 16))
        ));
    }

    #[test]
    fn clearance_sphere_cases() {
        let shape = SolidShape::sphere(0.1, 1.0).unwrap();
        let domain = DomainGeometry::new(1.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(clearance(&shape, &Pose::identity(), &domain), 0.9);
        let pose = Pose::translated(Vector3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(clearance(&shape, &pose, &domain), 0.4);
        let pose = Pose::translated(Vector3::new(0.85, 0.0, 0.0));
        assert!(!in_q_delta(&shape, &pose, &domain));
    }

    #[test]
    fn outer_boundary_splits_gamma_and_wall() {
        let domain = DomainGeometry::new(1.0, PI / 3.0, 0.1).unwrap();
        let disc = BoundaryDiscretization::assemble(
            &SolidShape::sphere(0.1, 1.0).unwrap(),
            &Pose::identity(),
            &domain,
            (8, 16),
            (12, 24),
        )
        .unwrap();
        assert!(!disc.gamma_idx.is_empty());
        assert!(!disc.wall_idx.is_empty());
        // cap solid angle fraction (1 - cos gamma)/2 = 1/4
        let gamma_area: f64 = disc.gamma_idx.iter().map(|&i| disc.nodes[i].weight).sum();
        let outer_area = 4.0 * PI;
        assert!((gamma_area / outer_area - 0.25).abs() < 0.02);
        assert!(!disc.gamma_neighbors.is_empty());
    }

    #[test]
    fn pose_validation_rejects_sheared_matrix() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-6;
        assert!(Pose::new(Vector3::zeros(), m).is_err());
    }
}
