//! Boundary control synthesis: a finite zero-flux basis on the control
//! patch, per-pose least-squares fits of the resistance matrix through the
//! control-to-force map, and the partition-of-unity feedback law over a
//! rectangular pose lattice.

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    elementary_solutions, momentum_rate, resistance_matrix, ResistanceMatrix,
};
use crate::error::{Error, Result};
use crate::geometry::{
    euler_from_rotation, in_q_delta, outer_boundary, rotation_from_euler, BoundaryDiscretization,
    BoundaryNode, DomainGeometry, PatchTag, Pose, ShapeKind, SolidShape,
};
use crate::stokes::{BoundaryData, SolveRecord, SolverConfig, StokesSolver};
use std::sync::Arc;

/// Condition-number bound for the control matrix.
pub const CONTROL_MATRIX_COND_BOUND: f64 = 1e8;

/// Velocity fields supported on the Gamma nodes of the container grid,
/// indexed by the outer-grid local node index. Each field vanishes on the
/// wall and carries zero discrete flux.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlBasis {
    pub fields: Vec<Vec<Vector3<f64>>>,
    pub centers: Vec<Vector3<f64>>,
    pub bump_radius: f64,
}

impl ControlBasis {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Discrete flux of an outer-node field.
pub fn outer_flux(values: &[Vector3<f64>], outer_nodes: &[BoundaryNode]) -> f64 {
    values
        .iter()
        .zip(outer_nodes.iter())
        .map(|(v, n)| n.weight * v.dot(&n.normal))
        .sum()
}

/// Directional bump fields on a quasi-uniform center set inside the cap,
/// flux-projected node-wise along the normal.
pub fn build_control_basis(
    domain: &DomainGeometry,
    outer_nodes: &[BoundaryNode],
    count: usize,
    bump_radius: f64,
) -> Result<ControlBasis> {
    if count < 6 {
        return Err(Error::BasisTooLarge {
            requested: count,
            available: 6,
        });
    }
    if bump_radius <= 0.0 || bump_radius >= domain.gamma_cap {
        return Err(Error::InvalidDomain(format!(
            "bump radius {bump_radius} must be in (0, gamma_cap)"
        )));
    }
    let n_centers = count.div_ceil(3);
    // support margin: bumps must stay inside the cap
    let gamma_inner = domain.gamma_cap - bump_radius;
    // allow up to roughly 4x area overlap of the bumps inside the shrunken cap
    let capacity = ((4.0 * (1.0 - gamma_inner.cos()) / (1.0 - bump_radius.cos())).floor()
        as usize)
        .max(1);
    if n_centers > capacity {
        return Err(Error::BasisTooLarge {
            requested: count,
            available: 3 * capacity,
        });
    }

    // Fibonacci point set filling the shrunken cap at full capacity,
    // reordered greedily by farthest-point so that smaller bases are
    // well-spread prefixes of larger ones.
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let master: Vec<Vector3<f64>> = (0..capacity)
        .map(|k| {
            let u = (k as f64 + 0.5) / capacity as f64;
            let ct = 1.0 - u * (1.0 - gamma_inner.cos());
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let phi = k as f64 * golden;
            domain.radius * Vector3::new(st * phi.cos(), st * phi.sin(), ct)
        })
        .collect();
    let mut order = vec![0usize];
    let mut dist: Vec<f64> = master.iter().map(|p| (p - master[0]).norm()).collect();
    while order.len() < n_centers {
        let next = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        order.push(next);
        for (d, p) in dist.iter_mut().zip(master.iter()) {
            *d = d.min((p - master[next]).norm());
        }
    }
    let centers: Vec<Vector3<f64>> = order.into_iter().map(|i| master[i]).collect();

    let gamma_weight_sum: f64 = outer_nodes
        .iter()
        .filter(|n| n.tag == PatchTag::Gamma)
        .map(|n| n.weight)
        .sum();

    let mut fields = Vec::with_capacity(count);
    for b in 0..count {
        let center = &centers[b / 3];
        let dir = b % 3;
        let mut e = Vector3::zeros();
        e[dir] = 1.0;
        let mut values: Vec<Vector3<f64>> = outer_nodes
            .iter()
            .map(|n| {
                if n.tag != PatchTag::Gamma {
                    return Vector3::zeros();
                }
                let cosang =
                    (n.point.dot(center) / (n.point.norm() * center.norm())).clamp(-1.0, 1.0);
                let s = cosang.acos() / bump_radius;
                if s >= 1.0 {
                    Vector3::zeros()
                } else {
                    (1.0 - s * s).powi(3) * e
                }
            })
            .collect();
        // project out the net flux
        let c = outer_flux(&values, outer_nodes) / gamma_weight_sum;
        for (v, n) in values.iter_mut().zip(outer_nodes.iter()) {
            if n.tag == PatchTag::Gamma {
                *v -= c * n.normal;
            }
        }
        fields.push(values);
    }

    let basis = ControlBasis {
        fields,
        centers,
        bump_radius,
    };
    let (min_eig, max_eig) = basis.gram_extremes(outer_nodes);
    if min_eig <= 1e-10 * max_eig {
        return Err(Error::BasisTooLarge {
            requested: count,
            available: 3 * capacity,
        });
    }
    Ok(basis)
}

impl ControlBasis {
    /// Extreme eigenvalues of the weighted L2 Gram matrix.
    pub fn gram_extremes(&self, outer_nodes: &[BoundaryNode]) -> (f64, f64) {
        let n = self.len();
        let mut gram = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut dot = 0.0;
                for ((va, vb), node) in self.fields[a]
                    .iter()
                    .zip(self.fields[b].iter())
                    .zip(outer_nodes.iter())
                {
                    dot += node.weight * va.dot(vb);
                }
                gram[(a, b)] = dot;
                gram[(b, a)] = dot;
            }
        }
        let eig = gram.symmetric_eigen().eigenvalues;
        (
            eig.iter().copied().fold(f64::INFINITY, f64::min),
            eig.iter().copied().fold(0.0, f64::max),
        )
    }
}

/// Control-to-force map at a pose: row `b` holds the six traction integrals
/// of the Stokes solution driven by basis field `b` on the container
/// boundary (zero on the solid).
pub fn basis_traction_table(
    solver: &StokesSolver,
    basis: &ControlBasis,
    n_solid: usize,
) -> Result<DMatrix<f64>> {
    let mut table = DMatrix::zeros(basis.len(), 6);
    for (b, field) in basis.fields.iter().enumerate() {
        let mut values = vec![Vector3::zeros(); solver.disc.len()];
        for (j, v) in field.iter().enumerate() {
            values[n_solid + j] = *v;
        }
        let sol = solver.solve(&BoundaryData { values })?;
        let integrals = sol.traction_integrals();
        for j in 0..6 {
            table[(b, j)] = integrals[j];
        }
    }
    Ok(table)
}

/// Least-squares fit of basis coefficients reproducing the rows of `K`
/// through the traction table. Returns the `N_b x 6` coefficient matrix
/// (column `i` drives the approximation of row `i` of `K`) and the max
/// row deviation.
pub fn fit_controls_at_pose(
    table: &DMatrix<f64>,
    resistance: &Matrix6<f64>,
    epsilon: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n_b = table.nrows();
    let t_t = table.transpose(); // 6 x N_b
    let svd = t_t.clone().svd(true, true);
    let mut coeffs = DMatrix::zeros(n_b, 6);
    let mut residual = 0.0f64;
    for i in 0..6 {
        let k_row: DVector<f64> = DVector::from_iterator(6, (0..6).map(|j| resistance[(i, j)]));
        let c = svd
            .solve(&k_row, 1e-12 * svd.singular_values.max())
            .map_err(|_| Error::RankDeficient { cond: f64::INFINITY })?;
        let dev = (&t_t * &c - &k_row).norm();
        residual = residual.max(dev);
        coeffs.column_mut(i).copy_from(&c);
    }
    if residual > epsilon {
        return Err(Error::FitResidual {
            residual,
            epsilon,
            h0: f64::NAN,
            h1: f64::NAN,
            h2: f64::NAN,
        });
    }
    Ok((coeffs, residual))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    fn coordinate(&self, idx: usize) -> f64 {
        if self.count <= 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * idx as f64 / (self.count - 1) as f64
        }
    }

    fn spacing(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.count - 1) as f64
        }
    }
}

/// Rectangular pose lattice with multilinear hat weights. Axes of count 1
/// are constant directions (the law does not vary along them).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseGrid {
    pub axes: Vec<GridAxis>,
}

impl PoseGrid {
    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn node_coords(&self, linear: usize) -> Vec<f64> {
        let mut rem = linear;
        let mut idx = vec![0usize; self.axes.len()];
        for a in (0..self.axes.len()).rev() {
            idx[a] = rem % self.axes[a].count;
            rem /= self.axes[a].count;
        }
        idx.iter()
            .zip(self.axes.iter())
            .map(|(&i, ax)| ax.coordinate(i))
            .collect()
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.iter().zip(self.axes.iter()).all(|(&c, ax)| {
            if ax.count <= 1 {
                true
            } else {
                let slack = 1e-12 * (1.0 + ax.max.abs() + ax.min.abs());
                c >= ax.min - slack && c <= ax.max + slack
            }
        })
    }

    /// Multilinear partition-of-unity weights at a point of the covered
    /// region; the weights sum to one exactly.
    pub fn weights(&self, coords: &[f64]) -> Result<Vec<(usize, f64)>> {
        assert_eq!(coords.len(), self.axes.len());
        if !self.contains(coords) {
            return Err(Error::OutsideCoveredRegion {
                h0: coords[0],
                h1: *coords.get(1).unwrap_or(&0.0),
                h2: *coords.get(2).unwrap_or(&0.0),
            });
        }
        // per-axis cell index and local weight of the upper corner
        let mut cells = Vec::with_capacity(self.axes.len());
        for (c, ax) in coords.iter().zip(self.axes.iter()) {
            if ax.count <= 1 {
                cells.push((0usize, 0.0f64, 1usize));
                continue;
            }
            let t = ((c - ax.min) / ax.spacing()).clamp(0.0, (ax.count - 1) as f64);
            let lo = (t.floor() as usize).min(ax.count - 2);
            cells.push((lo, t - lo as f64, ax.count));
        }
        let dims = cells.len();
        let mut out = Vec::with_capacity(1 << dims);
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut linear = 0usize;
            let mut skip = false;
            for (a, &(lo, frac, count)) in cells.iter().enumerate() {
                let hi = (corner >> a) & 1 == 1;
                let idx = if count == 1 {
                    if hi {
                        skip = true;
                    }
                    0
                } else if hi {
                    w *= frac;
                    lo + 1
                } else {
                    w *= 1.0 - frac;
                    lo
                };
                linear = linear * count + idx;
            }
            if !skip && w != 0.0 {
                out.push((linear, w));
            }
        }
        Ok(out)
    }
}

/// Compact bound set for `(q', q'')` under which gains are certified.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundSet {
    pub velocity: f64,
    pub acceleration: f64,
}

impl BoundSet {
    pub fn contains(&self, velocity: &Vector6<f64>, acceleration: &Vector6<f64>) -> bool {
        velocity.norm() <= self.velocity && acceleration.norm() <= self.acceleration
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawNode {
    pub coords: Vec<f64>,
    pub pose: Pose,
    pub resistance: Matrix6<f64>,
    pub min_eigenvalue: f64,
    pub asymmetry: f64,
    pub table: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
    pub fit_residual: f64,
    pub control_matrix_cond: f64,
}

/// Control field on the container boundary, indexed by the outer-grid
/// local node index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlField {
    pub values: Vec<Vector3<f64>>,
}

/// Evaluation mode for pose-dependent tables: `Fast` interpolates the
/// precomputed node tables, `Full` re-solves the Stokes problems at the
/// query pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Fast,
    Full,
}

/// The assembled partition-of-unity feedback law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlLaw {
    pub version: u32,
    pub shape: SolidShape,
    pub domain: DomainGeometry,
    pub solver_config: SolverConfig,
    pub solid_resolution: (usize, usize),
    pub outer_resolution: (usize, usize),
    pub grid: PoseGrid,
    pub nodes: Vec<LawNode>,
    pub basis: ControlBasis,
    pub eps_bar: f64,
    pub bounds: BoundSet,
}

pub const LAW_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct BuildDiagnostics {
    pub node_residuals: Vec<f64>,
    pub solve_records: Vec<SolveRecord>,
}

/// Builds the law: at every lattice node, elementary solutions, resistance
/// matrix, basis traction table and fitted coefficients.
pub fn build_control_law(
    shape: &SolidShape,
    domain: &DomainGeometry,
    solver_config: &SolverConfig,
    solid_resolution: (usize, usize),
    outer_resolution: (usize, usize),
    grid: PoseGrid,
    basis_size: usize,
    bump_radius: f64,
    epsilon_rel: f64,
    bounds: BoundSet,
) -> Result<(ControlLaw, BuildDiagnostics)> {
    let dims = grid.axes.len();
    if dims != 3 && dims != 6 {
        return Err(Error::InvalidDomain(format!(
            "pose grid must have 3 (position) or 6 (position + angles) axes, got {dims}"
        )));
    }
    if matches!(shape.kind, ShapeKind::Ellipsoid { .. }) && dims == 3 {
        // a 3-axis grid relies on the rotation invariance of K, which only
        // holds for sphere solids
        return Err(Error::InvalidDomain(
            "ellipsoid solids need a 6-axis pose grid (position + Euler angles)".into(),
        ));
    }

    let (outer_nodes, _) = outer_boundary(domain, outer_resolution)?;
    let basis = build_control_basis(domain, &outer_nodes, basis_size, bump_radius)?;

    let mut nodes = Vec::with_capacity(grid.node_count());
    let mut node_residuals = Vec::new();
    let mut solve_records = Vec::new();
    for linear in 0..grid.node_count() {
        let coords = grid.node_coords(linear);
        let pose = pose_from_coords(&coords)?;
        if !in_q_delta(shape, &pose, domain) {
            return Err(Error::InvalidDomain(format!(
                "grid node h=({:.3}, {:.3}, {:.3}) leaves the admissible pose set",
                coords[0], coords[1], coords[2]
            )));
        }
        let disc = Arc::new(BoundaryDiscretization::assemble(
            shape,
            &pose,
            domain,
            solid_resolution,
            outer_resolution,
        )?);
        let n_solid = disc.solid_idx.len();
        let solver = StokesSolver::new(shape, &pose, domain, disc, solver_config)?;
        let elem = elementary_solutions(&solver, &pose)?;
        let res: ResistanceMatrix = resistance_matrix(&elem)?;
        let table = basis_traction_table(&solver, &basis, n_solid)?;
        let epsilon = epsilon_rel * res.k.norm();
        let (coefficients, fit_residual) =
            fit_controls_at_pose(&table, &res.k, epsilon).map_err(|e| match e {
                Error::FitResidual { residual, epsilon, .. } => Error::FitResidual {
                    residual,
                    epsilon,
                    h0: coords[0],
                    h1: coords[1],
                    h2: coords[2],
                },
                other => other,
            })?;

        let b_mat = control_matrix_from(&table, &coefficients);
        let sv = b_mat.svd(false, false).singular_values;
        let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
        if cond > CONTROL_MATRIX_COND_BOUND {
            return Err(Error::IllConditionedControlMatrix {
                cond,
                bound: CONTROL_MATRIX_COND_BOUND,
            });
        }
        node_residuals.push(fit_residual);
        solve_records.extend(solver.take_records());
        nodes.push(LawNode {
            coords,
            pose,
            resistance: res.k,
            min_eigenvalue: res.min_eigenvalue,
            asymmetry: res.asymmetry,
            table,
            coefficients,
            fit_residual,
            control_matrix_cond: cond,
        });
    }

    // epsilon-bar: the certified closeness level, kept below the
    // invertibility margin of every node resistance matrix
    let eps_bar = node_residuals.iter().copied().fold(0.0, f64::max);
    for node in &nodes {
        if node.fit_residual >= node.min_eigenvalue / 2.0 {
            return Err(Error::FitResidual {
                residual: node.fit_residual,
                epsilon: node.min_eigenvalue / 2.0,
                h0: node.coords[0],
                h1: node.coords[1],
                h2: node.coords[2],
            });
        }
    }

    Ok((
        ControlLaw {
            version: LAW_FORMAT_VERSION,
            shape: shape.clone(),
            domain: domain.clone(),
            solver_config: solver_config.clone(),
            solid_resolution,
            outer_resolution,
            grid,
            nodes,
            basis,
            eps_bar,
            bounds,
        },
        BuildDiagnostics {
            node_residuals,
            solve_records,
        },
    ))
}

fn pose_from_coords(coords: &[f64]) -> Result<Pose> {
    let h = Vector3::new(coords[0], coords[1], coords[2]);
    if coords.len() == 3 {
        Ok(Pose::translated(h))
    } else {
        let theta = Vector3::new(coords[3], coords[4], coords[5]);
        Pose::new(h, rotation_from_euler(&theta))
    }
}

/// `B[j][i] = sum_b table[b][j] coeffs[b][i]`: the map from gains to the
/// six traction integrals.
pub fn control_matrix_from(table: &DMatrix<f64>, coeffs: &DMatrix<f64>) -> Matrix6<f64> {
    let prod = table.tr_mul(coeffs); // 6 x 6
    let mut out = Matrix6::zeros();
    for j in 0..6 {
        for i in 0..6 {
            out[(j, i)] = prod[(j, i)];
        }
    }
    out
}

impl ControlLaw {
    fn query_coords(&self, pose: &Pose) -> Vec<f64> {
        let mut coords = vec![pose.h[0], pose.h[1], pose.h[2]];
        if self.grid.axes.len() == 6 {
            let theta = euler_from_rotation(&pose.rot);
            coords.extend_from_slice(theta.as_slice());
        }
        coords
    }

    pub fn covers(&self, pose: &Pose) -> bool {
        self.grid.contains(&self.query_coords(pose))
    }

    pub fn weights_at(&self, pose: &Pose) -> Result<Vec<(usize, f64)>> {
        self.grid.weights(&self.query_coords(pose))
    }

    /// Blended resistance matrix.
    pub fn resistance_at(&self, pose: &Pose) -> Result<Matrix6<f64>> {
        let mut k = Matrix6::zeros();
        for (idx, w) in self.weights_at(pose)? {
            k += w * self.nodes[idx].resistance;
        }
        Ok(k)
    }

    /// Blended basis traction table.
    pub fn table_at(&self, pose: &Pose) -> Result<DMatrix<f64>> {
        let mut t = DMatrix::zeros(self.basis.len(), 6);
        for (idx, w) in self.weights_at(pose)? {
            t += w * &self.nodes[idx].table;
        }
        Ok(t)
    }

    /// Blended fit coefficients (the partition-of-unity controls).
    pub fn coefficients_at(&self, pose: &Pose) -> Result<DMatrix<f64>> {
        let mut c = DMatrix::zeros(self.basis.len(), 6);
        for (idx, w) in self.weights_at(pose)? {
            c += w * &self.nodes[idx].coefficients;
        }
        Ok(c)
    }

    /// Recomputes the traction table at the query pose by fresh Stokes
    /// solves.
    pub fn recompute_table(&self, pose: &Pose) -> Result<DMatrix<f64>> {
        let disc = Arc::new(BoundaryDiscretization::assemble(
            &self.shape,
            pose,
            &self.domain,
            self.solid_resolution,
            self.outer_resolution,
        )?);
        let n_solid = disc.solid_idx.len();
        let solver = StokesSolver::new(&self.shape, pose, &self.domain, disc, &self.solver_config)?;
        basis_traction_table(&solver, &self.basis, n_solid)
    }

    /// Recomputes the resistance matrix at the query pose by fresh solves.
    pub fn recompute_resistance(&self, pose: &Pose) -> Result<Matrix6<f64>> {
        let disc = Arc::new(BoundaryDiscretization::assemble(
            &self.shape,
            pose,
            &self.domain,
            self.solid_resolution,
            self.outer_resolution,
        )?);
        let solver = StokesSolver::new(&self.shape, pose, &self.domain, disc, &self.solver_config)?;
        let elem = elementary_solutions(&solver, pose)?;
        Ok(resistance_matrix(&elem)?.k)
    }

    /// Control matrix `B(q)`; `Fast` uses the interpolated table, `Full`
    /// recomputes it. Invertibility is asserted through the condition bound.
    pub fn control_matrix(&self, pose: &Pose, mode: EvalMode) -> Result<Matrix6<f64>> {
        let coeffs = self.coefficients_at(pose)?;
        let table = match mode {
            EvalMode::Fast => self.table_at(pose)?,
            EvalMode::Full => self.recompute_table(pose)?,
        };
        let b = control_matrix_from(&table, &coeffs);
        let sv = b.svd(false, false).singular_values;
        let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
        if cond > CONTROL_MATRIX_COND_BOUND {
            return Err(Error::IllConditionedControlMatrix {
                cond,
                bound: CONTROL_MATRIX_COND_BOUND,
            });
        }
        Ok(b)
    }

    /// The feedback gain: `mu = -B(q)^-1 (d/dt(M(q) q') + K(q) q')`, and
    /// the boundary control field it commands.
    pub fn mu(
        &self,
        pose: &Pose,
        velocity: &Vector6<f64>,
        acceleration: &Vector6<f64>,
    ) -> Result<(Vector6<f64>, ControlField)> {
        if !self.bounds.contains(velocity, acceleration) {
            return Err(Error::OutsideBoundSet(format!(
                "|q'| = {:.3e} (bound {:.3e}), |q''| = {:.3e} (bound {:.3e})",
                velocity.norm(),
                self.bounds.velocity,
                acceleration.norm(),
                self.bounds.acceleration
            )));
        }
        let b = self.control_matrix(pose, EvalMode::Fast)?;
        let k = self.resistance_at(pose)?;
        let rate = momentum_rate(&self.shape, pose, velocity, acceleration);
        let rhs = rate + k * velocity;
        let mu = -b
            .lu()
            .solve(&rhs)
            .ok_or(Error::IllConditionedControlMatrix {
                cond: f64::INFINITY,
                bound: CONTROL_MATRIX_COND_BOUND,
            })?;
        let field = self.control_field(pose, &mu)?;
        Ok((mu, field))
    }

    /// `g = sum_i mu_i g_bar_i(q, .)` as node values on the container grid.
    pub fn control_field(&self, pose: &Pose, mu: &Vector6<f64>) -> Result<ControlField> {
        let coeffs = self.coefficients_at(pose)?;
        let field_weights: Vec<f64> = (0..self.basis.len())
            .map(|b| (0..6).map(|i| coeffs[(b, i)] * mu[i]).sum())
            .collect();
        let n_outer = self.basis.fields[0].len();
        let mut values = vec![Vector3::zeros(); n_outer];
        for (b, w) in field_weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (v, f) in values.iter_mut().zip(self.basis.fields[b].iter()) {
                *v += *w * f;
            }
        }
        Ok(ControlField { values })
    }

    /// Discrete trace-norm surrogate on the control patch: weighted L2 norm
    /// plus a first-difference seminorm over neighboring Gamma nodes.
    pub fn control_cost(&self, field: &ControlField) -> f64 {
        let (outer_nodes, neighbors) =
            outer_boundary(&self.domain, self.outer_resolution).expect("validated resolution");
        let mut l2 = 0.0;
        for (v, n) in field.values.iter().zip(outer_nodes.iter()) {
            l2 += n.weight * v.norm_squared();
        }
        let mut semi = 0.0;
        for &(a, b) in &neighbors {
            let d = (outer_nodes[a].point - outer_nodes[b].point).norm();
            let w = 0.5 * (outer_nodes[a].weight + outer_nodes[b].weight);
            semi += w * (field.values[a] - field.values[b]).norm_squared() / d;
        }
        (l2 + semi).sqrt()
    }

    /// Closeness defect `|B(q) - K(q)|` with both sides recomputed at the
    /// query pose; the quantity the partition-of-unity construction bounds.
    pub fn close_residual(&self, pose: &Pose) -> Result<f64> {
        let b = self.control_matrix(pose, EvalMode::Full)?;
        let k = self.recompute_resistance(pose)?;
        Ok((b - k.transpose()).norm())
    }

    /// Max grid spacing half-diagonal, the blending radius entering the
    /// Lipschitz bound.
    pub fn half_diagonal(&self) -> f64 {
        self.grid
            .axes
            .iter()
            .map(|a| a.spacing().powi(2))
            .sum::<f64>()
            .sqrt()
            / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn default_domain() -> DomainGeometry {
        DomainGeometry::new(1.0, PI / 3.0, 0.1).unwrap()
    }

    fn outer(domain: &DomainGeometry) -> Vec<BoundaryNode> {
        outer_boundary(domain, (14, 28)).unwrap().0
    }

    #[test]
    fn basis_fields_fluxless_and_supported() {
        let domain = default_domain();
        let nodes = outer(&domain);
        let basis = build_control_basis(&domain, &nodes, 12, 0.35).unwrap();
        assert_eq!(basis.len(), 12);
        for field in &basis.fields {
            let flux = outer_flux(field, &nodes);
            assert!(flux.abs() <= 1e-12, "flux {flux:.3e}");
            for (v, n) in field.iter().zip(nodes.iter()) {
                if n.tag == PatchTag::Wall {
                    assert_eq!(*v, Vector3::zeros());
                }
            }
        }
    }

    #[test]
    fn basis_gram_well_conditioned() {
        let domain = default_domain();
        let nodes = outer(&domain);
        let basis = build_control_basis(&domain, &nodes, 12, 0.35).unwrap();
        let (min_eig, max_eig) = basis.gram_extremes(&nodes);
        assert!(min_eig > 1e-10 * max_eig);
    }

    #[test]
    fn basis_capacity_enforced() {
        let domain = default_domain();
        let nodes = outer(&domain);
        assert!(matches!(
            build_control_basis(&domain, &nodes, 3000, 0.35),
            Err(Error::BasisTooLarge { .. })
        ));
    }

    #[test]
    fn grid_weights_partition_of_unity() {
        let grid = PoseGrid {
            axes: vec![
                GridAxis { min: -0.3, max: 0.3, count: 3 },
                GridAxis { min: -0.3, max: 0.3, count: 3 },
                GridAxis { min: -0.3, max: 0.3, count: 2 },
            ],
        };
        for coords in [
            [0.0, 0.0, 0.0],
            [0.11, -0.2, 0.07],
            [-0.3, 0.3, -0.3],
            [0.29, 0.01, 0.29],
        ] {
            let w = grid.weights(&coords).unwrap();
            let sum: f64 = w.iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
        assert!(grid.weights(&[0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_weights_interpolatory_at_nodes() {
        let grid = PoseGrid {
            axes: vec![
                GridAxis { min: -0.2, max: 0.2, count: 3 },
                GridAxis { min: -0.2, max: 0.2, count: 3 },
                GridAxis { min: 0.0, max: 0.0, count: 1 },
            ],
        };
        for linear in 0..grid.node_count() {
            let coords = grid.node_coords(linear);
            let w = grid.weights(&coords).unwrap();
            let dominant: Vec<_> = w.iter().filter(|(_, w)| *w > 1e-13).collect();
            assert_eq!(dominant.len(), 1);
            assert_eq!(dominant[0].0, linear);
            assert!((dominant[0].1 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_node_grid_is_constant() {
        let grid = PoseGrid {
            axes: vec![
                GridAxis { min: 0.0, max: 0.0, count: 1 },
                GridAxis { min: 0.0, max: 0.0, count: 1 },
                GridAxis { min: 0.0, max: 0.0, count: 1 },
            ],
        };
        let w = grid.weights(&[0.25, -0.4, 0.1]).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], (0, 1.0));
    }

    #[test]
    fn fit_unbounded_epsilon_always_succeeds() {
        // a rank-deficient toy table: only the first traction direction
        let mut table = DMatrix::zeros(6, 6);
        for b in 0..6 {
            table[(b, 0)] = (b + 1) as f64;
        }
        let k = Matrix6::identity();
        let (coeffs, residual) = fit_controls_at_pose(&table, &k, f64::INFINITY).unwrap();
        assert_eq!(coeffs.ncols(), 6);
        // rows 2..6 of K are orthogonal to the reachable space
        assert!((residual - 1.0).abs() < 1e-10);
        let (_, r2) = fit_controls_at_pose(&table, &k, f64::INFINITY).unwrap();
        assert_eq!(residual, r2);
        assert!(matches!(
            fit_controls_at_pose(&table, &k, 0.5),
            Err(Error::FitResidual { .. })
        ));
    }
}
