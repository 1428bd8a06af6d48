//! Minimization of the discrete energy
//! `J_h(u) = sum_edges (u_a - u_b)^2 h^{n-2} + sum_nodes Q^2 h^n 1_{u > 0}`
//! by nodal coordinate descent in red-black order.
//!
//! Each nodal update is the exact argmin of the local one-dimensional energy
//! `v -> h^{n-2} 2n (v - m)^2 + Q_i^2 h^n 1_{v > 0}` over v >= 0, where m is
//! the neighbor mean. The closed form is: keep m when `m > Q_i h / sqrt(2n)`,
//! otherwise snap to 0. Since every update is a local argmin, the total
//! energy never increases across sweeps.

use crate::error::{Error, Result};
use crate::field::{
    free_boundary_points, gradient_sq, GridSpec, QField, ScalarField,
};
use crate::geom;
use serde::{Deserialize, Serialize};

/// Discretized minimization problem with Dirichlet data on the masked nodes.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: GridSpec,
    pub q: QField,
    pub boundary_data: ScalarField,
    pub max_sweeps: usize,
    pub energy_tol: f64,
}

/// How to initialize the interior before sweeping.
#[derive(Debug, Clone)]
pub enum Seed {
    /// Discrete harmonic extension of the boundary data (the default; starts
    /// in the all-positive basin).
    HarmonicExtension,
    /// All interior values zero. Useful for exploring the other basin of the
    /// nonconvex discrete problem.
    Zero,
    /// User-supplied initial field on the same grid.
    Field(ScalarField),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_energy: f64,
    pub sweeps_used: usize,
    pub energy_history: Vec<f64>,
    pub harmonic_residual: f64,
    /// (lower_ratio, upper_ratio) of u(y)/d(y, free boundary); None when the
    /// free boundary is empty.
    pub nondegeneracy: Option<(f64, f64)>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if self.q.spec != self.spec || self.boundary_data.spec != self.spec {
            return Err(Error::SpecMismatch);
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::ConfigInvariant("energy_tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::ConfigInvariant("max_sweeps must be positive".into()));
        }
        self.q.validate()?;
        for (i, (&v, &m)) in self
            .boundary_data
            .values
            .iter()
            .zip(&self.boundary_data.boundary_mask)
            .enumerate()
        {
            if m && v < 0.0 {
                return Err(Error::ConfigInvariant(format!(
                    "boundary data must be nonnegative (node {i} has {v})"
                )));
            }
        }
        // every face node must carry Dirichlet data, interior updates need a
        // full stencil
        for idx in 0..self.spec.node_count() {
            if self.spec.is_face_node(idx) && !self.boundary_data.boundary_mask[idx] {
                return Err(Error::ConfigInvariant(format!(
                    "face node {idx} is not in the boundary mask"
                )));
            }
        }
        Ok(())
    }
}

/// Discrete energy `J_h(u)`; each edge is counted once.
pub fn energy(u: &ScalarField, q: &QField) -> Result<f64> {
    if u.spec != q.spec {
        return Err(Error::SpecMismatch);
    }
    let spec = &u.spec;
    let n = spec.dim() as i32;
    let h_edge = spec.h.powi(n - 2);
    let h_node = spec.h.powi(n);
    let strides = spec.strides();
    let nodes = spec.nodes_per_axis();
    let mut grad = 0.0;
    let mut indicator = 0.0;
    for idx in 0..spec.node_count() {
        let multi = spec.index_to_multi(idx);
        for d in 0..spec.dim() {
            if multi[d] + 1 < nodes[d] {
                let diff = u.values[idx] - u.values[idx + strides[d]];
                grad += diff * diff;
            }
        }
        if u.values[idx] > 0.0 {
            indicator += q.values[idx] * q.values[idx];
        }
    }
    Ok(grad * h_edge + indicator * h_node)
}

/// Exact argmin of the local nodal energy over v >= 0.
pub fn nodal_update(neighbor_mean: f64, q_i: f64, h: f64, dim: usize) -> f64 {
    let threshold = q_i * h / (2.0 * dim as f64).sqrt();
    if neighbor_mean > threshold {
        neighbor_mean
    } else {
        0.0
    }
}

/// Discrete harmonic extension of the boundary data (plain mean-value sweeps,
/// no free boundary term). Used as the default solver seed.
pub fn harmonic_extension(p: &Problem) -> Result<ScalarField> {
    harmonic_extension_with(p, 1e-10, 4 * p.max_sweeps.max(2000))
}

pub fn harmonic_extension_with(p: &Problem, rel_tol: f64, max_sweeps: usize) -> Result<ScalarField> {
    p.validate()?;
    let mut u = init_from_boundary(p);
    let scale = u
        .values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-300);
    let plan = SweepPlan::new(&p.spec, &u.boundary_mask);
    for _ in 0..max_sweeps {
        let mut delta = 0.0f64;
        for color in 0..2 {
            for &idx in &plan.by_color[color] {
                let m = plan.neighbor_mean(&u.values, idx);
                let old = u.values[idx];
                u.values[idx] = m;
                delta = delta.max((m - old).abs());
            }
        }
        if delta < rel_tol * scale {
            break;
        }
    }
    Ok(u)
}

fn init_from_boundary(p: &Problem) -> ScalarField {
    let mut u = ScalarField::zeros(p.spec.clone());
    u.boundary_mask = p.boundary_data.boundary_mask.clone();
    for (i, (&m, &v)) in u
        .boundary_mask
        .iter()
        .zip(&p.boundary_data.values)
        .enumerate()
    {
        if m {
            u.values[i] = v;
        }
    }
    u
}

/// Precomputed interior nodes split by red-black parity, with neighbor strides.
struct SweepPlan {
    by_color: [Vec<usize>; 2],
    strides: Vec<usize>,
    inv_count: f64,
}

impl SweepPlan {
    fn new(spec: &GridSpec, mask: &[bool]) -> Self {
        let mut by_color = [Vec::new(), Vec::new()];
        for idx in 0..spec.node_count() {
            if mask[idx] {
                continue;
            }
            let parity: usize = spec.index_to_multi(idx).iter().sum::<usize>() % 2;
            by_color[parity].push(idx);
        }
        SweepPlan {
            by_color,
            strides: spec.strides(),
            inv_count: 1.0 / (2.0 * spec.dim() as f64),
        }
    }

    #[inline]
    fn neighbor_mean(&self, values: &[f64], idx: usize) -> f64 {
        let mut acc = 0.0;
        for &s in &self.strides {
            acc += values[idx - s] + values[idx + s];
        }
        acc * self.inv_count
    }
}

/// Gauss-Seidel sweeps of `nodal_update` in red-black order until the energy
/// stagnates (|dJ| per sweep < energy_tol) or `max_sweeps` is hit.
pub fn minimize(p: &Problem, seed: Seed) -> Result<(ScalarField, SolveReport)> {
    p.validate()?;
    let mut u = match seed {
        Seed::HarmonicExtension => harmonic_extension(p)?,
        Seed::Zero => init_from_boundary(p),
        Seed::Field(f) => {
            if f.spec != p.spec {
                return Err(Error::SpecMismatch);
            }
            let mut f = f;
            f.boundary_mask = p.boundary_data.boundary_mask.clone();
            for (i, &m) in f.boundary_mask.iter().enumerate() {
                if m {
                    f.values[i] = p.boundary_data.values[i];
                }
            }
            f
        }
    };
    // truncation keeps u >= 0; valid because the boundary data is nonnegative
    for v in u.values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    let plan = SweepPlan::new(&p.spec, &u.boundary_mask);
    let dim = p.spec.dim();
    let h = p.spec.h;
    let mut history = vec![energy(&u, &p.q)?];
    let mut sweeps = 0;
    for sweep in 1..=p.max_sweeps {
        for color in 0..2 {
            for &idx in &plan.by_color[color] {
                let m = plan.neighbor_mean(&u.values, idx);
                u.values[idx] = nodal_update(m, p.q.values[idx], h, dim);
            }
        }
        let e = energy(&u, &p.q)?;
        if !e.is_finite() {
            return Err(Error::Divergence { sweep });
        }
        history.push(e);
        sweeps = sweep;
        let de = history[history.len() - 2] - e;
        if de.abs() < p.energy_tol {
            break;
        }
    }

    let fb = free_boundary_points(&u);
    let nondeg = if fb.is_empty() {
        None
    } else {
        nondegeneracy_audit(&u).ok()
    };
    let report = SolveReport {
        final_energy: *history.last().unwrap(),
        sweeps_used: sweeps,
        energy_history: history,
        harmonic_residual: harmonic_residual(&u),
        nondegeneracy: nondeg,
    };
    Ok((u, report))
}

/// Max over interior nodes strictly inside {u > 0} (all stencil neighbors
/// positive) of |discrete Laplacian| * h^2.
pub fn harmonic_residual(u: &ScalarField) -> f64 {
    let spec = &u.spec;
    let strides = spec.strides();
    let nodes = spec.nodes_per_axis();
    let two_n = 2.0 * spec.dim() as f64;
    let mut worst = 0.0f64;
    'node: for idx in 0..spec.node_count() {
        if u.values[idx] <= 0.0 {
            continue;
        }
        let multi = spec.index_to_multi(idx);
        let mut acc = 0.0;
        for d in 0..spec.dim() {
            if multi[d] == 0 || multi[d] + 1 == nodes[d] {
                continue 'node;
            }
            let lo = u.values[idx - strides[d]];
            let hi = u.values[idx + strides[d]];
            if lo <= 0.0 || hi <= 0.0 {
                continue 'node;
            }
            acc += lo + hi;
        }
        worst = worst.max((acc - two_n * u.values[idx]).abs());
    }
    worst
}

/// Two-sided nondegeneracy ratios u(y)/d(y, free boundary) over nodes in
/// {u > 0} at depth >= 4h.
pub fn nondegeneracy_audit(u: &ScalarField) -> Result<(f64, f64)> {
    let fb = free_boundary_points(u);
    if fb.is_empty() {
        return Err(Error::EmptyFreeBoundary);
    }
    let spec = &u.spec;
    let depth = 4.0 * spec.h;
    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    let mut seen = false;
    for idx in 0..spec.node_count() {
        if u.values[idx] <= 0.0 {
            continue;
        }
        let p = spec.node_coord(idx);
        let d = fb
            .iter()
            .map(|q| geom::dist_sq(&p, q))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        if d >= depth {
            let ratio = u.values[idx] / d;
            lower = lower.min(ratio);
            upper = upper.max(ratio);
            seen = true;
        }
    }
    if !seen {
        return Err(Error::EmptyInput { what: "no positive nodes at depth >= 4h" });
    }
    Ok((lower, upper))
}

/// Max gradient magnitude over interior nodes (Lipschitz audit).
pub fn max_gradient(u: &ScalarField) -> f64 {
    (0..u.spec.node_count())
        .filter_map(|i| gradient_sq(u, i).ok())
        .fold(0.0f64, f64::max)
        .sqrt()
}

/// Named generators for boundary data and synthetic fields.
pub mod generators {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Boundary data described by name + parameters (JSON-friendly).
    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    pub enum BoundaryKind {
        /// q0 * max(<x, normal> - offset, 0)
        HalfPlane {
            q0: f64,
            normal: Vec<f64>,
            #[serde(default)]
            offset: f64,
        },
        Constant { value: f64 },
        /// Sum of a few random piecewise-linear cones a_j max(<x - c_j, v_j>, 0);
        /// nonnegative by construction, generically produces a free boundary.
        Cones {
            seed: u64,
            count: usize,
            amplitude: f64,
        },
    }

    pub fn sample(spec: &GridSpec, kind: &BoundaryKind) -> ScalarField {
        match kind {
            BoundaryKind::HalfPlane { q0, normal, offset } => {
                let nn = geom::norm(normal).max(1e-300);
                let unit: Vec<f64> = normal.iter().map(|x| x / nn).collect();
                let (q0, offset) = (*q0, *offset);
                ScalarField::from_fn(spec.clone(), move |x| {
                    q0 * (geom::dot(x, &unit) - offset).max(0.0)
                })
            }
            BoundaryKind::Constant { value } => {
                let v = *value;
                ScalarField::from_fn(spec.clone(), move |_| v)
            }
            BoundaryKind::Cones { seed, count, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = spec.dim();
                let mut cones = Vec::with_capacity(*count);
                for _ in 0..*count {
                    let c: Vec<f64> = (0..n)
                        .map(|d| {
                            spec.origin[d]
                                + spec.extent[d] * (0.2 + 0.6 * rng.gen::<f64>())
                        })
                        .collect();
                    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let nv = geom::norm(&v).max(1e-9);
                    v.iter_mut().for_each(|x| *x /= nv);
                    let a = amplitude * rng.gen_range(0.5..1.5);
                    cones.push((c, v, a));
                }
                ScalarField::from_fn(spec.clone(), move |x| {
                    cones
                        .iter()
                        .map(|(c, v, a)| a * geom::dot(&geom::sub(x, c), v).max(0.0))
                        .sum()
                })
            }
        }
    }
}
