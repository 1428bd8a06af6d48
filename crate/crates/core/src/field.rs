//! Grid-sampled scalar fields and discrete calculus.
//!
//! Conventions: nodes sit at `origin + i*h` per axis (node-centered sampling),
//! values are stored row-major with the first axis slowest, and ball
//! membership is by node-center inclusion `|node - center| < r`. Sphere
//! quadrature uses a shell of thickness exactly `h`.

use crate::error::{Error, Result};
use crate::geom;
use serde::{Deserialize, Serialize};

/// Ball quadrature needs `r >= 2h`.
pub const BALL_MIN_SPACINGS: f64 = 2.0;

/// Regular grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub extent: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
    pub h: f64,
}

impl GridSpec {
    /// Build from origin/extent/cells; spacing must be uniform across axes.
    pub fn new(origin: Vec<f64>, extent: Vec<f64>, cells_per_axis: Vec<usize>) -> Result<Self> {
        if origin.is_empty() || origin.len() != extent.len() || origin.len() != cells_per_axis.len()
        {
            return Err(Error::InvalidParameter(
                "origin, extent, cells_per_axis must share a positive dimension".into(),
            ));
        }
        if cells_per_axis.iter().any(|&c| c == 0) {
            return Err(Error::InvalidParameter("cells_per_axis must be positive".into()));
        }
        let h = extent[0] / cells_per_axis[0] as f64;
        if !(h > 0.0) {
            return Err(Error::InvalidParameter("spacing must be positive".into()));
        }
        for i in 0..origin.len() {
            let hi = extent[i] / cells_per_axis[i] as f64;
            if (hi - h).abs() > 1e-9 * h {
                return Err(Error::InvalidParameter(format!(
                    "non-uniform spacing: axis {i} gives h = {hi}, axis 0 gives h = {h}"
                )));
            }
        }
        Ok(GridSpec { origin, extent, cells_per_axis, h })
    }

    /// Build from origin/cells/spacing, deriving the extent exactly.
    pub fn with_spacing(origin: Vec<f64>, cells_per_axis: Vec<usize>, h: f64) -> Self {
        let extent = cells_per_axis.iter().map(|&c| c as f64 * h).collect();
        GridSpec { origin, extent, cells_per_axis, h }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells_per_axis.iter().map(|&c| c + 1).collect()
    }

    pub fn node_count(&self) -> usize {
        self.cells_per_axis.iter().map(|&c| c + 1).product()
    }

    /// Row-major strides, first axis slowest.
    pub fn strides(&self) -> Vec<usize> {
        let nodes = self.nodes_per_axis();
        let n = nodes.len();
        let mut s = vec![1usize; n];
        for d in (0..n.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * nodes[d + 1];
        }
        s
    }

    pub fn index_to_multi(&self, idx: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut rem = idx;
        strides
            .iter()
            .map(|&s| {
                let q = rem / s;
                rem %= s;
                q
            })
            .collect()
    }

    pub fn multi_to_index(&self, multi: &[usize]) -> usize {
        self.strides().iter().zip(multi).map(|(s, m)| s * m).sum()
    }

    pub fn node_coord(&self, idx: usize) -> Vec<f64> {
        self.index_to_multi(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&m, &o)| o + m as f64 * self.h)
            .collect()
    }

    /// True if the node touches any grid face.
    pub fn is_face_node(&self, idx: usize) -> bool {
        let nodes = self.nodes_per_axis();
        self.index_to_multi(idx)
            .iter()
            .zip(&nodes)
            .any(|(&m, &n)| m == 0 || m + 1 == n)
    }

    /// B_r(center) contained in the box, with the box inset by `inset`.
    pub fn contains_ball_inset(&self, center: &[f64], r: f64, inset: f64) -> bool {
        let tol = 1e-9 * self.h;
        center.iter().enumerate().all(|(i, &c)| {
            c - r >= self.origin[i] + inset - tol
                && c + r <= self.origin[i] + self.extent[i] - inset + tol
        })
    }

    pub fn contains_ball(&self, center: &[f64], r: f64) -> bool {
        self.contains_ball_inset(center, r, 0.0)
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.contains_ball(p, 0.0)
    }

    /// Distance from `p` to the boundary of the grid box.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(i, &c)| {
                (c - self.origin[i]).min(self.origin[i] + self.extent[i] - c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of nodes with `|node - center| < r`, ascending.
    pub fn nodes_in_ball(&self, center: &[f64], r: f64) -> Vec<usize> {
        self.nodes_in_annulus(center, -1.0, r)
    }

    /// Indices of nodes with `lo <= |node - center| < hi`, ascending.
    /// Pass a negative `lo` for a full ball.
    pub fn nodes_in_annulus(&self, center: &[f64], lo: f64, hi: f64) -> Vec<usize> {
        let n = self.dim();
        let nodes = self.nodes_per_axis();
        let strides = self.strides();
        let mut lo_i = vec![0usize; n];
        let mut hi_i = vec![0usize; n];
        for d in 0..n {
            let a = ((center[d] - hi - self.origin[d]) / self.h).ceil();
            let b = ((center[d] + hi - self.origin[d]) / self.h).floor();
            if b < 0.0 || a > (nodes[d] - 1) as f64 {
                return Vec::new();
            }
            lo_i[d] = a.max(0.0) as usize;
            hi_i[d] = (b as usize).min(nodes[d] - 1);
        }
        let lo_sq = if lo < 0.0 { -1.0 } else { lo * lo };
        let hi_sq = hi * hi;
        let mut out = Vec::new();
        let mut multi = lo_i.clone();
        'outer: loop {
            let mut d2 = 0.0;
            for d in 0..n {
                let x = self.origin[d] + multi[d] as f64 * self.h - center[d];
                d2 += x * x;
            }
            if d2 < hi_sq && d2 >= lo_sq {
                out.push(strides.iter().zip(&multi).map(|(s, m)| s * m).sum());
            }
            // odometer, last axis fastest, so flat indices come out ascending
            let mut d = n;
            loop {
                if d == 0 {
                    break 'outer;
                }
                d -= 1;
                if multi[d] < hi_i[d] {
                    multi[d] += 1;
                    for dd in (d + 1)..n {
                        multi[dd] = lo_i[dd];
                    }
                    break;
                }
            }
        }
        out
    }

    /// Shell of thickness h around radius r: `r - h/2 <= |node - center| < r + h/2`.
    pub fn nodes_in_shell(&self, center: &[f64], r: f64) -> Vec<usize> {
        self.nodes_in_annulus(center, (r - 0.5 * self.h).max(0.0), r + 0.5 * self.h)
    }
}

/// Grid-sampled candidate solution. Values scale like length (u behaves like
/// a distance to the free boundary). Boundary-mask nodes are Dirichlet data
/// and are never mutated by solvers.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        let count = spec.node_count();
        let mask = face_mask(&spec);
        ScalarField { spec, values: vec![0.0; count], boundary_mask: mask }
    }

    /// Sample `f` at every node; the box faces form the default Dirichlet set.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let count = spec.node_count();
        let values = (0..count).map(|i| f(&spec.node_coord(i))).collect();
        let mask = face_mask(&spec);
        ScalarField { spec, values, boundary_mask: mask }
    }

    /// Multilinear interpolation at `p`; coordinates are clamped to the box.
    pub fn interpolate(&self, p: &[f64]) -> f64 {
        let n = self.spec.dim();
        let strides = self.spec.strides();
        let nodes = self.spec.nodes_per_axis();
        let mut cell = vec![0usize; n];
        let mut frac = vec![0.0f64; n];
        for d in 0..n {
            let t = (p[d] - self.spec.origin[d]) / self.spec.h;
            let i = t.floor().clamp(0.0, (nodes[d] - 2) as f64);
            cell[d] = i as usize;
            frac[d] = (t - i).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for d in 0..n {
                let up = (corner >> d) & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                idx += strides[d] * (cell[d] + up as usize);
            }
            acc += w * self.values[idx];
        }
        acc
    }
}

fn face_mask(spec: &GridSpec) -> Vec<bool> {
    let nodes = spec.nodes_per_axis();
    let n = spec.dim();
    let strides = spec.strides();
    let mut mask = vec![false; spec.node_count()];
    let mut multi = vec![0usize; n];
    for slot in mask.iter_mut() {
        *slot = multi.iter().zip(&nodes).any(|(&m, &nn)| m == 0 || m + 1 == nn);
        let mut d = n;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            if multi[d] + 1 < nodes[d] {
                multi[d] += 1;
                for dd in (d + 1)..n {
                    multi[dd] = 0;
                }
                break;
            }
        }
    }
    let _ = strides;
    mask
}

/// Positive weight field Q with its a priori bounds.
#[derive(Debug, Clone)]
pub struct QField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub lambda_bound: f64,
    pub holder_exponent: f64,
    pub holder_seminorm: f64,
}

impl QField {
    pub fn constant(spec: GridSpec, q0: f64) -> Result<Self> {
        if !(q0 > 0.0) {
            return Err(Error::InvalidParameter("Q must be positive".into()));
        }
        let count = spec.node_count();
        Ok(QField {
            spec,
            values: vec![q0; count],
            lambda_bound: q0.max(1.0 / q0),
            holder_exponent: 1.0,
            holder_seminorm: 0.0,
        })
    }

    /// Sample a positive function; the Holder seminorm is estimated from
    /// axis-adjacent node pairs (a lower bound, recorded as such).
    pub fn from_fn(spec: GridSpec, alpha: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter("holder exponent must lie in (0,1]".into()));
        }
        let count = spec.node_count();
        let values: Vec<f64> = (0..count).map(|i| f(&spec.node_coord(i))).collect();
        let mut vmin = f64::INFINITY;
        let mut vmax = 0.0f64;
        for &v in &values {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter("Q must be positive".into()));
            }
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let strides = spec.strides();
        let nodes = spec.nodes_per_axis();
        let mut semi = 0.0f64;
        let denom = spec.h.powf(alpha);
        for idx in 0..count {
            let multi = spec.index_to_multi(idx);
            for d in 0..spec.dim() {
                if multi[d] + 1 < nodes[d] {
                    let diff = (values[idx + strides[d]] - values[idx]).abs();
                    semi = semi.max(diff / denom);
                }
            }
        }
        Ok(QField {
            spec,
            values,
            lambda_bound: vmax.max(1.0 / vmin),
            holder_exponent: alpha,
            holder_seminorm: semi,
        })
    }

    pub fn value_at(&self, p: &[f64]) -> f64 {
        let probe = ScalarField {
            spec: self.spec.clone(),
            values: self.values.clone(),
            boundary_mask: Vec::new(),
        };
        probe.interpolate(p)
    }

    pub fn validate(&self) -> Result<()> {
        let lam = self.lambda_bound;
        if !(lam >= 1.0) {
            return Err(Error::InvalidParameter("lambda bound must be >= 1".into()));
        }
        for &v in &self.values {
            if v < 1.0 / lam - 1e-12 || v > lam + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "Q value {v} outside [1/{lam}, {lam}]"
                )));
            }
        }
        Ok(())
    }
}

/// Central-difference |Du|^2 at an interior node.
pub fn gradient_sq(u: &ScalarField, node: usize) -> Result<f64> {
    let spec = &u.spec;
    let multi = spec.index_to_multi(node);
    let nodes = spec.nodes_per_axis();
    let strides = spec.strides();
    if multi.iter().zip(&nodes).any(|(&m, &n)| m == 0 || m + 1 == n) {
        return Err(Error::InteriorRequired { node });
    }
    let inv = 1.0 / (2.0 * spec.h);
    let mut acc = 0.0;
    for d in 0..spec.dim() {
        let g = (u.values[node + strides[d]] - u.values[node - strides[d]]) * inv;
        acc += g * g;
    }
    Ok(acc)
}

/// |Du|^2 at every node; face nodes get 0 (only meaningful away from faces).
pub fn gradient_sq_field(u: &ScalarField) -> Vec<f64> {
    (0..u.spec.node_count())
        .map(|i| gradient_sq(u, i).unwrap_or(0.0))
        .collect()
}

/// Node-counting quadrature of `f` over B_r(center): sum of f * h^n over
/// nodes with |node - center| < r.
pub fn ball_integral(spec: &GridSpec, f: &[f64], center: &[f64], r: f64) -> Result<f64> {
    if f.len() != spec.node_count() {
        return Err(Error::SpecMismatch);
    }
    check_ball(spec, center, r, BALL_MIN_SPACINGS)?;
    let hn = spec.h.powi(spec.dim() as i32);
    Ok(spec
        .nodes_in_ball(center, r)
        .iter()
        .map(|&i| f[i])
        .sum::<f64>()
        * hn)
}

/// Shell quadrature of u^2 over the sphere of radius r: sum of u^2 * h^{n-1}
/// over the shell `r - h/2 <= |node - center| < r + h/2`.
pub fn sphere_integral_sq(u: &ScalarField, center: &[f64], r: f64) -> Result<f64> {
    let spec = &u.spec;
    check_ball(spec, center, r + 0.5 * spec.h, BALL_MIN_SPACINGS)?;
    let hn1 = spec.h.powi(spec.dim() as i32 - 1);
    Ok(spec
        .nodes_in_shell(center, r)
        .iter()
        .map(|&i| u.values[i] * u.values[i])
        .sum::<f64>()
        * hn1)
}

fn check_ball(spec: &GridSpec, center: &[f64], r: f64, min_spacings: f64) -> Result<()> {
    if center.len() != spec.dim() {
        return Err(Error::SpecMismatch);
    }
    let floor = min_spacings * spec.h;
    if r < floor * (1.0 - 1e-12) {
        return Err(Error::UnderResolved { radius: r, min: floor, factor: min_spacings });
    }
    if !spec.contains_ball(center, r) {
        return Err(Error::BallExitsGrid { center: center.to_vec(), radius: r });
    }
    Ok(())
}

/// Graph dilation u_{y,r}(x) = u(y + r x) / r resampled onto `out_spec` by
/// multilinear interpolation.
pub fn rescale(u: &ScalarField, y: &[f64], r: f64, out_spec: &GridSpec) -> Result<ScalarField> {
    let spec = &u.spec;
    if y.len() != spec.dim() || out_spec.dim() != spec.dim() {
        return Err(Error::SpecMismatch);
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("dilation radius must be positive".into()));
    }
    let tol = 1e-9 * spec.h;
    for d in 0..spec.dim() {
        let lo = y[d] + r * out_spec.origin[d];
        let hi = y[d] + r * (out_spec.origin[d] + out_spec.extent[d]);
        if lo < spec.origin[d] - tol || hi > spec.origin[d] + spec.extent[d] + tol {
            return Err(Error::ImageExitsBox);
        }
    }
    let mut out = ScalarField::zeros(out_spec.clone());
    let inv_r = 1.0 / r;
    for idx in 0..out_spec.node_count() {
        let x = out_spec.node_coord(idx);
        let src: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi + r * xi).collect();
        out.values[idx] = u.interpolate(&src) * inv_r;
    }
    Ok(out)
}

/// Midpoints of grid edges whose endpoint values straddle {u > 0} and {u = 0},
/// in lexicographic (node index, axis) order.
pub fn free_boundary_points(u: &ScalarField) -> Vec<Vec<f64>> {
    let spec = &u.spec;
    let nodes = spec.nodes_per_axis();
    let strides = spec.strides();
    let n = spec.dim();
    let mut out = Vec::new();
    for idx in 0..spec.node_count() {
        let multi = spec.index_to_multi(idx);
        let a = u.values[idx] > 0.0;
        for d in 0..n {
            if multi[d] + 1 < nodes[d] {
                let b = u.values[idx + strides[d]] > 0.0;
                if a != b {
                    let mut p = spec.node_coord(idx);
                    p[d] += 0.5 * spec.h;
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Symmetric Hausdorff distance between two nonempty finite point sets.
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput { what: "hausdorff_distance needs nonempty sets" });
    }
    let one_sided = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| geom::dist_sq(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    Ok(one_sided(a, b).max(one_sided(b, a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn square_grid(half: f64, cells: usize) -> GridSpec {
        GridSpec::new(vec![-half, -half], vec![2.0 * half, 2.0 * half], vec![cells, cells]).unwrap()
    }

    #[test]
    fn spec_rejects_nonuniform() {
        let err = GridSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![10, 10]);
        assert!(err.is_err());
    }

    #[test]
    fn index_roundtrip() {
        let spec = GridSpec::with_spacing(vec![0.0, 0.0, 0.0], vec![3, 4, 5], 0.25);
        for idx in 0..spec.node_count() {
            assert_eq!(spec.multi_to_index(&spec.index_to_multi(idx)), idx);
        }
    }

    #[test]
    fn gradient_constant_zero() {
        let spec = square_grid(1.0, 16);
        let u = ScalarField::from_fn(spec.clone(), |_| 0.0);
        let center = spec.multi_to_index(&[8, 8]);
        assert_eq!(gradient_sq(&u, center).unwrap(), 0.0);
    }

    #[test]
    fn gradient_linear_exact() {
        let spec = square_grid(1.0, 16);
        let u = ScalarField::from_fn(spec.clone(), |x| x[0]);
        let center = spec.multi_to_index(&[8, 8]);
        assert_relative_eq!(gradient_sq(&u, center).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_half_plane_positive_side() {
        // q0 * max(x . e1, 0): nodes whose neighbors all lie in {u > 0} see the
        // full slope, hand-checkable on the stencil.
        let q0 = 1.7;
        let spec = square_grid(1.0, 16);
        let u = ScalarField::from_fn(spec.clone(), |x| q0 * x[0].max(0.0));
        let node = spec.multi_to_index(&[12, 8]); // x0 = 0.5, neighbors positive
        assert_relative_eq!(gradient_sq(&u, node).unwrap(), q0 * q0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_boundary_errors() {
        let spec = square_grid(1.0, 8);
        let u = ScalarField::zeros(spec.clone());
        let edge = spec.multi_to_index(&[0, 3]);
        assert!(matches!(gradient_sq(&u, edge), Err(Error::InteriorRequired { .. })));
    }

    #[test]
    fn ball_integral_disk_area() {
        let spec = square_grid(2.0, 1024); // h = 1/256
        let ones = vec![1.0; spec.node_count()];
        let v = ball_integral(&spec, &ones, &[0.0, 0.0], 1.0).unwrap();
        let rel = (v - PI).abs() / PI;
        assert!(rel < 2.0 * spec.h / 1.0, "rel err {rel}");
    }

    #[test]
    fn ball_integral_zero_field() {
        let spec = square_grid(2.0, 64);
        let zeros = vec![0.0; spec.node_count()];
        assert_eq!(ball_integral(&spec, &zeros, &[0.0, 0.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn ball_integral_half_disk() {
        let spec = square_grid(2.0, 512);
        let f: Vec<f64> = (0..spec.node_count())
            .map(|i| if spec.node_coord(i)[0] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let v = ball_integral(&spec, &f, &[0.0, 0.0], 1.0).unwrap();
        let rel = (v - PI / 2.0).abs() / (PI / 2.0);
        assert!(rel < 3.0 * spec.h, "rel err {rel}");
    }

    #[test]
    fn ball_integral_errors() {
        let spec = square_grid(1.0, 64);
        let ones = vec![1.0; spec.node_count()];
        assert!(matches!(
            ball_integral(&spec, &ones, &[0.9, 0.0], 0.5),
            Err(Error::BallExitsGrid { .. })
        ));
        assert!(matches!(
            ball_integral(&spec, &ones, &[0.0, 0.0], 0.5 * spec.h),
            Err(Error::UnderResolved { .. })
        ));
    }

    #[test]
    fn ball_quadrature_error_shrinks_on_refinement() {
        // relative error of the unit-disk area, c*h/r behavior
        let mut errs = Vec::new();
        for cells in [256usize, 512, 1024] {
            let spec = square_grid(2.0, cells);
            let ones = vec![1.0; spec.node_count()];
            let v = ball_integral(&spec, &ones, &[0.0, 0.0], 1.0).unwrap();
            errs.push((v - PI).abs() / PI);
        }
        assert!(errs[1] < errs[0], "errors {errs:?}");
        assert!(errs[2] < errs[1], "errors {errs:?}");
    }

    #[test]
    fn sphere_integral_zero_and_circle() {
        let spec = square_grid(2.0, 512); // h = 1/128
        let zero = ScalarField::zeros(spec.clone());
        assert_eq!(sphere_integral_sq(&zero, &[0.0, 0.0], 1.0).unwrap(), 0.0);

        let one = ScalarField::from_fn(spec.clone(), |_| 1.0);
        let v = sphere_integral_sq(&one, &[0.0, 0.0], 1.0).unwrap();
        let rel = (v - 2.0 * PI).abs() / (2.0 * PI);
        assert!(rel < 4.0 * spec.h, "rel err {rel}");
    }

    #[test]
    fn sphere_integral_half_wave() {
        // u = max(x1, 0) on the unit circle integrates to int_0^pi sin^2 = pi/2
        let spec = square_grid(2.0, 512);
        let u = ScalarField::from_fn(spec.clone(), |x| x[1].max(0.0));
        let v = sphere_integral_sq(&u, &[0.0, 0.0], 1.0).unwrap();
        let rel = (v - PI / 2.0).abs() / (PI / 2.0);
        assert!(rel < 4.0 * spec.h, "rel err {rel}");
    }

    #[test]
    fn rescale_identity() {
        let spec = square_grid(1.0, 32);
        let u = ScalarField::from_fn(spec.clone(), |x| x[0] * x[0] + 0.3 * x[1]);
        let v = rescale(&u, &[0.0, 0.0], 1.0, &spec).unwrap();
        for i in 0..u.values.len() {
            assert_relative_eq!(u.values[i], v.values[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn rescale_half_plane_invariant() {
        // 1-homogeneous about any free boundary point, so dilation fixes it
        let spec = square_grid(2.0, 128);
        let out = square_grid(1.0, 64);
        let u = ScalarField::from_fn(spec.clone(), |x| x[0].max(0.0));
        let v = rescale(&u, &[0.0, 0.0], 0.5, &out).unwrap();
        let model = ScalarField::from_fn(out.clone(), |x| x[0].max(0.0));
        let sup = v
            .values
            .iter()
            .zip(&model.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= spec.h, "sup err {sup}");
    }

    #[test]
    fn rescale_quadratic() {
        let spec = square_grid(2.0, 256);
        let out = square_grid(1.0, 64);
        let u = ScalarField::from_fn(spec.clone(), |x| x[0] * x[0] + x[1] * x[1]);
        let v = rescale(&u, &[0.0, 0.0], 0.5, &out).unwrap();
        let sup = (0..out.node_count())
            .map(|i| {
                let x = out.node_coord(i);
                (v.values[i] - 0.5 * (x[0] * x[0] + x[1] * x[1])).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(sup <= spec.h * spec.h * 4.0, "sup err {sup}");
    }

    #[test]
    fn rescale_composition() {
        let spec = square_grid(2.0, 256);
        let mid = square_grid(1.0, 128);
        let out = square_grid(0.5, 64);
        let u = ScalarField::from_fn(spec.clone(), |x| (x[0] - 0.2).max(0.0) + 0.1 * x[1].abs());
        let two_step = rescale(&rescale(&u, &[0.0, 0.0], 0.5, &mid).unwrap(), &[0.0, 0.0], 0.5, &out).unwrap();
        let one_step = rescale(&u, &[0.0, 0.0], 0.25, &out).unwrap();
        let sup = two_step
            .values
            .iter()
            .zip(&one_step.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= 2.0 * spec.h, "sup err {sup}");
    }

    #[test]
    fn rescale_image_check() {
        let spec = square_grid(1.0, 32);
        let u = ScalarField::zeros(spec.clone());
        let out = square_grid(1.0, 32);
        assert!(matches!(
            rescale(&u, &[0.5, 0.0], 1.0, &out),
            Err(Error::ImageExitsBox)
        ));
    }

    #[test]
    fn free_boundary_constant_fields() {
        let spec = square_grid(1.0, 16);
        let one = ScalarField::from_fn(spec.clone(), |_| 1.0);
        assert!(free_boundary_points(&one).is_empty());
        let zero = ScalarField::zeros(spec);
        assert!(free_boundary_points(&zero).is_empty());
    }

    #[test]
    fn free_boundary_half_plane() {
        let spec = square_grid(1.0, 16); // h = 1/8, nodes at multiples of h
        let u = ScalarField::from_fn(spec.clone(), |x| x[0].max(0.0));
        let fb = free_boundary_points(&u);
        assert!(!fb.is_empty());
        // straddling edges run from x0 = 0 (u = 0) to x0 = h (u > 0)
        for p in &fb {
            assert_relative_eq!(p[0], 0.5 * spec.h, epsilon = 1e-12);
        }
        // one point per row of nodes
        assert_eq!(fb.len(), spec.nodes_per_axis()[1]);
    }

    #[test]
    fn hausdorff_examples() {
        let a = vec![vec![0.0, 0.0]];
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        let b = vec![vec![1.0, 0.0]];
        assert_relative_eq!(hausdorff_distance(&a, &b).unwrap(), 1.0);
        let c = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let d = vec![vec![1.0, 0.0]];
        assert_relative_eq!(hausdorff_distance(&c, &d).unwrap(), 1.0);
        assert!(hausdorff_distance(&[], &a).is_err());
    }

    proptest! {
        #[test]
        fn hausdorff_symmetric_nonneg(
            xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8),
            ys in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8),
        ) {
            let a: Vec<Vec<f64>> = xs.iter().map(|&(x, y)| vec![x, y]).collect();
            let b: Vec<Vec<f64>> = ys.iter().map(|&(x, y)| vec![x, y]).collect();
            let dab = hausdorff_distance(&a, &b).unwrap();
            let dba = hausdorff_distance(&b, &a).unwrap();
            prop_assert!((dab - dba).abs() < 1e-12);
            prop_assert!(dab >= 0.0);
            // zero iff equal as sets
            let equal_sets = a.iter().all(|p| b.iter().any(|q| geom::dist(p, q) == 0.0))
                && b.iter().all(|p| a.iter().any(|q| geom::dist(p, q) == 0.0));
            prop_assert_eq!(dab == 0.0, equal_sets);
        }
    }
}
