//! Quantitative symmetry testing and effective stratum membership.
//!
//! A field is k-symmetric when it is 1-homogeneous about a point and
//! translation-invariant along a k-plane. The distance of u from the nearest
//! k-symmetric model in B_r(x) is measured in the dilation-invariant norm
//! `r^{-n-2} int_{B_r} |u - u_model|^2`, and a free boundary point belongs to
//! the effective k-stratum at scale r when u stays eps-far from every
//! (k+1)-symmetric model at every scale in [r, min(1, d(x, box))].
//!
//! The plane search is sampled, not optimized: candidates combine canonical
//! axis planes, the top eigenvector frame of the local free boundary cloud,
//! and a prefix-nested low-discrepancy frame sequence, so enlarging
//! `plane_samples` can only lower the reported distance.

use crate::error::{Error, Result};
use crate::field::{free_boundary_points, GridSpec, ScalarField};
use crate::geom::{self, AffinePlane};
use crate::jones::{second_moment, DiscreteMeasure};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Homogeneous projection needs `r >= 8h`.
pub const MIN_RADIUS_SPACINGS: f64 = 8.0;

/// Default size of the low-discrepancy frame sample.
pub const DEFAULT_PLANE_SAMPLES: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryQuery {
    pub center: Vec<f64>,
    pub r: f64,
    /// Symmetry order to test, 0..=n (n means the zero model).
    pub k: usize,
    pub eps: f64,
    pub plane_samples: usize,
}

#[derive(Debug, Clone)]
pub struct SymmetryResult {
    /// Normalized L2 deviation `r^{-n-2} int_{B_r} |u - model|^2`.
    pub distance: f64,
    pub best_plane: AffinePlane,
    /// The best k-symmetric approximant, sampled on u's grid inside B_r.
    pub model: ScalarField,
}

/// L2 projection of u onto fields 1-homogeneous about x0, over B_r(x0).
///
/// Per direction theta (one per shell node at radius r) the radial profile
/// `g(theta) = ((n+2)/r^{n+2}) int_0^r u(x0 + s theta) s^n ds` minimizes
/// `int_0^r (u - g s)^2 s^{n-1} ds`; directions between shell samples are
/// filled by nearest neighbor on the sphere.
pub fn homogeneous_projection(u: &ScalarField, x0: &[f64], r: f64) -> Result<ScalarField> {
    let spec = &u.spec;
    let floor = MIN_RADIUS_SPACINGS * spec.h;
    if r < floor * (1.0 - 1e-12) {
        return Err(Error::UnderResolved { radius: r, min: floor, factor: MIN_RADIUS_SPACINGS });
    }
    if !spec.contains_ball(x0, r) {
        return Err(Error::BallExitsGrid { center: x0.to_vec(), radius: r });
    }
    let n = spec.dim();
    let shell = spec.nodes_in_shell(x0, r);
    if shell.is_empty() {
        return Err(Error::EmptyInput { what: "no shell nodes for projection" });
    }
    // directions and their radial least-squares coefficients
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(shell.len());
    let mut coeffs: Vec<f64> = Vec::with_capacity(shell.len());
    let mut shell_lookup: HashMap<usize, usize> = HashMap::with_capacity(shell.len());
    let steps = (2.0 * r / spec.h).ceil() as usize;
    let ds = r / steps as f64;
    let denom = r.powi(n as i32 + 2) / (n as f64 + 2.0);
    for (slot, &idx) in shell.iter().enumerate() {
        let p = spec.node_coord(idx);
        let d = geom::sub(&p, x0);
        let len = geom::norm(&d);
        if len < 0.5 * spec.h {
            continue;
        }
        let dir: Vec<f64> = d.iter().map(|c| c / len).collect();
        let mut num = 0.0;
        for j in 0..steps {
            let s = (j as f64 + 0.5) * ds;
            let pt = geom::scaled_add(x0, s, &dir);
            num += u.interpolate(&pt) * s.powi(n as i32) * ds;
        }
        shell_lookup.insert(idx, dirs.len());
        dirs.push(dir);
        coeffs.push(num / denom);
        let _ = slot;
    }
    if dirs.is_empty() {
        return Err(Error::EmptyInput { what: "no usable shell directions" });
    }

    // nearest shell direction via a local window around the node closest to
    // x0 + r*dir, widening on misses; linear scan as a last resort
    let nodes = spec.nodes_per_axis();
    let strides = spec.strides();
    let nearest_dir = |dir: &[f64]| -> usize {
        let target = geom::scaled_add(x0, r, dir);
        let mut anchor = vec![0usize; n];
        for d in 0..n {
            let t = ((target[d] - spec.origin[d]) / spec.h).round();
            anchor[d] = t.clamp(0.0, (nodes[d] - 1) as f64) as usize;
        }
        for window in [1isize, 2, 4] {
            let mut best: Option<(f64, usize)> = None;
            let mut offset = vec![-window; n];
            'scan: loop {
                let mut multi = Vec::with_capacity(n);
                let mut ok = true;
                for d in 0..n {
                    let m = anchor[d] as isize + offset[d];
                    if m < 0 || m as usize >= nodes[d] {
                        ok = false;
                        break;
                    }
                    multi.push(m as usize);
                }
                if ok {
                    let idx: usize = strides.iter().zip(&multi).map(|(s, m)| s * m).sum();
                    if let Some(&slot) = shell_lookup.get(&idx) {
                        let cos = geom::dot(dir, &dirs[slot]);
                        if best.map(|(c, _)| cos > c).unwrap_or(true) {
                            best = Some((cos, slot));
                        }
                    }
                }
                let mut d = n;
                loop {
                    if d == 0 {
                        break 'scan;
                    }
                    d -= 1;
                    if offset[d] < window {
                        offset[d] += 1;
                        for dd in (d + 1)..n {
                            offset[dd] = -window;
                        }
                        break;
                    }
                }
            }
            if let Some((_, slot)) = best {
                return slot;
            }
        }
        // fallback: full scan
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (slot, d) in dirs.iter().enumerate() {
            let cos = geom::dot(dir, d);
            if cos > best.0 {
                best = (cos, slot);
            }
        }
        best.1
    };

    let mut out = ScalarField::zeros(spec.clone());
    out.boundary_mask = u.boundary_mask.clone();
    for idx in spec.nodes_in_ball(x0, r) {
        let p = spec.node_coord(idx);
        let d = geom::sub(&p, x0);
        let len = geom::norm(&d);
        if len < 1e-12 {
            continue;
        }
        let dir: Vec<f64> = d.iter().map(|c| c / len).collect();
        out.values[idx] = len * coeffs[nearest_dir(&dir)];
    }
    Ok(out)
}

/// Average u along the plane directions within B_r(center), sampled at
/// spacing h along each direction.
fn plane_average(u: &ScalarField, center: &[f64], r: f64, frame: &[Vec<f64>]) -> ScalarField {
    let spec = &u.spec;
    let k = frame.len();
    if k == 0 {
        return u.clone();
    }
    let mut out = ScalarField::zeros(spec.clone());
    out.boundary_mask = u.boundary_mask.clone();
    let steps = (2.0 * r / spec.h).ceil() as isize;
    let r_sq = r * r;
    for idx in spec.nodes_in_ball(center, r) {
        let base = spec.node_coord(idx);
        let mut acc = 0.0;
        let mut count = 0usize;
        let mut t = vec![-steps; k];
        'grid: loop {
            let mut pt = base.clone();
            for (i, &ti) in t.iter().enumerate() {
                let step = ti as f64 * spec.h;
                for d in 0..spec.dim() {
                    pt[d] += step * frame[i][d];
                }
            }
            if geom::dist_sq(&pt, center) < r_sq && spec.contains_point(&pt) {
                acc += u.interpolate(&pt);
                count += 1;
            }
            let mut d = k;
            loop {
                if d == 0 {
                    break 'grid;
                }
                d -= 1;
                if t[d] < steps {
                    t[d] += 1;
                    for dd in (d + 1)..k {
                        t[dd] = -steps;
                    }
                    break;
                }
            }
        }
        out.values[idx] = if count > 0 { acc / count as f64 } else { u.values[idx] };
    }
    out
}

fn normalized_l2_distance(u: &ScalarField, model: &ScalarField, center: &[f64], r: f64) -> f64 {
    let spec = &u.spec;
    let n = spec.dim() as i32;
    let hn = spec.h.powi(n);
    let sum: f64 = spec
        .nodes_in_ball(center, r)
        .iter()
        .map(|&i| {
            let d = u.values[i] - model.values[i];
            d * d
        })
        .sum();
    sum * hn / r.powi(n + 2)
}

/// Minimal normalized distance from u to a k-symmetric model in B_r, over the
/// sampled plane candidates. Homogeneity is anchored at the query center.
pub fn symmetry_distance(u: &ScalarField, q: &SymmetryQuery) -> Result<SymmetryResult> {
    let spec = &u.spec;
    let n = spec.dim();
    if q.k > n {
        return Err(Error::InvalidParameter(format!(
            "symmetry order {} exceeds dimension {n}",
            q.k
        )));
    }
    if !(q.eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }

    // order n: the only n-symmetric field is 0
    if q.k == n {
        let model = ScalarField::zeros(spec.clone());
        let distance = normalized_l2_distance(u, &model, &q.center, q.r);
        let frame = geom::complete_frame(&[], n);
        return Ok(SymmetryResult {
            distance,
            best_plane: AffinePlane { base: q.center.clone(), basis: frame },
            model,
        });
    }

    // order 0: no translation directions, just project
    if q.k == 0 {
        let model = homogeneous_projection(u, &q.center, q.r)?;
        let distance = normalized_l2_distance(u, &model, &q.center, q.r);
        return Ok(SymmetryResult {
            distance,
            best_plane: AffinePlane::point(q.center.clone()),
            model,
        });
    }

    let mut candidates: Vec<Vec<Vec<f64>>> = Vec::new();
    // canonical axis frames
    for combo in geom::combinations(n, q.k) {
        let frame: Vec<Vec<f64>> = combo
            .iter()
            .map(|&a| {
                let mut e = vec![0.0; n];
                e[a] = 1.0;
                e
            })
            .collect();
        candidates.push(frame);
    }
    // free boundary second-moment frame: the top-k directions of the local
    // interface cloud are the natural invariance candidates
    let fb = free_boundary_points(u);
    let local: Vec<Vec<f64>> = fb
        .into_iter()
        .filter(|p| geom::dist_sq(p, &q.center) < q.r * q.r)
        .collect();
    if local.len() > q.k {
        if let Ok(mu) = DiscreteMeasure::counting(local) {
            if let Ok((_, m)) = second_moment(&mu, &q.center, q.r) {
                let (_, vecs) = geom::jacobi_eigen(&m);
                candidates.push(vecs.into_iter().take(q.k).collect());
            }
        }
    }
    // low-discrepancy frames (prefix-nested in plane_samples)
    candidates.extend(geom::orthonormal_frames(n, q.k, q.plane_samples));

    let mut best: Option<SymmetryResult> = None;
    for frame in candidates {
        if frame.len() != q.k {
            continue;
        }
        let averaged = plane_average(u, &q.center, q.r, &frame);
        let model = homogeneous_projection(&averaged, &q.center, q.r)?;
        let distance = normalized_l2_distance(u, &model, &q.center, q.r);
        if best.as_ref().map(|b| distance < b.distance).unwrap_or(true) {
            best = Some(SymmetryResult {
                distance,
                best_plane: AffinePlane { base: q.center.clone(), basis: frame },
                model,
            });
        }
    }
    Ok(best.expect("candidate list is never empty"))
}

/// Minimum of [`symmetry_distance`] over the query center perturbed by up to
/// 2h along each axis. The homogeneity point of the model is otherwise pinned
/// to the query center; this sweep bounds how much that pinning costs without
/// attempting the full search over interior points.
pub fn symmetry_distance_center_sweep(
    u: &ScalarField,
    q: &SymmetryQuery,
) -> Result<SymmetryResult> {
    let h = u.spec.h;
    let n = u.spec.dim();
    let mut best: Option<SymmetryResult> = None;
    let mut offsets: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for d in 0..n {
        for sign in [-1.0, 1.0] {
            let mut o = vec![0.0; n];
            o[d] = sign * 2.0 * h;
            offsets.push(o);
        }
    }
    for o in offsets {
        let center: Vec<f64> = q.center.iter().zip(&o).map(|(c, d)| c + d).collect();
        if !u.spec.contains_ball(&center, q.r) {
            continue;
        }
        let res = symmetry_distance(u, &SymmetryQuery { center, ..q.clone() })?;
        if best.as_ref().map(|b| res.distance < b.distance).unwrap_or(true) {
            best = Some(res);
        }
    }
    best.ok_or(Error::BallExitsGrid { center: q.center.clone(), radius: q.r })
}

/// Effective stratum membership: true when u is NOT (k+1, eps)-symmetric in
/// B_s(x) for every ladder scale s in [r, min(1, d(x, box boundary))].
///
/// `x` must lie within 2h of the free boundary. Scales are `r, r/rho, ...`
/// with rho = `scale_factor` in (0, 1).
pub fn stratum_member(
    u: &ScalarField,
    x: &[f64],
    k: usize,
    eps: f64,
    r: f64,
    scale_factor: f64,
) -> Result<bool> {
    let fb = free_boundary_points(u);
    stratum_member_with_fb(u, &fb, x, k, eps, r, scale_factor, DEFAULT_PLANE_SAMPLES)
        .map(|row| row.member)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub point: Vec<f64>,
    pub k: usize,
    pub eps: f64,
    pub r: f64,
    pub member: bool,
    /// Scale attaining the minimal (k+1)-symmetry distance.
    pub best_scale: f64,
    /// That minimal distance.
    pub distance: f64,
}

/// Ladder of test scales for a stratum query.
pub fn scale_ladder(spec: &GridSpec, x: &[f64], r: f64, scale_factor: f64) -> Result<Vec<f64>> {
    if !(scale_factor > 0.0 && scale_factor < 1.0) {
        return Err(Error::InvalidParameter("scale_factor must lie in (0,1)".into()));
    }
    let cap = spec.boundary_distance(x).min(1.0);
    let mut scales = Vec::new();
    let mut s = r;
    while s <= cap * (1.0 + 1e-12) {
        scales.push(s);
        s /= scale_factor;
    }
    Ok(scales)
}

#[allow(clippy::too_many_arguments)]
pub fn stratum_member_with_fb(
    u: &ScalarField,
    fb: &[Vec<f64>],
    x: &[f64],
    k: usize,
    eps: f64,
    r: f64,
    scale_factor: f64,
    plane_samples: usize,
) -> Result<StratumRow> {
    let spec = &u.spec;
    let tol = 2.0 * spec.h;
    let near = fb
        .iter()
        .map(|p| geom::dist_sq(p, x))
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    if !(near <= tol) {
        return Err(Error::NotNearFreeBoundary { point: x.to_vec(), tol });
    }
    let scales = scale_ladder(spec, x, r, scale_factor)?;
    let mut member = true;
    let mut best_scale = r;
    let mut best_distance = f64::INFINITY;
    for &s in &scales {
        let res = symmetry_distance(
            u,
            &SymmetryQuery { center: x.to_vec(), r: s, k: k + 1, eps, plane_samples },
        )?;
        if res.distance < best_distance {
            best_distance = res.distance;
            best_scale = s;
        }
        if res.distance <= eps {
            member = false;
        }
    }
    if scales.is_empty() {
        // vacuous membership: no admissible scales between r and the cap
        best_distance = f64::INFINITY;
    }
    Ok(StratumRow { point: x.to_vec(), k, eps, r, member, best_scale, distance: best_distance })
}

/// Batch stratum scan over candidate free boundary points (parallel, with a
/// deterministic result order).
#[allow(clippy::too_many_arguments)]
pub fn stratum_scan(
    u: &ScalarField,
    points: &[Vec<f64>],
    k: usize,
    eps: f64,
    r: f64,
    scale_factor: f64,
    plane_samples: usize,
) -> Vec<Result<StratumRow>> {
    let fb = free_boundary_points(u);
    points
        .par_iter()
        .map(|x| stratum_member_with_fb(u, &fb, x, k, eps, r, scale_factor, plane_samples))
        .collect()
}

/// Free boundary symmetry audit: Hausdorff distance between the free
/// boundary inside B_r and the product of its projection along `plane` with
/// the plane directions. Small values mean the interface itself is close to
/// a cone-times-plane set; recorded, never asserted against a threshold.
pub fn boundary_symmetry_audit(
    u: &ScalarField,
    center: &[f64],
    r: f64,
    plane: &AffinePlane,
) -> Result<f64> {
    let fb = free_boundary_points(u);
    let local: Vec<Vec<f64>> = fb
        .into_iter()
        .filter(|p| geom::dist_sq(p, center) < r * r)
        .collect();
    if local.is_empty() {
        return Err(Error::EmptyFreeBoundary);
    }
    let h = u.spec.h;
    let steps = (r / h).ceil() as isize;
    let k = plane.basis.len();
    let mut product: Vec<Vec<f64>> = Vec::new();
    for p in &local {
        // collapse the plane components relative to the center
        let rel = geom::sub(p, center);
        let mut cross = p.clone();
        for v in &plane.basis {
            let c = geom::dot(&rel, v);
            for (ci, vi) in cross.iter_mut().zip(v) {
                *ci -= c * vi;
            }
        }
        // sweep back along the plane directions
        let mut t = vec![-steps; k];
        loop {
            let mut pt = cross.clone();
            for (i, &ti) in t.iter().enumerate() {
                let step = ti as f64 * h;
                for d in 0..pt.len() {
                    pt[d] += step * plane.basis[i][d];
                }
            }
            if geom::dist_sq(&pt, center) < r * r {
                product.push(pt);
            }
            let mut d = k;
            let mut done = false;
            loop {
                if d == 0 {
                    done = true;
                    break;
                }
                d -= 1;
                if t[d] < steps {
                    t[d] += 1;
                    for dd in (d + 1)..k {
                        t[dd] = -steps;
                    }
                    break;
                }
            }
            if done {
                break;
            }
            if k == 0 {
                break;
            }
        }
        if k == 0 {
            product.push(cross);
        }
    }
    crate::field::hausdorff_distance(&local, &product)
}
