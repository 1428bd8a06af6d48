//! Dimension-generic vectors, affine planes, and a symmetric eigensolver.
//!
//! Everything operates on plain `&[f64]` slices so the grid, measure, and
//! covering modules share one set of primitives without committing to a fixed
//! ambient dimension (in practice n <= 4).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// a + s*b
pub fn scaled_add(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Lexicographic total order on coordinate tuples. Inputs must be finite.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("non-finite coordinate") {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Affine k-plane `base + span(basis)` with an orthonormal basis.
///
/// An empty basis is a point; a full basis is the whole space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinePlane {
    pub base: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl AffinePlane {
    /// Build from a spanning set; near-dependent vectors are dropped.
    pub fn from_raw(base: Vec<f64>, raw: &[Vec<f64>]) -> Self {
        let basis = orthonormalize(raw);
        AffinePlane { base, basis }
    }

    pub fn point(base: Vec<f64>) -> Self {
        AffinePlane { base, basis: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Component of `p - base` orthogonal to the plane.
    pub fn residual(&self, p: &[f64]) -> Vec<f64> {
        let mut r = sub(p, &self.base);
        for v in &self.basis {
            let c = dot(&r, v);
            for (ri, vi) in r.iter_mut().zip(v) {
                *ri -= c * vi;
            }
        }
        r
    }

    pub fn dist(&self, p: &[f64]) -> f64 {
        norm(&self.residual(p))
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        let r = self.residual(p);
        p.iter().zip(&r).map(|(x, y)| x - y).collect()
    }
}

/// Modified Gram-Schmidt; vectors with residual norm below 1e-10 are dropped.
pub fn orthonormalize(vecs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vecs {
        let mut w = v.clone();
        for u in &out {
            let c = dot(&w, u);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
        let n = norm(&w);
        if n > 1e-10 {
            for wi in w.iter_mut() {
                *wi /= n;
            }
            out.push(w);
        }
    }
    out
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as rows. Intended for the small (n <= 8) second-moment forms.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);

    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigvecs: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    (eigvals, eigvecs)
}

/// Volume of the unit ball in R^n, via the recurrence
/// `omega_n = omega_{n-2} * 2*pi/n` (equivalent to pi^{n/2}/Gamma(n/2+1)).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;
const SQRT2_FRAC: f64 = 0.414_213_562_373_095_0;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Deterministic, prefix-nested sequence of unit directions.
///
/// n = 2 uses a Kronecker angle sequence, n = 3 a Kronecker (z, phi) sphere
/// sequence, and higher dimensions a fixed-seed Gaussian stream. Taking a
/// longer prefix never changes the earlier entries, which keeps searches over
/// these candidates monotone in the sample count.
pub fn unit_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    match n {
        1 => (0..count)
            .map(|j| vec![if j % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * frac(j as f64 * GOLDEN_FRAC);
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => (0..count)
            .map(|j| {
                let z = 1.0 - 2.0 * frac(0.5 + j as f64 * SQRT2_FRAC);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * frac(j as f64 * GOLDEN_FRAC);
                vec![r * phi.cos(), r * phi.sin(), z]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x0d1e_c71e_5eed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                let nn = norm(&v);
                if nn > 1e-8 {
                    out.push(v.iter().map(|x| x / nn).collect());
                }
            }
            out
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller on uniforms; avoids pulling in rand_distr.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Extend a partial orthonormal frame to a full basis of R^n using canonical
/// axes.
pub fn complete_frame(partial: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = partial.to_vec();
    let mut axis = 0;
    while frame.len() < n && axis < n {
        let mut e = vec![0.0; n];
        e[axis] = 1.0;
        let mut candidate = frame.clone();
        candidate.push(e);
        let on = orthonormalize(&candidate);
        if on.len() > frame.len() {
            frame = on;
        }
        axis += 1;
    }
    frame
}

/// Deterministic, prefix-nested sequence of orthonormal k-frames in R^n.
pub fn orthonormal_frames(n: usize, k: usize, count: usize) -> Vec<Vec<Vec<f64>>> {
    assert!(k <= n);
    if k == 0 {
        return vec![Vec::new()];
    }
    if k == n {
        return vec![complete_frame(&[], n)];
    }
    if k == 1 {
        return unit_directions(n, count)
            .into_iter()
            .map(|d| vec![d])
            .collect();
    }
    if k == n - 1 {
        // Complement of a direction.
        return unit_directions(n, count)
            .into_iter()
            .map(|d| {
                let full = complete_frame(&[d], n);
                full[1..].to_vec()
            })
            .collect();
    }
    // General case: consecutive direction batches, orthonormalized.
    let dirs = unit_directions(n, count * k + k);
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    while out.len() < count && j + k <= dirs.len() {
        let frame = orthonormalize(&dirs[j..j + k].to_vec());
        if frame.len() == k {
            out.push(frame);
        }
        j += k;
    }
    out
}

/// All k-element subsets of 0..n in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jacobi_recovers_diagonal() {
        let m = vec![vec![3.0, 0.0], vec![0.0, 1.0]];
        let (vals, vecs) = jacobi_eigen(&m);
        assert_relative_eq!(vals[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(vals[1], 1.0, max_relative = 1e-12);
        assert!(vecs[0][0].abs() > 0.999);
    }

    #[test]
    fn jacobi_symmetric_2x2() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (vals, vecs) = jacobi_eigen(&m);
        assert_relative_eq!(vals[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(vals[1], 1.0, max_relative = 1e-12);
        // eigenvector for 3 is (1,1)/sqrt(2) up to sign
        assert_relative_eq!(vecs[0][0].abs(), std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-10);
        // residual check: M v = lambda v
        for i in 0..2 {
            let mv: Vec<f64> = (0..2).map(|r| dot(&m[r], &vecs[i])).collect();
            for r in 0..2 {
                assert_relative_eq!(mv[r], vals[i] * vecs[i][r], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = 4;
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let x = rng.gen_range(-1.0..1.0);
                    m[i][j] = x;
                    m[j][i] = x;
                }
            }
            let (vals, vecs) = jacobi_eigen(&m);
            // Reconstruct M = sum_i lambda_i v_i v_i^T
            for r in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += vals[i] * vecs[i][r] * vecs[i][c];
                    }
                    assert_relative_eq!(s, m[r][c], epsilon = 1e-10);
                }
            }
            // descending order
            for i in 1..n {
                assert!(vals[i - 1] >= vals[i] - 1e-12);
            }
        }
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), std::f64::consts::PI);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * std::f64::consts::PI / 3.0);
        assert_relative_eq!(unit_ball_volume(4), std::f64::consts::PI.powi(2) / 2.0);
    }

    #[test]
    fn directions_are_unit_and_nested() {
        for n in 1..=4 {
            let a = unit_directions(n, 8);
            let b = unit_directions(n, 16);
            for d in &a {
                assert_relative_eq!(norm(d), 1.0, epsilon = 1e-12);
            }
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn frames_orthonormal() {
        for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2), (4, 3)] {
            for f in orthonormal_frames(n, k, 6) {
                assert_eq!(f.len(), k);
                for i in 0..k {
                    assert_relative_eq!(norm(&f[i]), 1.0, epsilon = 1e-10);
                    for j in (i + 1)..k {
                        assert!(dot(&f[i], &f[j]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn plane_distance_point_and_line() {
        let p = AffinePlane::point(vec![1.0, 0.0]);
        assert_relative_eq!(p.dist(&[0.0, 0.0]), 1.0);
        let l = AffinePlane::from_raw(vec![0.0, 0.0], &[vec![1.0, 0.0]]);
        assert_relative_eq!(l.dist(&[0.5, 2.0]), 2.0);
    }
}
