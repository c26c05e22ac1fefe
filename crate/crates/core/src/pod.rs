//! Proper orthogonal decomposition of windowed snapshot matrices.
//!
//! Snapshot matrices here are tall and thin (65 536 rows, at most a few
//! hundred columns), so the SVD is taken through the small Gram matrix
//! `UᵀU` (method of snapshots). Forming the Gram matrix squares the condition
//! number; when the retained modes reach far enough down the spectrum that
//! the lifted vectors lose accuracy, the basis is refined by deflation on the
//! residual and a final Rayleigh–Ritz rotation, which recovers the small
//! modes to working precision.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::field::FieldSolver;
use crate::linalg::{gemm_tn, sorted_symmetric_eigen};
use crate::snapshots::SnapshotMatrices;

pub const DEFAULT_ENERGY: f64 = 0.9999;

/// How many POD modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TruncationRule {
    FixedCount { n: usize },
    /// Smallest `n` with `Σ_{i≤n} σᵢ² ≥ energy · Σ σᵢ²`.
    EnergyFraction { energy: f64 },
}

impl Default for TruncationRule {
    fn default() -> Self {
        Self::EnergyFraction {
            energy: DEFAULT_ENERGY,
        }
    }
}

impl TruncationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::FixedCount { n } if n == 0 => Err(config("fixed POD count must be positive")),
            Self::EnergyFraction { energy } if !(energy > 0.0 && energy <= 1.0) => {
                Err(config(format!("energy fraction must lie in (0, 1], got {energy}")))
            }
            _ => Ok(()),
        }
    }

    /// Number of modes kept out of the numerically nonzero spectrum `sv`.
    pub fn count(&self, sv: &[f64]) -> usize {
        match *self {
            Self::FixedCount { n } => n.min(sv.len()),
            Self::EnergyFraction { energy } => {
                if energy >= 1.0 {
                    return sv.len();
                }
                let total: f64 = sv.iter().map(|s| s * s).sum();
                let mut acc = 0.0;
                for (i, s) in sv.iter().enumerate() {
                    acc += s * s;
                    if acc >= energy * total {
                        return i + 1;
                    }
                }
                sv.len()
            }
        }
    }
}

/// Output of [`pod_basis`].
#[derive(Debug, Clone)]
pub struct Pod {
    /// Orthonormal modes as columns.
    pub phi: DMatrix<f64>,
    /// Numerically nonzero singular values, nonincreasing (including the
    /// truncated tail).
    pub singular_values: Vec<f64>,
    pub n: usize,
}

/// Gram-route lifting is trusted down to this ratio `σ_n / σ_1`; the lifted
/// vectors then carry errors around `ε / ratio² ≈ 1e-10`.
const GRAM_RATIO_FLOOR: f64 = 1e-3;

/// Leading left singular vectors of `u` under the truncation `rule`.
pub fn pod_basis(u: &DMatrix<f64>, rule: TruncationRule) -> Result<Pod> {
    rule.validate()?;
    if u.ncols() == 0 || u.nrows() == 0 {
        return Err(Error::EmptyBasis);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(config("snapshot matrix has non-finite entries"));
    }
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyBasis);
    }

    if u.nrows() <= u.ncols() {
        // few rows: a direct SVD is cheaper and more accurate than the Gram route
        let (q, sv) = ritz(DMatrix::identity(u.nrows(), u.nrows()), u).ok_or(Error::EmptyBasis)?;
        let tau = rank_tolerance(u, sv[0]);
        let sv: Vec<f64> = sv.into_iter().take_while(|&s| s > tau).collect();
        if sv.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let n = rule.count(&sv);
        let mut phi = q.columns(0, n).into_owned();
        fix_signs(&mut phi);
        return Ok(Pod {
            phi,
            singular_values: sv,
            n,
        });
    }

    let (lambda, v) = sorted_symmetric_eigen(gemm_tn(u, u));
    let sigma1 = lambda[0].max(0.0).sqrt();
    let tau = rank_tolerance(u, sigma1);
    let sv: Vec<f64> = lambda
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .take_while(|&s| s > tau)
        .collect();
    if sv.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let n = rule.count(&sv);

    // the Gram spectrum cannot resolve values below ~√ε·σ₁, so a rule that
    // wants the whole spectrum needs the refined path to see the tail
    let unresolved_tail = n == sv.len() && sv.len() < u.nrows().min(u.ncols());
    let gram_ok = sv[n - 1] >= GRAM_RATIO_FLOOR * sigma1 && !unresolved_tail;
    let k = (n + (n / 2).max(8)).min(sv.len());
    let (mut phi, singular_values, n) = if gram_ok {
        let mut lift = v.columns(0, n).into_owned();
        for (j, s) in sv.iter().take(n).enumerate() {
            lift.column_mut(j).unscale_mut(*s);
        }
        let phi = orthonormalize(u * lift)?;
        (phi, sv, n)
    } else if let Some((q, head)) = (k < sv.len())
        .then(|| leading_svd(u, &v, k))
        .flatten()
    {
        // refined head, Gram estimates for the discarded tail down to the
        // level the Gram spectrum can resolve
        let floor = (u.ncols() as f64 * f64::EPSILON).sqrt() * sigma1;
        let tail = sv[head.len()..].iter().take_while(|&&s| s > floor);
        let sv: Vec<f64> = head.iter().filter(|&&s| s > tau).chain(tail).copied().collect();
        let n = rule.count(&sv).min(head.len());
        (q.columns(0, n).into_owned(), sv, n)
    } else {
        let (q, sv) = refined_svd(u, tau)?;
        let n = rule.count(&sv);
        (q.columns(0, n).into_owned(), sv, n)
    };
    fix_signs(&mut phi);
    Ok(Pod {
        phi,
        singular_values,
        n,
    })
}

/// Rank cutoff `max(rows, cols) · ε · σ_1`.
fn rank_tolerance(u: &DMatrix<f64>, sigma1: f64) -> f64 {
    u.nrows().max(u.ncols()) as f64 * f64::EPSILON * sigma1
}

/// Orthonormalizes columns by two passes of `Y ← Y V Λ^{-1/2}` with
/// `YᵀY = V Λ Vᵀ`; the second pass removes the error of the first.
fn orthonormalize(mut y: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for _ in 0..2 {
        let (lambda, v) = sorted_symmetric_eigen(gemm_tn(&y, &y));
        if lambda.last().copied().unwrap_or(0.0) <= 1e-20 * lambda[0].max(1e-300) {
            return Err(Error::EmptyBasis);
        }
        let mut w = v;
        for (j, l) in lambda.iter().enumerate() {
            w.column_mut(j).unscale_mut(l.sqrt());
        }
        // rotate back so column j stays close to the input column j
        y = &y * (&w * v_transpose(&w, &lambda));
    }
    Ok(y)
}

/// `Vᵀ` recovered from `W = V Λ^{-1/2}`.
fn v_transpose(w: &DMatrix<f64>, lambda: &[f64]) -> DMatrix<f64> {
    let mut v = w.clone();
    for (j, l) in lambda.iter().enumerate() {
        v.column_mut(j).scale_mut(l.sqrt());
    }
    v.transpose()
}

/// Orthonormal basis of the well-conditioned part of `range(y)`: directions
/// with `σ < 1e-5 σ_max` are dropped (later deflation passes recover them);
/// below that the Gram eigenvectors are too inaccurate to orthonormalize.
fn orthonormal_range(y: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (lambda, v) = sorted_symmetric_eigen(gemm_tn(&y, &y));
    if lambda.is_empty() || lambda[0] <= 0.0 {
        return None;
    }
    let keep = lambda.iter().take_while(|&&l| l > 1e-10 * lambda[0]).count();
    let mut w = v.columns(0, keep).into_owned();
    for (j, l) in lambda.iter().take(keep).enumerate() {
        w.column_mut(j).unscale_mut(l.sqrt());
    }
    orthonormalize(y * w).ok()
}

/// Leading `k` singular pairs when only a small head of a long spectrum is
/// needed: the Gram eigenvectors seed two Householder-orthonormalized
/// subspace iterations followed by a Rayleigh–Ritz rotation.
fn leading_svd(u: &DMatrix<f64>, v: &DMatrix<f64>, k: usize) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let mut q = (u * v.columns(0, k)).qr().q();
    for _ in 0..2 {
        let z = gemm_tn(u, &q).qr().q();
        q = (u * z).qr().q();
    }
    ritz(q, u)
}

/// Rotates the orthonormal block `q` onto the singular directions of `QᵀU`,
/// sorted by decreasing singular value.
fn ritz(q: DMatrix<f64>, u: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let svd = gemm_tn(&q, u).svd(true, false);
    let w = svd.u?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    Some((q * w.select_columns(order.iter()), sv))
}

/// Thin SVD via deflated Gram passes followed by Rayleigh–Ritz: returns the
/// left singular vectors (all numerically nonzero modes) and values.
fn refined_svd(u: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = u.ncols();
    let mut q = DMatrix::<f64>::zeros(u.nrows(), 0);
    let mut residual = u.clone();
    for _pass in 0..4 {
        let (lambda, v) = sorted_symmetric_eigen(gemm_tn(&residual, &residual));
        let keep = lambda.iter().take_while(|&&l| l.max(0.0).sqrt() > tau).count();
        if keep == 0 {
            break;
        }
        let mut lift = v.columns(0, keep).into_owned();
        for j in 0..keep {
            lift.column_mut(j).unscale_mut(lambda[j].sqrt());
        }
        let mut y = &residual * lift;
        if q.ncols() > 0 {
            for _ in 0..2 {
                let c = gemm_tn(&q, &y);
                y -= &q * c;
            }
        }
        // discard directions that were already captured
        let norms: Vec<f64> = y.column_iter().map(|c| c.norm()).collect();
        let fresh: Vec<usize> = (0..keep).filter(|&j| norms[j] > 1e-6).collect();
        if fresh.is_empty() {
            break;
        }
        let Some(y) = orthonormal_range(y.select_columns(fresh.iter())) else {
            break;
        };
        let q_cols = q.ncols();
        q = q.resize_horizontally(q_cols + y.ncols(), 0.0);
        q.columns_mut(q_cols, y.ncols()).copy_from(&y);
        if q.ncols() >= m {
            break;
        }
        let coef = gemm_tn(&q, u);
        residual = u - &q * coef;
    }
    if q.ncols() == 0 {
        return Err(Error::EmptyBasis);
    }
    // Rayleigh–Ritz: U ≈ Q (QᵀU) = Q W Σ Zᵀ
    let svd = gemm_tn(&q, u).svd(true, false);
    let w = svd.u.ok_or(Error::EmptyBasis)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let order: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > tau)
        .collect();
    if order.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((q * w.select_columns(order.iter()), sv))
}

/// Flips each column so its largest-magnitude entry is nonnegative.
pub fn fix_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let mut best = 0.0_f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Per-window POD factors.
#[derive(Debug, Clone)]
pub struct WindowBasis {
    pub window_index: usize,
    /// `N_f × n_f`, orthonormal columns.
    pub phi_f: DMatrix<f64>,
    /// `nx × n_φ`, orthonormal columns.
    pub phi_phi: DMatrix<f64>,
    /// `nx × n_φ`, column i is `−∂ₓ` of potential mode i.
    pub phi_e: DMatrix<f64>,
    pub sv_f: Vec<f64>,
    pub sv_phi: Vec<f64>,
}

impl WindowBasis {
    pub fn n_f(&self) -> usize {
        self.phi_f.ncols()
    }

    pub fn n_phi(&self) -> usize {
        self.phi_phi.ncols()
    }

    /// Electric-field modes from potential modes by spectral differentiation.
    pub fn field_modes(phi_phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nx = phi_phi.nrows();
        let mut solver = FieldSolver::new(nx)?;
        let mut out = DMatrix::zeros(nx, phi_phi.ncols());
        let mut e = vec![0.0; nx];
        for (j, col) in phi_phi.column_iter().enumerate() {
            let col: Vec<f64> = col.iter().copied().collect();
            solver.field(&col, &mut e);
            out.column_mut(j).copy_from_slice(&e);
        }
        Ok(out)
    }

    /// Builds a basis from explicit factors (used by tests and loaders).
    pub fn from_factors(
        window_index: usize,
        phi_f: DMatrix<f64>,
        phi_phi: DMatrix<f64>,
        sv_f: Vec<f64>,
        sv_phi: Vec<f64>,
    ) -> Result<Self> {
        let phi_e = Self::field_modes(&phi_phi)?;
        Ok(Self {
            window_index,
            phi_f,
            phi_phi,
            phi_e,
            sv_f,
            sv_phi,
        })
    }
}

/// POD of one window's `U_f` and `U_φ`. An all-zero potential window (no
/// field anywhere, e.g. unperturbed data) yields an empty potential basis.
pub fn build_window_basis(
    snapshots: &SnapshotMatrices,
    rule_f: TruncationRule,
    rule_phi: TruncationRule,
) -> Result<WindowBasis> {
    let f = pod_basis(&snapshots.u_f, rule_f)?;
    let (phi_phi, sv_phi) = if snapshots.u_phi.iter().all(|&v| v == 0.0) {
        (DMatrix::zeros(snapshots.u_phi.nrows(), 0), Vec::new())
    } else {
        let p = pod_basis(&snapshots.u_phi, rule_phi)?;
        (p.phi, p.singular_values)
    };
    WindowBasis::from_factors(snapshots.window_index, f.phi, phi_phi, f.singular_values, sv_phi)
}

pub fn build_window_bases(
    groups: &[SnapshotMatrices],
    rule_f: TruncationRule,
    rule_phi: TruncationRule,
) -> Result<Vec<WindowBasis>> {
    if groups.is_empty() {
        return Err(config("no snapshot groups"));
    }
    groups
        .iter()
        .map(|g| build_window_basis(g, rule_f, rule_phi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    const ALL: TruncationRule = TruncationRule::EnergyFraction { energy: 1.0 };

    #[test]
    fn single_column() {
        let u = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 3.0, 0.5]);
        let p = pod_basis(&u, ALL).unwrap();
        assert_eq!(p.n, 1);
        let norm = u.norm();
        assert!((p.singular_values[0] - norm).abs() < 1e-14);
        assert!((&p.phi - &u / norm).amax() < 1e-15);
    }

    #[test]
    fn duplicate_columns_collapse() {
        let col = [1.0, 2.0, -0.5, 4.0, 0.0];
        let mut u = DMatrix::zeros(5, 2);
        u.set_column(0, &nalgebra::DVector::from_row_slice(&col));
        u.set_column(1, &nalgebra::DVector::from_row_slice(&col));
        let p = pod_basis(&u, TruncationRule::EnergyFraction { energy: 0.999999 }).unwrap();
        assert_eq!(p.n, 1);
        let norm = nalgebra::DVector::from_row_slice(&col).norm();
        assert!((p.singular_values[0] - 2f64.sqrt() * norm).abs() < 1e-13);
        assert_eq!(p.singular_values.len(), 1);
    }

    #[test]
    fn full_rank_reconstruction() {
        let u = random(50, 20, 1);
        let p = pod_basis(&u, ALL).unwrap();
        assert_eq!(p.n, 20);
        let r = &u - &p.phi * p.phi.tr_mul(&u);
        assert!(r.norm() / u.norm() < 1e-12);
        assert!(orthonormality_defect(&p.phi) < 1e-12);
    }

    #[test]
    fn singular_values_match_dense_svd_and_are_sorted() {
        let u = random(40, 12, 2);
        let p = pod_basis(&u, ALL).unwrap();
        let mut want: Vec<f64> = u.clone().svd(false, false).singular_values.iter().copied().collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in p.singular_values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * want[0]);
        }
        assert!(p.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sign_convention() {
        let p = pod_basis(&random(30, 8, 3), ALL).unwrap();
        for c in p.phi.column_iter() {
            let m = c.iter().fold(0.0_f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            assert!(m >= 0.0);
        }
    }

    #[test]
    fn graded_spectrum_uses_refinement_and_stays_accurate() {
        // singular values spanning 1 .. 1e-9, well below the Gram floor
        let rows = 200;
        let cols = 12;
        let q = pod_basis(&random(rows, cols, 4), ALL).unwrap().phi;
        let z = pod_basis(&random(cols, cols, 5), ALL).unwrap().phi;
        let s: Vec<f64> = (0..cols).map(|i| 10f64.powi(-(i as i32) * 9 / 11)).collect();
        let u = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * z.transpose();
        let p = pod_basis(&u, ALL).unwrap();
        assert_eq!(p.n, cols);
        assert!(orthonormality_defect(&p.phi) < 1e-12);
        for (a, b) in p.singular_values.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let r = &u - &p.phi * p.phi.tr_mul(&u);
        assert!(r.norm() / u.norm() < 1e-14);
    }

    #[test]
    fn wide_matrix_matches_dense_svd() {
        let u = random(8, 60, 6);
        let p = pod_basis(&u, ALL).unwrap();
        assert_eq!(p.n, 8);
        let mut want: Vec<f64> = u.clone().svd(false, false).singular_values.iter().copied().collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in p.singular_values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12 * want[0]);
        }
        assert!(orthonormality_defect(&p.phi) < 1e-13);
        let r = &u - &p.phi * p.phi.tr_mul(&u);
        assert!(r.norm() / u.norm() < 1e-13);
    }

    #[test]
    fn long_graded_spectrum_refines_the_retained_head() {
        // 120 singular values from 1 down to 1e-12; only a short head is kept
        let (rows, cols) = (300, 120);
        let q = pod_basis(&random(rows, cols, 7), ALL).unwrap().phi;
        let z = pod_basis(&random(cols, cols, 8), ALL).unwrap().phi;
        let s: Vec<f64> = (0..cols).map(|i| 10f64.powf(-(i as f64) * 12.0 / 119.0)).collect();
        let u = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * z.transpose();
        let rule = TruncationRule::EnergyFraction { energy: 1.0 - 1e-10 };
        let p = pod_basis(&u, rule).unwrap();
        assert_eq!(p.n, rule.count(&s));
        assert!(p.singular_values[p.n - 1] < GRAM_RATIO_FLOOR);
        for (a, b) in p.singular_values.iter().take(p.n).zip(&s) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
        assert!(orthonormality_defect(&p.phi) < 1e-12);
        // the retained modes span the exact leading subspace
        let lead = q.columns(0, p.n);
        let miss = &lead - &p.phi * p.phi.tr_mul(&lead);
        assert!(miss.amax() < 1e-8, "{}", miss.amax());
    }

    #[test]
    fn fixed_count_and_energy_rules() {
        let sv = [3.0, 2.0, 1.0, 0.1];
        assert_eq!(TruncationRule::FixedCount { n: 2 }.count(&sv), 2);
        assert_eq!(TruncationRule::FixedCount { n: 9 }.count(&sv), 4);
        // energies 9, 13, 14, 14.01
        assert_eq!(TruncationRule::EnergyFraction { energy: 0.9 }.count(&sv), 2);
        assert_eq!(TruncationRule::EnergyFraction { energy: 0.99 }.count(&sv), 3);
        assert!(TruncationRule::EnergyFraction { energy: 0.0 }.validate().is_err());
        assert!(TruncationRule::FixedCount { n: 0 }.validate().is_err());
    }

    #[test]
    fn zero_matrix_has_no_basis() {
        assert!(matches!(pod_basis(&DMatrix::zeros(5, 3), ALL), Err(Error::EmptyBasis)));
    }

    #[test]
    fn field_modes_differentiate_potential_modes() {
        let nx = 32;
        let x: Vec<f64> = (0..nx).map(|i| 2.0 * std::f64::consts::PI * i as f64 / nx as f64).collect();
        let col: Vec<f64> = x.iter().map(|x| (2.0 * x).sin() / 4.0).collect();
        let e = WindowBasis::field_modes(&DMatrix::from_column_slice(nx, 1, &col)).unwrap();
        for i in 0..nx {
            assert!((e[(i, 0)] + 0.5 * (2.0 * x[i]).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn two_mode_window_recovers_the_span() {
        let grid = crate::grid::PhaseGrid::new(16, 16, 1.0).unwrap();
        let u1: Vec<f64> = grid.sample(|x, v| x.sin() * (-v * v).exp());
        let u2: Vec<f64> = grid.sample(|x, v| (2.0 * x).cos() * v * (-v * v).exp());
        let cols = 9;
        let mut u_f = DMatrix::zeros(grid.len(), cols);
        for c in 0..cols {
            let t = c as f64 * 0.3;
            for i in 0..grid.len() {
                u_f[(i, c)] = t.cos() * u1[i] + (1.0 + t * t) * u2[i];
            }
        }
        let u_phi = DMatrix::from_fn(16, cols, |i, c| (c as f64 + 1.0) * grid.x(i).sin());
        let snaps = SnapshotMatrices {
            window_index: 0,
            u_f,
            u_phi,
        };
        let b = build_window_basis(&snaps, TruncationRule::EnergyFraction { energy: 0.99999 }, ALL).unwrap();
        assert_eq!(b.n_f(), 2);
        assert_eq!(b.n_phi(), 1);
        // principal angles: both generators lie in span(Phi_f)
        for g in [&u1, &u2] {
            let g = nalgebra::DVector::from_column_slice(g);
            let r = &g - &b.phi_f * b.phi_f.tr_mul(&g);
            assert!(r.norm() / g.norm() < 1e-10);
        }
    }

    #[test]
    fn identical_snapshots_give_one_mode() {
        let col: Vec<f64> = (0..64).map(|i| (i as f64 * 0.2).sin() + 2.0).collect();
        let u = DMatrix::from_fn(64, 10, |i, _| col[i]);
        let p = pod_basis(&u, TruncationRule::default()).unwrap();
        assert_eq!(p.n, 1);
    }

    #[test]
    fn eckart_young_on_random_matrices() {
        for seed in 0..5 {
            let u = random(30, 10, 100 + seed);
            let p = pod_basis(&u, ALL).unwrap();
            for r in 1..10 {
                let phi = p.phi.columns(0, r);
                let res = &u - phi * phi.tr_mul(&u);
                let two_norm = res.svd(false, false).singular_values.max();
                assert!((two_norm - p.singular_values[r]).abs() < 1e-10);
            }
        }
    }
}
