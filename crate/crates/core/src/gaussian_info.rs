//! Covariance algebra and information measures for jointly Gaussian variables.
//!
//! Everything here is a pure function of its inputs. Information values are in
//! nats.

use std::f64::consts::PI;
use std::fmt::Debug;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-12;
const JITTER_SCALES: [f64; 2] = [1e-9, 1e-6];
const MI_CLAMP: f64 = 1e-10;

/// A symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::DimensionMismatch(format!(
                "covariance not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = symmetrize(&m);
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::SingularMatrix);
        }
        Ok(CovMatrix(sym))
    }

    /// Wraps a matrix that the caller knows is a covariance. The matrix is
    /// symmetrized but not otherwise checked.
    pub fn from_raw(m: DMatrix<f64>) -> Self {
        CovMatrix(symmetrize(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn diag_scale(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    let s = m.trace() / n;
    if s.is_finite() && s > 0.0 {
        s
    } else {
        0.0
    }
}

/// Plain Cholesky factorization. Returns the lower factor, or the offending
/// pivot (the would-be squared diagonal entry) on failure.
fn cholesky_raw(m: &DMatrix<f64>, min_pivot: f64) -> std::result::Result<DMatrix<f64>, f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > min_pivot) {
            return Err(d);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Cholesky factor of a symmetric positive definite matrix.
///
/// The input is symmetrized first. If the plain factorization hits a pivot
/// below `1e-12 * trace/dim`, a diagonal jitter of `1e-9 * trace/dim` is added,
/// then `1e-6 * trace/dim` before giving up.
pub fn robust_cholesky(m: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let sym = symmetrize(m);
    let scale = diag_scale(&sym);
    let min_pivot = PIVOT_TOL * scale;
    let mut worst = match cholesky_raw(&sym, min_pivot) {
        Ok(l) => return Ok(l),
        Err(p) => p,
    };
    for jitter in JITTER_SCALES {
        let mut shifted = sym.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter * scale;
        }
        match cholesky_raw(&shifted, min_pivot) {
            Ok(l) => return Ok(l),
            Err(p) => worst = p,
        }
    }
    Err(worst)
}

/// Solves `L Lᵀ X = B` given the lower Cholesky factor.
fn cholesky_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let y = l
        .solve_lower_triangular(b)
        .expect("cholesky factor has a nonzero diagonal");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("cholesky factor has a nonzero diagonal")
}

/// `log|P|` via Cholesky: `2 Σ log L_ii`.
pub fn log_det(p: &CovMatrix) -> Result<f64> {
    log_det_matrix(p.matrix())
}

pub(crate) fn log_det_matrix(p: &DMatrix<f64>) -> Result<f64> {
    if p.nrows() == 0 {
        return Ok(0.0);
    }
    let l = robust_cholesky(p).map_err(|_| Error::SingularMatrix)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Differential entropy of a Gaussian with covariance `p`, in nats.
pub fn entropy(p: &CovMatrix) -> Result<f64> {
    let d = p.dim() as f64;
    Ok(0.5 * d * (1.0 + (2.0 * PI).ln()) + 0.5 * log_det(p)?)
}

/// Schur complement `P_xx - P_xz P_zz⁻¹ P_zx`, symmetrized.
pub fn schur_complement(
    p_xx: &DMatrix<f64>,
    p_xz: &DMatrix<f64>,
    p_zz: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if p_zz.nrows() == 0 {
        return Ok(p_xx.clone());
    }
    if p_xz.nrows() != p_xx.nrows() || p_xz.ncols() != p_zz.nrows() || !p_zz.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "schur blocks {}x{}, {}x{}, {}x{}",
            p_xx.nrows(),
            p_xx.ncols(),
            p_xz.nrows(),
            p_xz.ncols(),
            p_zz.nrows(),
            p_zz.ncols()
        )));
    }
    let l = robust_cholesky(p_zz).map_err(|pivot| Error::SingularConditioning { pivot })?;
    let gain_t = cholesky_solve(&l, &p_xz.transpose());
    Ok(symmetrize(&(p_xx - p_xz * gain_t)))
}

/// A covariance matrix partitioned into labeled variable groups.
#[derive(Debug, Clone)]
pub struct JointGaussian<L> {
    cov: DMatrix<f64>,
    labels: Vec<(L, usize)>,
    offsets: Vec<usize>,
}

impl<L: PartialEq + Clone + Debug> JointGaussian<L> {
    pub fn new(cov: DMatrix<f64>, labels: Vec<(L, usize)>) -> Result<Self> {
        let total: usize = labels.iter().map(|(_, d)| *d).sum();
        if total != cov.nrows() || !cov.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "labels cover {total} dims but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        for (i, (a, _)) in labels.iter().enumerate() {
            if labels[..i].iter().any(|(b, _)| b == a) {
                return Err(Error::DimensionMismatch(format!("duplicate label {a:?}")));
            }
        }
        let mut offsets = Vec::with_capacity(labels.len());
        let mut acc = 0;
        for (_, d) in &labels {
            offsets.push(acc);
            acc += d;
        }
        Ok(JointGaussian {
            cov,
            labels,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn labels(&self) -> impl Iterator<Item = &L> {
        self.labels.iter().map(|(l, _)| l)
    }

    /// Scalar indices covered by the given labels, in the order given.
    pub fn indices(&self, set: &[L]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for l in set {
            let pos = self
                .labels
                .iter()
                .position(|(x, _)| x == l)
                .ok_or_else(|| Error::DimensionMismatch(format!("unknown label {l:?}")))?;
            let off = self.offsets[pos];
            out.extend(off..off + self.labels[pos].1);
        }
        Ok(out)
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov[(rows[i], cols[j])])
    }
}

fn check_disjoint<L: PartialEq + Debug>(a: &[L], b: &[L]) -> Result<()> {
    if let Some(l) = a.iter().find(|l| b.contains(l)) {
        return Err(Error::DimensionMismatch(format!(
            "label {l:?} appears in two sets that must be disjoint"
        )));
    }
    Ok(())
}

/// Covariance of the `retain` block conditioned on the `condition` block.
pub fn conditional_covariance<L: PartialEq + Clone + Debug>(
    joint: &JointGaussian<L>,
    retain: &[L],
    condition: &[L],
) -> Result<CovMatrix> {
    check_disjoint(retain, condition)?;
    let r = joint.indices(retain)?;
    let c = joint.indices(condition)?;
    let p_rr = joint.block(&r, &r);
    let p_rc = joint.block(&r, &c);
    let p_cc = joint.block(&c, &c);
    Ok(CovMatrix::from_raw(schur_complement(&p_rr, &p_rc, &p_cc)?))
}

/// `I(x; z | given) = H(z | given) - H(z | x, given)` in nats.
///
/// Values in `(-1e-10, 0)` are clamped to zero.
pub fn mutual_information<L: PartialEq + Clone + Debug>(
    joint: &JointGaussian<L>,
    x: &[L],
    z: &[L],
    given: &[L],
) -> Result<f64> {
    check_disjoint(x, z)?;
    check_disjoint(x, given)?;
    check_disjoint(z, given)?;
    if x.is_empty() || z.is_empty() {
        return Ok(0.0);
    }
    let z_given = conditional_covariance(joint, z, given)?;
    let mut xg: Vec<L> = x.to_vec();
    xg.extend_from_slice(given);
    let z_given_x = conditional_covariance(joint, z, &xg)?;
    let mi = 0.5 * (log_det(&z_given)? - log_det(&z_given_x)?);
    Ok(clamp_mi(mi))
}

pub(crate) fn clamp_mi(mi: f64) -> f64 {
    if mi < 0.0 && mi > -MI_CLAMP {
        0.0
    } else {
        mi
    }
}
