//! Problem data and the objective, penalty and derivative evaluations.
//!
//! `φ(β) = ½ (β − β*)ᵀ G (β − β*) + γ`, `ψ_p(b) = |b|^p / p`,
//! `F_p(β) = Σ ψ_p(β_i)`, `f_λ = φ + λ F_p`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::critical::Tag;
use crate::linalg;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read instance file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("instance parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Gram matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("exponent p = {0} is outside (0, 1)")]
    InvalidExponent(f64),
    #[error("supplied beta_star does not solve the normal equations (residual {0:.3e})")]
    InconsistentOls(f64),
    #[error("penalty derivative is unbounded at zero")]
    DerivativeAtZero,
    #[error("component {0} of the support is zero")]
    ZeroInSupport(usize),
    #[error("restricted Gram block on {0} is singular")]
    SingularBlock(Support),
}

/// An ordered set of active coordinates, stored 0-based.
///
/// Serialized 1-based, matching how coordinates are numbered in reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Support(indices)
    }

    pub fn empty() -> Self {
        Support(Vec::new())
    }

    pub fn full(n: usize) -> Self {
        Support((0..n).collect())
    }

    /// Coordinates with `|β_i| >= zero_tol`.
    pub fn of(beta: &DVector<f64>, zero_tol: f64) -> Self {
        Support((0..beta.len()).filter(|&i| beta[i].abs() >= zero_tol).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Position of coordinate `i` inside the support.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    pub fn complement(&self, n: usize) -> Support {
        Support((0..n).filter(|i| !self.contains(*i)).collect())
    }

    pub fn with(&self, i: usize) -> Support {
        let mut v = self.0.clone();
        v.push(i);
        Support::new(v)
    }

    pub fn without(&self, removed: &[usize]) -> Support {
        Support(self.0.iter().copied().filter(|i| !removed.contains(i)).collect())
    }

    pub fn is_valid_for(&self, n: usize) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1]) && self.0.iter().all(|&i| i < n)
    }

    /// `v[I]` as a dense vector.
    pub fn gather(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.0.iter().map(|&i| v[i]))
    }

    /// Length-`n` vector with `values` placed on the support and zeros elsewhere.
    pub fn scatter(&self, values: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (k, &i) in self.0.iter().enumerate() {
            out[i] = values[k];
        }
        out
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for Support {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let one_based: Vec<usize> = self.0.iter().map(|i| i + 1).collect();
        one_based.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Support {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let one_based = Vec::<usize>::deserialize(deserializer)?;
        if one_based.iter().any(|&i| i == 0) {
            return Err(serde::de::Error::custom("support indices are 1-based"));
        }
        let s = Support(one_based.into_iter().map(|i| i - 1).collect());
        if !s.0.windows(2).all(|w| w[0] < w[1]) {
            return Err(serde::de::Error::custom("support indices must be strictly increasing"));
        }
        Ok(s)
    }
}

/// A critical point together with its multiplier, constraint level and tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    /// Continuation arclength, cumulative along the owning path.
    pub arclength: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// `F_p(β)`.
    pub c: f64,
    pub support: Support,
    pub class_q: Tag,
    pub class_p: Tag,
}

impl PathPoint {
    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    p: f64,
    #[serde(rename = "X")]
    x: Option<Vec<Vec<f64>>>,
    y: Option<Vec<f64>>,
    #[serde(rename = "G")]
    g: Option<Vec<Vec<f64>>>,
    beta_star: Option<Vec<f64>>,
    gamma: Option<f64>,
}

/// The quadratic `φ` (through `G`, `β*`, `γ`) and the exponent `p`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    n: usize,
    d: Option<usize>,
    x: Option<DMatrix<f64>>,
    y: Option<DVector<f64>>,
    g: DMatrix<f64>,
    beta_star: DVector<f64>,
    gamma: f64,
    p: f64,
    positive_definite: bool,
}

fn rows_to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, ModelError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(ModelError::DimensionMismatch(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::DimensionMismatch(format!("{name} has ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::Parse(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn check_exponent(p: f64) -> Result<(), ModelError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidExponent(p))
    }
}

impl ProblemInstance {
    /// Builds an instance from the Gram matrix and the OLS solution.
    ///
    /// `G` must be symmetric to `1e-12` relative and positive definite.
    pub fn from_gram(
        g: DMatrix<f64>,
        beta_star: DVector<f64>,
        p: f64,
        gamma: f64,
    ) -> Result<Self, ModelError> {
        check_exponent(p)?;
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "G must be square, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        if beta_star.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "beta_star has length {}, expected {n}",
                beta_star.len()
            )));
        }
        if g.iter().chain(beta_star.iter()).any(|v| !v.is_finite()) || !gamma.is_finite() {
            return Err(ModelError::Parse("non-finite entries".into()));
        }
        let g = symmetrized(g)?;
        if !linalg::is_positive_definite(&g) {
            return Err(ModelError::NotPositiveDefinite);
        }
        Ok(Self { n, d: None, x: None, y: None, g, beta_star, gamma, p, positive_definite: true })
    }

    /// Builds an instance from a `d × n` design matrix (rows are observations)
    /// and the `d` observations.
    ///
    /// `G = XᵀX`. When `G` is singular the minimum-norm least-squares point is
    /// used as `β*`; such instances evaluate fine but cannot be traced.
    pub fn from_design(x: DMatrix<f64>, y: DVector<f64>, p: f64) -> Result<Self, ModelError> {
        check_exponent(p)?;
        let (d, n) = x.shape();
        if d == 0 || n == 0 {
            return Err(ModelError::DimensionMismatch("X is empty".into()));
        }
        if y.len() != d {
            return Err(ModelError::DimensionMismatch(format!(
                "y has length {}, X has {d} rows",
                y.len()
            )));
        }
        let g = symmetrized(x.transpose() * &x)?;
        let xty = x.transpose() * &y;
        let positive_definite = linalg::is_positive_definite(&g);
        let beta_star = if positive_definite {
            linalg::solve_spd(&g, &xty).ok_or(ModelError::NotPositiveDefinite)?
        } else {
            let eps = 1e-12 * x.amax().max(1.0);
            x.clone()
                .svd(true, true)
                .solve(&y, eps)
                .map_err(|e| ModelError::Parse(format!("pseudo-inverse failed: {e}")))?
        };
        let gamma = 0.5 * (&x * &beta_star - &y).norm_squared();
        Ok(Self {
            n,
            d: Some(d),
            x: Some(x),
            y: Some(y),
            g,
            beta_star,
            gamma,
            p,
            positive_definite,
        })
    }

    /// Parses the JSON instance schema: `p` plus either `X`/`y` or `G`/`beta_star`.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        match (&file.x, &file.y, &file.g) {
            (Some(x), Some(y), None) => {
                if file.gamma.is_some() {
                    return Err(ModelError::Parse(
                        "gamma is derived from X and y and must not be given".into(),
                    ));
                }
                let x = rows_to_matrix(x, "X")?;
                let inst = Self::from_design(x, DVector::from_column_slice(y), file.p)?;
                if let Some(bs) = &file.beta_star {
                    if bs.len() != inst.n {
                        return Err(ModelError::DimensionMismatch(format!(
                            "beta_star has length {}, expected {}",
                            bs.len(),
                            inst.n
                        )));
                    }
                    let given = DVector::from_column_slice(bs);
                    let xty = &inst.g * &inst.beta_star;
                    let residual = (&inst.g * &given - xty).amax();
                    if residual > 1e-10 * (1.0 + inst.g.amax() * given.amax()) {
                        return Err(ModelError::InconsistentOls(residual));
                    }
                }
                Ok(inst)
            }
            (None, None, Some(g)) => {
                let bs = file.beta_star.as_ref().ok_or_else(|| {
                    ModelError::Parse("beta_star is required together with G".into())
                })?;
                let g = rows_to_matrix(g, "G")?;
                Self::from_gram(g, DVector::from_column_slice(bs), file.p, file.gamma.unwrap_or(0.0))
            }
            _ => Err(ModelError::Parse(
                "expected either X and y, or G and beta_star".into(),
            )),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> Option<usize> {
        self.d
    }

    pub fn design(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        self.x.as_ref().zip(self.y.as_ref())
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Whether `G` admits a Cholesky factorization (required for tracing).
    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    pub fn is_identity_gram(&self, tol: f64) -> bool {
        (&self.g - DMatrix::<f64>::identity(self.n, self.n)).amax() <= tol
    }

    pub fn phi(&self, beta: &DVector<f64>) -> f64 {
        let r = beta - &self.beta_star;
        0.5 * r.dot(&(&self.g * &r)) + self.gamma
    }

    /// Full gradient `G (β − β*)`.
    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.g * (beta - &self.beta_star)
    }

    /// `∇_I φ(β)`: gradient entries on the given support.
    pub fn grad_phi(&self, beta: &DVector<f64>, support: &Support) -> DVector<f64> {
        let r = beta - &self.beta_star;
        DVector::from_iterator(
            support.len(),
            support.indices().iter().map(|&i| self.g.row(i).dot(&r.transpose())),
        )
    }

    pub fn psi_p(&self, b: f64) -> f64 {
        psi(self.p, b)
    }

    pub fn psi_p_prime(&self, b: f64) -> Result<f64, ModelError> {
        psi_prime(self.p, b)
    }

    pub fn psi_p_second(&self, b: f64) -> Result<f64, ModelError> {
        psi_second(self.p, b)
    }

    /// `F_p(β) = Σ |β_i|^p / p`.
    pub fn penalty(&self, beta: &DVector<f64>) -> f64 {
        beta.iter().map(|&b| psi(self.p, b)).sum()
    }

    /// `f_λ(β) = φ(β) + λ F_p(β)`.
    pub fn f_lambda(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        self.phi(beta) + lambda * self.penalty(beta)
    }

    /// `∇_I F_p(β)`; every support entry must be nonzero.
    pub fn grad_penalty(&self, beta: &DVector<f64>, support: &Support) -> Result<DVector<f64>, ModelError> {
        let mut out = DVector::zeros(support.len());
        for (k, &i) in support.indices().iter().enumerate() {
            out[k] = psi_prime(self.p, beta[i]).map_err(|_| ModelError::ZeroInSupport(i))?;
        }
        Ok(out)
    }

    /// `K = G_II + λ diag(ψ_p''(β_i))`, the Hessian of `f_λ` on the support.
    pub fn hessian_k(
        &self,
        beta: &DVector<f64>,
        lambda: f64,
        support: &Support,
    ) -> Result<DMatrix<f64>, ModelError> {
        let idx = support.indices();
        let mut k = self.g.select_rows(idx).select_columns(idx);
        for (a, &i) in idx.iter().enumerate() {
            let second = psi_second(self.p, beta[i]).map_err(|_| ModelError::ZeroInSupport(i))?;
            k[(a, a)] += lambda * second;
        }
        Ok(k)
    }

    /// The OLS solution `β*` (minimum-norm when `G` is singular).
    pub fn ols_solution(&self) -> DVector<f64> {
        self.beta_star.clone()
    }

    /// Minimizer of `φ` over vectors supported on `support`: solves
    /// `G_II β_I = (G β*)_I`, zeros elsewhere.
    pub fn restricted_ols(&self, support: &Support) -> Result<DVector<f64>, ModelError> {
        if support.is_empty() {
            return Ok(DVector::zeros(self.n));
        }
        let idx = support.indices();
        let block = self.g.select_rows(idx).select_columns(idx);
        let rhs = support.gather(&(&self.g * &self.beta_star));
        let sol = linalg::solve_spd(&block, &rhs).ok_or_else(|| ModelError::SingularBlock(support.clone()))?;
        Ok(support.scatter(&sol, self.n))
    }
}

fn symmetrized(g: DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let asym = (&g - g.transpose()).amax() / scale;
    if asym > 1e-12 {
        return Err(ModelError::NotSymmetric(asym));
    }
    Ok((&g + g.transpose()) * 0.5)
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    ProblemInstance::from_json_str(&text)
}

/// `ψ_p(b) = |b|^p / p`.
pub fn psi(p: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        b.abs().powf(p) / p
    }
}

/// `ψ_p'(b) = sgn(b) |b|^{-(1-p)}`, undefined at zero.
pub fn psi_prime(p: f64, b: f64) -> Result<f64, ModelError> {
    if b == 0.0 {
        return Err(ModelError::DerivativeAtZero);
    }
    Ok(b.signum() * b.abs().powf(p - 1.0))
}

/// `ψ_p''(b) = -(1-p) |b|^{-(2-p)}`, undefined at zero.
pub fn psi_second(p: f64, b: f64) -> Result<f64, ModelError> {
    if b == 0.0 {
        return Err(ModelError::DerivativeAtZero);
    }
    Ok(-(1.0 - p) * b.abs().powf(p - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ex2() -> ProblemInstance {
        ProblemInstance::from_json_str(r#"{"G": [[1,0],[0,1]], "beta_star": [2,1], "p": 0.5}"#).unwrap()
    }

    fn ex3d() -> ProblemInstance {
        ProblemInstance::from_json_str(
            r#"{"G": [[1,-0.7,-0.6],[-0.7,1,-0.1],[-0.6,-0.1,1]], "beta_star": [0.2,0.8,1], "p": 0.5}"#,
        )
        .unwrap()
    }

    #[test]
    fn loads_gram_forms() {
        assert_eq!(ex2().n(), 2);
        let one = ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#).unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(ex3d().n(), 3);
        assert_eq!(ex3d().ols_solution().as_slice(), &[0.2, 0.8, 1.0]);
        assert_eq!(ex2().ols_solution().as_slice(), &[2.0, 1.0]);
        assert_eq!(ex2().gamma(), 0.0);
    }

    #[test]
    fn loads_design_form() {
        let inst = ProblemInstance::from_json_str(r#"{"X": [[1]], "y": [3], "p": 0.5}"#).unwrap();
        assert_eq!(inst.d(), Some(1));
        assert_relative_eq!(inst.ols_solution()[0], 3.0, epsilon = 1e-14);

        let inst = ProblemInstance::from_json_str(
            r#"{"X": [[1,0],[0,2],[1,1]], "y": [1,2,3], "p": 0.7}"#,
        )
        .unwrap();
        let (x, y) = inst.design().unwrap();
        let normal = x.transpose() * x * inst.beta_star() - x.transpose() * y;
        assert!(normal.amax() < 1e-10);
        // φ agrees with ½‖Xβ − y‖² everywhere, not only up to a constant.
        let beta = DVector::from_vec(vec![0.3, -1.2]);
        assert_relative_eq!(inst.phi(&beta), 0.5 * (x * &beta - y).norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_design_uses_min_norm() {
        let inst = ProblemInstance::from_json_str(r#"{"X": [[1,1]], "y": [2], "p": 0.5}"#).unwrap();
        assert!(!inst.is_positive_definite());
        assert_relative_eq!(inst.beta_star()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(inst.beta_star()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn load_errors_are_distinct() {
        assert!(matches!(ProblemInstance::from_json_str("{"), Err(ModelError::Parse(_))));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"G": [[1,2],[2,1]], "beta_star": [1,1], "p": 0.5}"#),
            Err(ModelError::NotPositiveDefinite)
        ));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"G": [[1,0],[0,1]], "beta_star": [1], "p": 0.5}"#),
            Err(ModelError::DimensionMismatch(_))
        ));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"G": [[1,0.1],[0,1]], "beta_star": [1,1], "p": 0.5}"#),
            Err(ModelError::NotSymmetric(_))
        ));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 1.0}"#),
            Err(ModelError::InvalidExponent(_))
        ));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 0.5, "extra": 1}"#),
            Err(ModelError::Parse(_))
        ));
        assert!(matches!(
            ProblemInstance::from_json_str(r#"{"X": [[1]], "y": [3], "beta_star": [2], "p": 0.5}"#),
            Err(ModelError::InconsistentOls(_))
        ));
    }

    #[test]
    fn phi_values() {
        let inst = ex2();
        assert_eq!(inst.phi(inst.beta_star()), inst.gamma());
        assert_relative_eq!(inst.phi(&DVector::from_vec(vec![2.0, 0.0])), 0.5);
        let one = ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#).unwrap();
        assert_relative_eq!(one.phi(&DVector::zeros(1)), 0.5);
    }

    #[test]
    fn restricted_gradients() {
        let inst = ex3d();
        let g0 = inst.grad_phi(&DVector::zeros(3), &Support::full(3));
        for (got, want) in g0.iter().zip([0.96, -0.56, -0.8]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        let g = inst.grad_phi(&DVector::from_vec(vec![0.0, 0.0, 0.8]), &Support::new(vec![0, 1]));
        assert_relative_eq!(g[0], 0.48, epsilon = 1e-14);
        assert_relative_eq!(g[1], -0.64, epsilon = 1e-14);
        assert!(inst.grad_phi(inst.beta_star(), &Support::full(3)).amax() < 1e-15);
    }

    #[test]
    fn penalty_pieces() {
        assert_eq!(psi(0.5, 1.0), 2.0);
        assert_eq!(psi_prime(0.5, 1.0).unwrap(), 1.0);
        assert_eq!(psi_second(0.5, 1.0).unwrap(), -0.5);
        assert_eq!(psi(0.5, 4.0), 4.0);
        assert_eq!(psi_prime(0.5, 4.0).unwrap(), 0.5);
        assert_eq!(psi_second(0.5, 4.0).unwrap(), -0.0625);
        assert_eq!(psi_prime(0.5, -1.0).unwrap(), -1.0);
        assert!(matches!(psi_prime(0.5, 0.0), Err(ModelError::DerivativeAtZero)));
        assert!(matches!(psi_second(0.5, 0.0), Err(ModelError::DerivativeAtZero)));

        let one = ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#).unwrap();
        assert_eq!(one.penalty(one.beta_star()), 2.0);
        assert_eq!(one.penalty(&DVector::zeros(1)), 0.0);
        assert_relative_eq!(ex2().penalty(&DVector::from_vec(vec![2.0, 1.0])), 2.0 * (2f64.sqrt() + 1.0));
    }

    #[test]
    fn hessian_values() {
        let one = ProblemInstance::from_json_str(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#).unwrap();
        let b = DVector::from_vec(vec![1.0]);
        let s = Support::full(1);
        assert_eq!(one.hessian_k(&b, 0.0, &s).unwrap()[(0, 0)], 1.0);
        assert_relative_eq!(one.hessian_k(&b, 0.2, &s).unwrap()[(0, 0)], 0.9);
        let inst = ex3d();
        let k = inst.hessian_k(&DVector::from_vec(vec![0.3, -0.2, 0.5]), 0.0, &Support::full(3)).unwrap();
        assert_eq!(&k, inst.gram());
        assert!(matches!(
            inst.hessian_k(&DVector::from_vec(vec![0.0, 1.0, 1.0]), 0.1, &Support::full(3)),
            Err(ModelError::ZeroInSupport(0))
        ));
    }

    #[test]
    fn restricted_ols_solves_block() {
        let inst = ex3d();
        let b = inst.restricted_ols(&Support::new(vec![1, 2])).unwrap();
        assert_relative_eq!(b[1], 0.64 / 0.99, epsilon = 1e-14);
        assert_relative_eq!(b[2], 0.856 / 0.99, epsilon = 1e-14);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn support_serializes_one_based() {
        let s = Support::new(vec![2, 0]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        let back: Support = serde_json::from_str("[1,3]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Support>("[0]").is_err());
        assert_eq!(s.complement(4).indices(), &[1, 3]);
        assert_eq!(s.to_string(), "{1,3}");
    }
}
