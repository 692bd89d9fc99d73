//! Filter functions and the KMS audit.

use std::fmt;
use std::io::Read;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// KMS audit tolerance, relative to `max(1, |f(nu)|)`.
pub const KMS_TOL: f64 = 1e-12;

/// Tabulated filter `(nu, re, im)` with linear interpolation, clamped to the
/// end values outside the table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedFilter {
    nu: Vec<f64>,
    values: Vec<C64>,
}

impl TabulatedFilter {
    pub fn new(mut rows: Vec<(f64, C64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::param("tabulated filter needs at least one row"));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("tabulated filter has duplicate nu values"));
        }
        Ok(TabulatedFilter {
            nu: rows.iter().map(|r| r.0).collect(),
            values: rows.iter().map(|r| r.1).collect(),
        })
    }

    /// Parses `nu,re,im` lines; blank lines, `#` comments and one non-numeric
    /// header line are skipped.
    pub fn from_csv(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => rows.push((v[0], C64::new(v[1], v[2]))),
                Err(_) if rows.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::param(format!(
                        "filter table line {}: expected 'nu,re,im', got '{line}'",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(rows)
    }

    pub fn eval(&self, nu: f64) -> C64 {
        let n = self.nu.len();
        if nu <= self.nu[0] {
            return self.values[0];
        }
        if nu >= self.nu[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nu.partition_point(|&x| x <= nu);
        let (x0, x1) = (self.nu[k - 1], self.nu[k]);
        let w = (nu - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }
}

#[derive(Clone)]
pub enum FilterKind {
    Metropolis,
    /// `exp(-beta nu / 4 - nu^2 / (4 sigma^2))`.
    GaussianKms { width: f64 },
    Tabulated(Arc<TabulatedFilter>),
    Function(Arc<dyn Fn(f64) -> C64 + Send + Sync>),
}

impl fmt::Debug for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::Metropolis => write!(f, "Metropolis"),
            FilterKind::GaussianKms { width } => write!(f, "GaussianKms {{ width: {width} }}"),
            FilterKind::Tabulated(t) => write!(f, "Tabulated({} rows)", t.nu.len()),
            FilterKind::Function(_) => write!(f, "Function"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterFunction {
    kind: FilterKind,
    beta: f64,
    id: String,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

impl FilterFunction {
    pub fn metropolis(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(FilterFunction {
            kind: FilterKind::Metropolis,
            beta,
            id: format!("metropolis(beta={beta})"),
        })
    }

    /// Gaussian KMS filter; `width` defaults to `1 / beta`.
    pub fn gaussian_kms(beta: f64, width: Option<f64>) -> Result<Self> {
        check_beta(beta)?;
        let width = width.unwrap_or(1.0 / beta);
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param(format!("filter width must be positive, got {width}")));
        }
        Ok(FilterFunction {
            kind: FilterKind::GaussianKms { width },
            beta,
            id: format!("gaussian_kms(beta={beta},width={width})"),
        })
    }

    pub fn tabulated(beta: f64, table: TabulatedFilter, label: impl Into<String>) -> Result<Self> {
        check_beta(beta)?;
        Ok(FilterFunction {
            kind: FilterKind::Tabulated(Arc::new(table)),
            beta,
            id: format!("custom:{}", label.into()),
        })
    }

    pub fn custom(beta: f64, f: impl Fn(f64) -> C64 + Send + Sync + 'static, label: impl Into<String>) -> Result<Self> {
        check_beta(beta)?;
        Ok(FilterFunction {
            kind: FilterKind::Function(Arc::new(f)),
            beta,
            id: format!("custom:{}", label.into()),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &FilterKind {
        &self.kind
    }

    pub fn eval(&self, nu: f64) -> C64 {
        self.eval_scaled(nu, 0.0)
    }

    /// `f(nu) * exp(s nu)`, evaluated in log space for the built-in families
    /// so that large `|nu|` neither overflows nor underflows prematurely.
    pub fn eval_scaled(&self, nu: f64, s: f64) -> C64 {
        let b = self.beta;
        match &self.kind {
            FilterKind::Metropolis => {
                let x = b * nu;
                C64::new((-((1.0 + x * x).sqrt() + x) / 4.0 + s * nu).exp(), 0.0)
            }
            FilterKind::GaussianKms { width } => {
                C64::new((-b * nu / 4.0 - nu * nu / (4.0 * width * width) + s * nu).exp(), 0.0)
            }
            FilterKind::Tabulated(t) => t.eval(nu) * (s * nu).exp(),
            FilterKind::Function(f) => f(nu) * (s * nu).exp(),
        }
    }

    /// `|conj(f(nu)) - f(-nu) exp(-beta nu / 2)| / max(1, |f(nu)|)`.
    pub fn kms_defect(&self, nu: f64) -> f64 {
        let f = self.eval(nu);
        let lhs = f.conj();
        let rhs = self.eval_scaled(-nu, self.beta / 2.0);
        (lhs - rhs).norm() / f.norm().max(1.0)
    }
}

/// Default audit grid: 401 points on `[-10/beta, 10/beta]`.
pub fn default_grid(beta: f64) -> Vec<f64> {
    symmetric_grid(10.0 / beta, 401)
}

pub fn symmetric_grid(half_width: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    let h = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|i| -half_width + h * i as f64).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct KmsReport {
    pub max_violation: f64,
    pub worst_nu: f64,
    pub pass: bool,
    pub sup_abs: f64,
    pub sup_weighted: f64,
    pub bounded: bool,
    pub grid_points: usize,
}

/// KMS and boundedness audit on `grid`.
pub fn kms_audit(filter: &FilterFunction, grid: &[f64]) -> Result<KmsReport> {
    if grid.is_empty() {
        return Err(Error::param("KMS audit grid is empty"));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let scale = sorted.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    for i in 0..n {
        if (sorted[i] + sorted[n - 1 - i]).abs() > 1e-12 * scale {
            return Err(Error::param("KMS audit grid must be symmetric about 0"));
        }
    }
    let mut worst = (0.0_f64, sorted[0]);
    let (mut sup_abs, mut sup_weighted) = (0.0_f64, 0.0_f64);
    for &nu in &sorted {
        let d = filter.kms_defect(nu);
        if d > worst.0 || d.is_nan() {
            worst = (d, nu);
        }
        sup_abs = sup_abs.max(filter.eval(nu).norm());
        sup_weighted = sup_weighted.max(filter.eval_scaled(nu, filter.beta / 2.0).norm());
    }
    let bounded = sup_abs.is_finite() && sup_weighted.is_finite();
    Ok(KmsReport {
        max_violation: worst.0,
        worst_nu: worst.1,
        pass: worst.0 <= KMS_TOL && bounded,
        sup_abs,
        sup_weighted,
        bounded,
        grid_points: n,
    })
}

/// Rates `(|f(omega)|^2, |f(-omega)|^2)`.
pub fn birth_death_rates(filter: &FilterFunction, omega: f64) -> (f64, f64) {
    (filter.eval(omega).norm_sqr(), filter.eval(-omega).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metropolis_values() {
        let f = FilterFunction::metropolis(1.0).unwrap();
        assert!((f.eval(0.0).re - (-0.25f64).exp()).abs() < 1e-15);
        let s2 = 2f64.sqrt();
        assert!((f.eval(1.0).norm_sqr() - (-(s2 + 1.0) / 2.0).exp()).abs() < 1e-15);
        assert!((f.eval(-1.0).norm_sqr() - (-(s2 - 1.0) / 2.0).exp()).abs() < 1e-15);
        let (p, m) = birth_death_rates(&f, 1.0);
        assert!((p - 0.299061).abs() < 1e-6 && (m - 0.812933).abs() < 1e-6);
        assert!((p / m - (-1.0f64).exp()).abs() < 1e-14);
        let (p0, m0) = birth_death_rates(&f, 0.0);
        assert_eq!(p0, m0);
    }

    #[test]
    fn gaussian_ratio() {
        for (beta, w) in [(1.0, 1.0), (2.0, 0.3), (0.5, 4.0)] {
            let f = FilterFunction::gaussian_kms(beta, Some(w)).unwrap();
            for nu in [-2.0, -0.3, 0.7, 3.0] {
                let r = f.eval(nu).re / f.eval(-nu).re;
                assert!((r / (-beta * nu / 2.0).exp() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn audits() {
        let grid: Vec<f64> = (-50..=50).map(|k| k as f64 * 0.1).collect();
        let m = FilterFunction::metropolis(1.0).unwrap();
        assert!(kms_audit(&m, &grid).unwrap().pass);
        let g = FilterFunction::gaussian_kms(1.3, None).unwrap();
        assert!(kms_audit(&g, &default_grid(1.3)).unwrap().pass);
        let c = FilterFunction::custom(1.0, |_| C64::new(1.0, 0.0), "one").unwrap();
        let rep = kms_audit(&c, &grid).unwrap();
        assert!(!rep.pass);
        assert!((c.kms_defect(5.0) - (1.0 - (-2.5f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_grid_rejected() {
        let m = FilterFunction::metropolis(1.0).unwrap();
        assert!(kms_audit(&m, &[0.0, 1.0]).is_err());
        assert!(kms_audit(&m, &[]).is_err());
    }

    #[test]
    fn tabulated_from_csv() {
        let csv = "nu,re,im\n-1,2,0\n1,0,1\n";
        let t = TabulatedFilter::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.eval(0.0), C64::new(1.0, 0.5));
        assert_eq!(t.eval(-3.0), C64::new(2.0, 0.0));
        assert!(TabulatedFilter::from_csv("1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn tabulated_metropolis_passes_on_nodes() {
        let m = FilterFunction::metropolis(1.0).unwrap();
        let rows = symmetric_grid(5.0, 101).into_iter().map(|nu| (nu, m.eval(nu))).collect();
        let t = FilterFunction::tabulated(1.0, TabulatedFilter::new(rows).unwrap(), "table").unwrap();
        assert!(kms_audit(&t, &symmetric_grid(5.0, 101)).unwrap().pass);
    }
}
