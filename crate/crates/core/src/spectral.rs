//! Spectral gaps and numerical audits of gap, perturbation and finite-rank
//! bounds.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::FilterFunction;
use crate::fock::{FockBasis, Operator};
use crate::lindblad::{
    self, build_generator, spectral_decompose, Derivation, GeneratorMeta, Picture, SigmaE, SuperOperator,
};
use crate::linalg::{self, CMatrix};
use crate::models::{self, MeanFieldParams};
use crate::quadrature;

/// Eigenvalues of `-L` below this (relative to `||L||`) count as kernel.
pub const KERNEL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub gap: f64,
    pub kernel_dimension: usize,
    /// Lowest eigenvalues of `-L`, ascending (at most 10).
    pub lowest: Vec<f64>,
    /// Largest eigenvalue of `L`, which should be zero.
    pub max_eigenvalue: f64,
    pub hermiticity_defect: f64,
    /// The fixed point is not unique.
    pub degenerate_kernel: bool,
    /// `lambda_2` is itself degenerate.
    pub degenerate_gap: bool,
    pub dim: usize,
}

/// Full Hermitian eigensolve of a self-adjoint generator.
pub fn spectral_gap(l: &SuperOperator) -> Result<GapReport> {
    l.require(Picture::SelfadjointHs)?;
    let m = match l.recipe() {
        Some(_) => l.eigenframe_matrix()?,
        None => l.matrix().clone(),
    };
    let hermiticity_defect = linalg::hermiticity_defect(l.matrix());
    let blocks = linalg::block_eigh(&m, 1e-15)?;
    let mut vals: Vec<f64> = linalg::block_values(&blocks).into_iter().map(|v| -v).collect();
    vals.sort_by(f64::total_cmp);
    let scale = l.scale().max(1.0);
    let tol = KERNEL_TOL * scale;
    let kernel_dimension = vals.iter().filter(|v| v.abs() <= tol).count();
    let gap = vals.get(1).copied().unwrap_or(0.0).max(0.0);
    let degenerate_gap = vals.len() > 2 && kernel_dimension <= 1 && (vals[2] - vals[1]).abs() <= tol;
    Ok(GapReport {
        gap,
        kernel_dimension,
        lowest: vals.iter().take(10).copied().collect(),
        max_eigenvalue: -vals[0],
        hermiticity_defect,
        degenerate_kernel: kernel_dimension > 1,
        degenerate_gap,
        dim: vals.len(),
    })
}

/// Gap of the `sigma_E`-weighted generator of `(H, jumps, f)` in the
/// self-adjoint picture.
pub fn generator_gap(h: &Operator, jumps: &[Operator], filter: &FilterFunction, sigma_e: SigmaE) -> Result<GapReport> {
    let l = build_generator(h, jumps, filter, sigma_e)?;
    spectral_gap(&l.in_picture(Picture::SelfadjointHs)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderBlock {
    #[serde(skip)]
    pub operator: SuperOperator,
    /// `(k, kappa_k)` for `k = 0..=2 M`.
    pub kappa: Vec<(usize, f64)>,
}

pub fn kappa(nu_plus: f64, nu_minus: f64, k: usize) -> f64 {
    0.5 * (nu_plus - nu_minus).powi(2) * k as f64 - nu_plus * (nu_minus - nu_plus)
}

/// `L_LB(x) = (nu+ - nu-)^2 (N x + x N) / 2 - nu+ (nu- - nu+) x` on one mode.
pub fn ladder_block_operator(nu_plus: f64, nu_minus: f64, basis: &Arc<FockBasis>) -> Result<LadderBlock> {
    if basis.n_modes() != 1 {
        return Err(Error::param("the ladder-block operator is single-mode"));
    }
    let d = basis.dim();
    let mut m = CMatrix::zeros(d * d, d * d);
    for n in 0..d {
        for k in 0..d {
            m[(n + d * k, n + d * k)] = C64::new(kappa(nu_plus, nu_minus, n + k), 0.0);
        }
    }
    let operator = SuperOperator::from_matrix(
        basis.clone(),
        m,
        Picture::SelfadjointHs,
        GeneratorMeta {
            sigma_e: SigmaE::Infinite,
            filter: format!("nu+={nu_plus},nu-={nu_minus}"),
            jumps: "none".into(),
            hamiltonian: "ladder-block".into(),
            beta: f64::NAN,
        },
    )?;
    let kappa = (0..2 * d - 1).map(|k| (k, kappa(nu_plus, nu_minus, k))).collect();
    Ok(LadderBlock { operator, kappa })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// Smallest eigenvalue of `L_qOU - L_LB` on the interior.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of `L_LB - L_qOU` on the interior.
    pub min_eigenvalue_reversed: f64,
    /// The same over the full truncated space.
    pub min_eigenvalue_full: f64,
    pub min_eigenvalue_reversed_full: f64,
    /// `<x, (L_qOU - L_LB) x>` at `x = |0><0|`.
    pub vacuum_form: f64,
    /// Occupation levels excluded at the top of the truncation.
    pub excluded_levels: usize,
    pub holds: bool,
    pub holds_reversed: bool,
    pub tol: f64,
}

pub const COMPARISON_TOL: f64 = 1e-8;

/// Compares the quadratic forms of two single-mode self-adjoint generators,
/// restricted to `|n><m|` with `n, m` below the top `excluded` levels.
pub fn comparison_defect(qou: &SuperOperator, lb: &SuperOperator, excluded: usize) -> Result<ComparisonReport> {
    qou.require(Picture::SelfadjointHs)?;
    lb.require(Picture::SelfadjointHs)?;
    if qou.dim() != lb.dim() || qou.basis().n_modes() != 1 {
        return Err(Error::ShapeMismatch("comparison needs two generators on one single-mode basis".into()));
    }
    let d = qou.dim();
    if excluded >= d {
        return Err(Error::param("cannot exclude every level"));
    }
    let diff = qou.matrix() - lb.matrix();
    let keep: Vec<usize> = (0..d)
        .flat_map(|k| (0..d).map(move |n| (n, k)))
        .filter(|&(n, k)| n + excluded < d && k + excluded < d)
        .map(|(n, k)| n + d * k)
        .collect();
    let sub = CMatrix::from_fn(keep.len(), keep.len(), |a, b| diff[(keep[a], keep[b])]);
    let min_of = |m: &CMatrix| -> Result<f64> {
        let v = linalg::block_values(&linalg::block_eigh(m, 1e-15)?);
        Ok(v.first().copied().unwrap_or(0.0))
    };
    let neg = |m: &CMatrix| m * C64::new(-1.0, 0.0);
    let min_eigenvalue = min_of(&sub)?;
    let min_eigenvalue_reversed = min_of(&neg(&sub))?;
    let min_eigenvalue_full = min_of(&diff)?;
    let min_eigenvalue_reversed_full = min_of(&neg(&diff))?;
    let mut x = CMatrix::zeros(d, d);
    x[(0, 0)] = C64::new(1.0, 0.0);
    let vacuum_form = linalg::hs_inner(&x, &(qou.apply(&x) - lb.apply(&x))).re;
    Ok(ComparisonReport {
        min_eigenvalue,
        min_eigenvalue_reversed,
        min_eigenvalue_full,
        min_eigenvalue_reversed_full,
        vacuum_form,
        excluded_levels: excluded,
        holds: min_eigenvalue >= -COMPARISON_TOL,
        holds_reversed: min_eigenvalue_reversed >= -COMPARISON_TOL,
        tol: COMPARISON_TOL,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Satisfied,
    Violated,
    /// `gap_base <= Delta`: the bound does not apply.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationAudit {
    pub delta: f64,
    pub delta_error: f64,
    pub gap_base: f64,
    pub gap_perturbed: f64,
    pub bound_value: f64,
    pub status: AuditStatus,
    pub satisfied: bool,
    pub half_width: f64,
    /// The quadrature had to be widened to reach its tolerance.
    pub widened: bool,
}

pub const PERTURBATION_SLACK: f64 = 1e-8;
pub const DELTA_QUADRATURE_TOL: f64 = 1e-6;

/// `Delta = sum_alpha int ||d_t - d~_t||^2 / (beta cosh(2 pi t / beta)) dt`
/// with the superoperator norm of the derivation difference. Returns
/// `(Delta, error estimate, half-width, widened)`.
pub fn dirichlet_defect(
    base: &Derivation,
    pert: &Derivation,
    beta: f64,
) -> Result<(f64, f64, f64, bool)> {
    if base.n_jumps() != pert.n_jumps() {
        return Err(Error::ShapeMismatch("derivations have different jump sets".into()));
    }
    let integrand = |t: f64| -> f64 {
        (0..base.n_jumps())
            .map(|a| {
                let (m1, m2) = base.fock_factors(a, t);
                let (p1, p2) = pert.fock_factors(a, t);
                let d1 = p1 - m1;
                let d2 = p2 - m2;
                if linalg::max_abs(&d1) == 0.0 && linalg::max_abs(&d2) == 0.0 {
                    return 0.0;
                }
                let n = d1.nrows();
                let id = CMatrix::identity(n, n);
                let sup = linalg::kron(&id, &d1) - linalg::kron(&d2.transpose(), &id);
                linalg::op_norm(&sup).powi(2)
            })
            .sum::<f64>()
            * quadrature::cosh_weight(t, beta)
    };
    let bound = 2.0 * (base.norm_bound() + pert.norm_bound());
    let mut widened = false;
    let mut tail_tol = 1e-3 * DELTA_QUADRATURE_TOL;
    let mut pieces = 400;
    loop {
        let t = quadrature::tail_cutoff(bound, beta, tail_tol);
        let r = quadrature::integrate(integrand, -t, t, 1e-3 * DELTA_QUADRATURE_TOL, 1e-9, pieces);
        let err = r.error + bound * quadrature::tail_mass(t, beta);
        if err <= DELTA_QUADRATURE_TOL {
            return Ok((r.value, err, t, widened));
        }
        if pieces >= 25_600 {
            return Err(Error::numerical(format!(
                "Delta quadrature residual {err:.3e} exceeds {DELTA_QUADRATURE_TOL:e} after widening"
            )));
        }
        widened = true;
        tail_tol /= 10.0;
        pieces *= 4;
    }
}

/// Checks `gap(L~) >= (sqrt(gap(L)) - sqrt(Delta))^2` for the `sigma_E = inf`
/// generators of two Hamiltonians sharing jumps and filter.
pub fn gap_perturbation_bound(
    h_base: &Operator,
    h_pert: &Operator,
    jumps: &[Operator],
    filter: &FilterFunction,
) -> Result<PerturbationAudit> {
    if !Arc::ptr_eq(h_base.basis(), h_pert.basis()) && h_base.basis().states() != h_pert.basis().states() {
        return Err(Error::ShapeMismatch("Hamiltonians live on different bases".into()));
    }
    let beta = filter.beta();
    let base = Derivation::new(h_base, jumps, filter, None)?;
    let pert = Derivation::new(h_pert, jumps, filter, None)?;
    let (delta, delta_error, half_width, widened) = dirichlet_defect(&base, &pert, beta)?;
    let gap_base = generator_gap(h_base, jumps, filter, SigmaE::Infinite)?.gap;
    let gap_perturbed = generator_gap(h_pert, jumps, filter, SigmaE::Infinite)?.gap;
    let bound_value = (gap_base.sqrt() - delta.sqrt()).powi(2);
    let status = if gap_base <= delta {
        AuditStatus::Inconclusive
    } else if gap_perturbed >= bound_value - PERTURBATION_SLACK {
        AuditStatus::Satisfied
    } else {
        AuditStatus::Violated
    };
    Ok(PerturbationAudit {
        delta,
        delta_error,
        gap_base,
        gap_perturbed,
        bound_value,
        status,
        satisfied: status == AuditStatus::Satisfied,
        half_width,
        widened,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct JumpRemainder {
    pub jump: String,
    #[serde(skip)]
    pub remainder: CMatrix,
    /// `||Qbar R Qbar||` (operator norm).
    pub qbar_norm: f64,
    pub norm: f64,
    pub rank: usize,
    pub rank_bound: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteRankReport {
    pub s: f64,
    pub rank_p: usize,
    /// Closest distance between perturbed `P`-sector and `Qbar`-sector levels.
    pub sector_separation: f64,
    pub jumps: Vec<JumpRemainder>,
    pub pass: bool,
}

pub const FINITE_RANK_TOL: f64 = 1e-8;
pub const RANK_THRESHOLD: f64 = 1e-8;

fn numerical_rank(m: &CMatrix, threshold: f64) -> usize {
    linalg::singular_values(m).iter().filter(|&&s| s > threshold).count()
}

/// `R_s = e^{sH} L(H) e^{-sH} - e^{sH0} L(H0) e^{-sH0}` with `H = H0 + R`,
/// where `R = P R P` and `P` commutes with `H0`; reports the block of the
/// remainder on `Qbar = I - P`.
pub fn finite_rank_remainder(
    h0: &Operator,
    p: &CMatrix,
    r: &CMatrix,
    jumps: &[Operator],
    filter: &FilterFunction,
    s: f64,
    cluster_tol: Option<f64>,
) -> Result<FiniteRankReport> {
    let d = h0.dim();
    if p.shape() != (d, d) || r.shape() != (d, d) {
        return Err(Error::ShapeMismatch("projector and perturbation must match the Hamiltonian".into()));
    }
    if linalg::max_abs(&(p * p - p)) > 1e-10 || linalg::hermiticity_defect(p) > 1e-12 {
        return Err(Error::param("P is not an orthogonal projector"));
    }
    let comm = linalg::max_abs(&(p * h0.matrix() - h0.matrix() * p));
    if comm > 1e-10 {
        return Err(Error::param(format!("[P, H0] = {comm:.3e} exceeds 1e-10")));
    }
    let leak = linalg::max_abs(&(r - p * r * p));
    if leak > 1e-12 {
        return Err(Error::param(format!("R is not supported in P: ||R - PRP|| = {leak:.3e}")));
    }
    let h = Operator::hermitian(h0.basis().clone(), h0.matrix() + r, "H0+R")?;
    let qbar = CMatrix::identity(d, d) - p;
    let spec = spectral_decompose(&h, cluster_tol)?;
    let spec0 = spectral_decompose(h0, cluster_tol)?;

    // levels of H on range(P) and range(Qbar)
    let sector_levels = |proj: &CMatrix| -> Result<Vec<f64>> {
        let eig = linalg::eigh(proj)?;
        let cols: Vec<usize> = (0..d).filter(|&j| eig.values[j] > 0.5).collect();
        let v = CMatrix::from_fn(d, cols.len(), |i, a| eig.vectors[(i, cols[a])]);
        Ok(linalg::eigh(&(v.adjoint() * h.matrix() * &v))?.values)
    };
    let ep = sector_levels(p)?;
    let eq = sector_levels(&qbar)?;
    let rank_p = ep.len();
    let sector_separation = ep
        .iter()
        .flat_map(|a| eq.iter().map(move |b| (a - b).abs()))
        .fold(f64::INFINITY, f64::min);
    if sector_separation <= spec.cluster_tol {
        return Err(Error::IllConditioned(format!(
            "a level of H on range(P) lies within {sector_separation:.3e} of a level on range(I-P); \
             jitter the perturbation (e.g. by 1e-6) to separate them"
        )));
    }
    let per_jump = jumps
        .par_iter()
        .map(|a| {
            let l = lindblad::conjugated_dressed_jump(a.matrix(), filter, &spec, s);
            let l0 = lindblad::conjugated_dressed_jump(a.matrix(), filter, &spec0, s);
            let rem = l - l0;
            let qbar_norm = linalg::op_norm(&(&qbar * &rem * &qbar));
            JumpRemainder {
                jump: a.label().to_string(),
                qbar_norm,
                norm: linalg::op_norm(&rem),
                rank: numerical_rank(&rem, RANK_THRESHOLD),
                rank_bound: 2 * rank_p,
                pass: qbar_norm <= FINITE_RANK_TOL,
                remainder: rem,
            }
        })
        .collect::<Vec<_>>();
    let pass = per_jump.iter().all(|j| j.pass && j.rank <= j.rank_bound);
    Ok(FiniteRankReport {
        s,
        rank_p,
        sector_separation,
        jumps: per_jump,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldRow {
    pub n: usize,
    pub unperturbed: f64,
    pub energy: f64,
    pub energy_deviation: f64,
    pub energy_bound: f64,
    pub vector_deviation: f64,
    pub vector_bound: f64,
    /// `min_{m != n} |E0_m - E0_n| - U (m + n + 1) / 4`, nonnegative when the
    /// separation holds.
    pub separation_margin: f64,
    pub overlap: f64,
    pub ambiguous: bool,
    pub energy_pass: bool,
    pub vector_pass: bool,
    pub separation_pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldAudit {
    pub r: f64,
    pub rows: Vec<MeanFieldRow>,
    pub pass: bool,
}

/// Ambiguity threshold for overlap matching.
pub const OVERLAP_AMBIGUITY: f64 = 1e-3;

/// Smallest `n` covered by the large-`n` perturbation bounds.
pub fn meanfield_min_level(params: &MeanFieldParams) -> usize {
    (3.0 + 4.0 * params.mu / params.u).ceil().max(0.0) as usize
}

/// Compares the eigenpairs of `H_MF` with the unperturbed `(E0_n, |n>)`.
/// Default levels run from the smallest admissible `n` to `M - 4`.
pub fn meanfield_eigen_audit(
    params: &MeanFieldParams,
    basis: &Arc<FockBasis>,
    r: Option<f64>,
    levels: Option<&[usize]>,
) -> Result<MeanFieldAudit> {
    let psi = params.psi().norm();
    if !(psi < params.u / 16.0) {
        return Err(Error::param(format!("|psi| = {psi} must be below U/16 = {}", params.u / 16.0)));
    }
    let h = models::build_mean_field(params, basis)?;
    let mt = basis.per_mode_cutoff();
    let lo = meanfield_min_level(params);
    let top = mt.checked_sub(4).ok_or_else(|| Error::param("cutoff too small for the audit margin"))?;
    let ns: Vec<usize> = match levels {
        Some(l) => l.to_vec(),
        None => (lo..=top).collect(),
    };
    if let Some(&bad) = ns.iter().find(|&&n| n < lo || n > top) {
        return Err(Error::param(format!("level {bad} is outside the admissible range {lo}..={top}")));
    }
    let r = r.unwrap_or(2.0 * psi * (1.0 + 1e-6));
    let eig = linalg::eigh(h.matrix())?;
    let d = basis.dim();
    let rows: Vec<MeanFieldRow> = ns
        .iter()
        .map(|&n| {
            let mut ov: Vec<(f64, usize)> = (0..d).map(|j| (eig.vectors[(n, j)].norm(), j)).collect();
            ov.sort_by(|a, b| b.0.total_cmp(&a.0));
            let (best, j) = ov[0];
            let ambiguous = d > 1 && best - ov[1].0 < OVERLAP_AMBIGUITY;
            let c = eig.vectors[(n, j)];
            let phase = if c.norm() > 0.0 { c.conj() / c.norm() } else { C64::new(1.0, 0.0) };
            let v = eig.vectors.column(j) * phase;
            let vector_deviation = (0..d)
                .map(|i| (v[i] - if i == n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let e0 = params.unperturbed_energy(n);
            let energy_deviation = (eig.values[j] - e0).abs();
            let energy_bound = r * ((n + 1) as f64).sqrt();
            let vector_bound = 32.0 * psi / (params.u * ((n + 1) as f64).sqrt());
            let separation_margin = (0..=mt)
                .filter(|&m| m != n)
                .map(|m| (params.unperturbed_energy(m) - e0).abs() - params.u / 4.0 * (m + n + 1) as f64)
                .fold(f64::INFINITY, f64::min);
            MeanFieldRow {
                n,
                unperturbed: e0,
                energy: eig.values[j],
                energy_deviation,
                energy_bound,
                vector_deviation,
                vector_bound,
                separation_margin,
                overlap: best,
                ambiguous,
                energy_pass: !ambiguous && (energy_deviation < energy_bound || energy_deviation == 0.0),
                vector_pass: !ambiguous && vector_deviation <= vector_bound,
                separation_pass: separation_margin >= 0.0,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.energy_pass && r.vector_pass && r.separation_pass);
    Ok(MeanFieldAudit { r, rows, pass })
}
