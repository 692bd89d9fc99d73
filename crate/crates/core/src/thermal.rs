//! Gibbs states, semigroup evolution, mixing times, truncation studies and
//! free-energy estimation.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FockBasis, Operator};
use crate::lindblad::{spectral_decompose, Picture, SuperOperator};
use crate::linalg::{self, CMatrix, EigenBlock, ZERO};
use crate::models::{self, BoseHubbardParams, LatticeSpec};

/// Thermal state `e^{-beta H} / Tr e^{-beta H}` with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct GibbsState {
    basis: Arc<FockBasis>,
    pub density: CMatrix,
    pub beta: f64,
    /// `log Z_beta`.
    pub log_partition: f64,
    pub energies: Vec<f64>,
    pub vectors: CMatrix,
    /// Eigenvalues of the density, aligned with `energies`.
    pub populations: Vec<f64>,
    pub label: String,
}

impl GibbsState {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn partition_function(&self) -> f64 {
        self.log_partition.exp()
    }

    /// `log` of each population, accurate where the populations underflow.
    pub fn log_populations(&self) -> Vec<f64> {
        self.energies
            .iter()
            .map(|e| -self.beta * e - self.log_partition)
            .collect()
    }

    /// `sigma^p` for real `p`.
    pub fn power(&self, p: f64) -> CMatrix {
        let lp = self.log_populations();
        let d = lp.len();
        let mut scaled = self.vectors.clone();
        for (j, l) in lp.iter().enumerate() {
            let s = (p * l).exp();
            for i in 0..d {
                scaled[(i, j)] *= s;
            }
        }
        linalg::symmetrize(&(scaled * self.vectors.adjoint()))
    }

    pub fn free_energy(&self) -> f64 {
        -self.log_partition / self.beta
    }
}

pub fn gibbs_state(h: &Operator, beta: f64) -> Result<GibbsState> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param(format!("beta must be positive, got {beta}")));
    }
    let spec = spectral_decompose(h, None)?;
    let e0 = spec.energies[0];
    let shifted: Vec<f64> = spec.energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let sum: f64 = shifted.iter().sum();
    let log_partition = -beta * e0 + sum.ln();
    let populations: Vec<f64> = shifted.iter().map(|w| w / sum).collect();
    let d = populations.len();
    let mut scaled = spec.vectors.clone();
    for (j, &p) in populations.iter().enumerate() {
        for i in 0..d {
            scaled[(i, j)] *= p;
        }
    }
    let density = linalg::symmetrize(&(scaled * spec.vectors.adjoint()));
    Ok(GibbsState {
        basis: h.basis().clone(),
        density,
        beta,
        log_partition,
        energies: spec.energies,
        vectors: spec.vectors,
        populations,
        label: h.label().to_string(),
    })
}

/// `||rho - sigma||_1` from singular values.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::ShapeMismatch("trace distance of differently sized states".into()));
    }
    Ok(linalg::trace_norm(&(rho - sigma)))
}

/// `||L(sigma)||_1 / ||L||` with `||L||` the largest column norm.
pub fn fixed_point_residual(generator: &SuperOperator, gibbs: &GibbsState) -> Result<f64> {
    generator.require(Picture::Schrodinger)?;
    let r = generator.apply(&gibbs.density);
    Ok(linalg::trace_norm(&r) / generator.scale().max(f64::MIN_POSITIVE))
}

/// Largest tolerated `sqrt(sigma_max / sigma_min)` for the spectral path.
pub const SPECTRAL_CONDITION_LIMIT: f64 = 1e8;

enum Mode {
    Spectral {
        frame: CMatrix,
        /// `sigma_i^{1/4}` up to a common factor, in the eigenframe.
        quarter: Vec<f64>,
        blocks: Vec<EigenBlock>,
    },
    Dense {
        schrodinger: CMatrix,
    },
}

/// Evolution `rho -> e^{tL} rho` of a generator.
pub struct Propagator {
    d: usize,
    mode: Mode,
    pub condition: f64,
}

impl Propagator {
    /// Diagonalizes the self-adjoint form in the Hamiltonian eigenframe. When
    /// `sigma^{-1/4}` is too ill-conditioned, or the generator has no recipe,
    /// falls back to the matrix exponential of the Schrodinger matrix.
    pub fn new(generator: &SuperOperator) -> Result<Self> {
        generator.require(Picture::Schrodinger)?;
        let d = generator.dim();
        if let Some(r) = generator.recipe() {
            let beta = r.filter.beta();
            let e = &r.spec.energies;
            let e0 = e[0];
            let spread = beta * (e[e.len() - 1] - e0) / 2.0;
            let condition = spread.exp();
            if condition <= SPECTRAL_CONDITION_LIMIT {
                let hs = generator.in_picture(Picture::SelfadjointHs)?.eigenframe_matrix()?;
                let blocks = linalg::block_eigh(&hs, 1e-13)?;
                let quarter = (0..d)
                    .map(|i| (-beta * (r.spec.level(i) - r.spec.level(0)) / 4.0).exp())
                    .collect();
                return Ok(Propagator {
                    d,
                    mode: Mode::Spectral {
                        frame: r.spec.vectors.clone(),
                        quarter,
                        blocks,
                    },
                    condition,
                });
            }
            return Ok(Propagator {
                d,
                mode: Mode::Dense {
                    schrodinger: generator.matrix().clone(),
                },
                condition,
            });
        }
        Ok(Propagator {
            d,
            mode: Mode::Dense {
                schrodinger: generator.matrix().clone(),
            },
            condition: f64::INFINITY,
        })
    }

    pub fn uses_fallback(&self) -> bool {
        matches!(self.mode, Mode::Dense { .. })
    }

    pub fn evolve(&self, rho0: &CMatrix, t: f64) -> Result<CMatrix> {
        if !(t >= 0.0) {
            return Err(Error::param(format!("evolution time must be nonnegative, got {t}")));
        }
        let d = self.d;
        if rho0.nrows() != d || rho0.ncols() != d {
            return Err(Error::ShapeMismatch("initial state has the wrong dimension".into()));
        }
        let out = match &self.mode {
            Mode::Spectral { frame, quarter, blocks } => {
                let re = frame.adjoint() * rho0 * frame;
                let x = CMatrix::from_fn(d, d, |i, j| re[(i, j)] / (quarter[i] * quarter[j]));
                let xv = linalg::vec_of(&x);
                let mut yv = linalg::CVector::zeros(d * d);
                for b in blocks {
                    let v = &b.eigen.vectors;
                    let sub = linalg::CVector::from_fn(b.indices.len(), |a, _| xv[b.indices[a]]);
                    let mut c = v.adjoint() * sub;
                    for (k, &l) in b.eigen.values.iter().enumerate() {
                        c[k] *= (l * t).exp();
                    }
                    let back = v * c;
                    for (a, &idx) in b.indices.iter().enumerate() {
                        yv[idx] = back[a];
                    }
                }
                let y = linalg::unvec(&yv, d);
                let ye = CMatrix::from_fn(d, d, |i, j| y[(i, j)] * (quarter[i] * quarter[j]));
                frame * ye * frame.adjoint()
            }
            Mode::Dense { schrodinger } => {
                let e = (schrodinger * C64::new(t, 0.0)).exp();
                linalg::unvec(&(e * linalg::vec_of(rho0)), d)
            }
        };
        Ok(linalg::symmetrize(&out))
    }
}

pub fn evolve(generator: &SuperOperator, rho0: &CMatrix, t: f64) -> Result<CMatrix> {
    Propagator::new(generator)?.evolve(rho0, t)
}

/// Smallest `c` with `rho <= c sigma`, i.e. the top eigenvalue of
/// `sigma^{-1/2} rho sigma^{-1/2}`.
pub fn warm_start_constant(rho: &CMatrix, gibbs: &GibbsState) -> Result<f64> {
    let lp = gibbs.log_populations();
    if let Some(m) = lp.iter().cloned().reduce(f64::min) {
        if m < -690.0 {
            return Err(Error::IllConditioned(format!(
                "Gibbs state is numerically rank deficient (smallest population e^{m:.1})"
            )));
        }
    }
    let v = &gibbs.vectors;
    let re = v.adjoint() * rho * v;
    let d = lp.len();
    let y = CMatrix::from_fn(d, d, |i, j| {
        let z = re[(i, j)];
        if z == ZERO {
            ZERO
        } else {
            z * (-(lp[i] + lp[j]) / 2.0).exp()
        }
    });
    let eig = linalg::eigh(&y)?;
    Ok(eig.values[d - 1])
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingRecord {
    pub epsilon: f64,
    pub t_mix: f64,
    pub bound: f64,
    pub gap: f64,
    pub warm_start: f64,
    pub initial_distance: f64,
    /// `(t, ||e^{tL} rho - sigma||_1)`.
    pub trajectory: Vec<(f64, f64)>,
    pub monotone: bool,
    pub within_bound: bool,
}

/// First time the evolved state is within `epsilon` of the Gibbs state, by
/// bracketing and bisection, together with `2 log(c / epsilon) / gap`.
pub fn mixing_time(
    propagator: &Propagator,
    gibbs: &GibbsState,
    rho: &CMatrix,
    epsilon: f64,
    gap: f64,
    warm_start: f64,
) -> Result<MixingRecord> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(gap > 0.0) {
        return Err(Error::param(format!("gap must be positive, got {gap}")));
    }
    let dist = |t: f64| -> Result<f64> { trace_distance(&propagator.evolve(rho, t)?, &gibbs.density) };
    let bound = 2.0 * (warm_start / epsilon).ln() / gap;
    let initial = dist(0.0)?;
    let t_mix = if initial <= epsilon {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, (bound.max(1.0 / gap)).max(1e-9));
        let mut guard = 0;
        while dist(hi)? > epsilon {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 80 {
                return Err(Error::numerical("mixing time bracket did not close"));
            }
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if dist(mid)? > epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let horizon = bound.max(t_mix).max(f64::MIN_POSITIVE);
    let trajectory = (0..=40)
        .map(|k| {
            let t = horizon * k as f64 / 40.0;
            dist(t).map(|v| (t, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = trajectory.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-8);
    Ok(MixingRecord {
        epsilon,
        t_mix,
        bound,
        gap,
        warm_start,
        initial_distance: initial,
        trajectory,
        monotone,
        within_bound: t_mix <= bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationModel {
    Superfluid,
    Mott,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub model: TruncationModel,
    /// Total-occupation cap of the basis holding the reference Hamiltonian.
    pub reference: String,
    pub points: Vec<(usize, f64)>,
    pub fitted_slope: Option<f64>,
    pub monotone: bool,
    pub strictly_decreasing: bool,
    pub findings: Vec<String>,
}

/// Least-squares slope of `ln y` against `x` over points with `y > floor`.
pub fn log_slope(points: &[(f64, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > floor).map(|p| (p.0, p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Trace distance between the Gibbs states of a truncation (`H_SF(M')` or
/// `H_MI(M)`) and of `H_BH` on the same basis, which stands in for the
/// untruncated model.
pub fn truncation_convergence_study(
    model: TruncationModel,
    lattice: &LatticeSpec,
    params: &BoseHubbardParams,
    grid: &[usize],
    beta: f64,
    basis: &Arc<FockBasis>,
) -> Result<ConvergenceStudy> {
    let reference = models::build_bose_hubbard(lattice, params, basis)?;
    let sigma_ref = gibbs_state(&reference, beta)?;
    let points = grid
        .par_iter()
        .map(|&m| {
            let h = match model {
                TruncationModel::Superfluid => models::build_superfluid_truncation(lattice, params, m, basis)?,
                TruncationModel::Mott => models::build_mott_truncation(lattice, params, m, basis)?,
            };
            let s = gibbs_state(&h, beta)?;
            Ok((m, trace_distance(&s.density, &sigma_ref.density)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Vec::new();
    let monotone = points.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10);
    let strictly_decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    if !monotone {
        findings.push("trace distance is not monotone in the truncation level".into());
    }
    let fit: Vec<(f64, f64)> = points.iter().map(|&(m, d)| (m as f64, d)).collect();
    let fitted_slope = log_slope(&fit, 1e-13);
    if let Some(s) = fitted_slope {
        if s >= 0.0 {
            findings.push(format!("fitted log-slope {s:.3} is not negative"));
        }
    }
    if params.single_particle_gap(lattice) <= 0.0 && model == TruncationModel::Superfluid {
        findings.push("eta - 2D|J| <= 0: the superfluid regularization is outside its gapped regime".into());
    }
    Ok(ConvergenceStudy {
        model,
        reference: format!(
            "H_BH on basis (modes={}, per-mode cutoff={}, total cutoff={:?})",
            basis.n_modes(),
            basis.per_mode_cutoff(),
            basis.total_cutoff()
        ),
        points,
        fitted_slope,
        monotone,
        strictly_decreasing,
        findings,
    })
}

/// `F = -log Tr e^{-beta H} / beta` by dense diagonalization.
pub fn exact_free_energy(h: &Operator, beta: f64) -> Result<f64> {
    Ok(gibbs_state(h, beta)?.free_energy())
}

/// `F = sum_k log(1 - e^{-beta eps_k}) / beta` for independent modes.
pub fn quadratic_free_energy(energies: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::param("beta must be positive"));
    }
    if let Some(e) = energies.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::param(format!(
            "mode energy {e} is not positive; the Gibbs state is not normalizable"
        )));
    }
    Ok(energies.iter().map(|&e| (-(-beta * e).exp()).ln_1p()).sum::<f64>() / beta)
}

/// Upper bound on `F_truncated - F` for independent modes truncated to total
/// occupation at most `total_cutoff`:
/// `-log(1 - P_tail) / beta` with
/// `P_tail <= prod_k (1 - q_k) sum_{T > N} C(T + K - 1, K - 1) q_max^T`.
pub fn quadratic_tail_bound(energies: &[f64], beta: f64, total_cutoff: usize) -> Result<f64> {
    quadratic_free_energy(energies, beta)?;
    let k = energies.len();
    let q: Vec<f64> = energies.iter().map(|e| (-beta * e).exp()).collect();
    let qmax = q.iter().cloned().fold(0.0, f64::max);
    let norm: f64 = q.iter().map(|x| 1.0 - x).product();
    // log C(T+K-1, K-1) + T log q_max, summed until the terms are negligible
    let log_binom = |t: usize| -> f64 {
        (1..k).map(|j| ((t + j) as f64).ln() - (j as f64).ln()).sum()
    };
    let mut tail = 0.0;
    let mut t = total_cutoff + 1;
    loop {
        let term = (log_binom(t) + t as f64 * qmax.ln()).exp();
        tail += term;
        if term <= 1e-18 * tail || t > total_cutoff + 100_000 {
            break;
        }
        t += 1;
    }
    let p = (norm * tail).min(1.0);
    if p >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(-p).ln_1p() / beta)
}

/// Source of the Gibbs states along the integration path.
#[derive(Clone, Debug)]
pub enum GibbsSource {
    /// `H(s) = H_0 + s V`.
    Exact,
    /// `H(s) = H_0 + s Pi V Pi` for a projector `Pi`.
    Projected { projector: Arc<CMatrix>, label: String },
}

impl GibbsSource {
    /// Superfluid regularization `Pi = Pi^b_{M'}`.
    pub fn superfluid(lattice: &LatticeSpec, params: &BoseHubbardParams, m_prime: usize, basis: &Arc<FockBasis>) -> Result<Self> {
        let c = params.canonical();
        let modes = models::normal_mode_transform(lattice, c.j, c.eta, basis)?;
        let p = models::normal_mode_projector(&modes, basis, m_prime)?;
        Ok(GibbsSource::Projected {
            projector: Arc::new(p),
            label: format!("SF(M'={m_prime})"),
        })
    }

    pub fn label(&self) -> String {
        match self {
            GibbsSource::Exact => "exact".into(),
            GibbsSource::Projected { label, .. } => label.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sampling {
    pub shots: u64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct ThermoIntegration<'a> {
    pub h0: &'a Operator,
    pub v: &'a Operator,
    pub beta: f64,
    pub grid: usize,
    /// Per-mode truncation `M` of the observable `H_M = Pi^a_M V Pi^a_M`.
    pub observable_cutoff: usize,
    pub source: GibbsSource,
    pub sampling: Option<Sampling>,
    /// `(epsilon, delta)` target used for the Hoeffding shot count.
    pub target: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergyResult {
    pub estimate: f64,
    /// `F(H_0 + V) - F(H_0)` by dense diagonalization.
    pub exact: f64,
    pub error: f64,
    /// Riemann sum of the exact traces along the configured path.
    pub riemann: f64,
    pub grid: usize,
    pub observable_cutoff: usize,
    pub source: String,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    /// Range `b - a` of the observable's spectrum.
    pub observable_range: f64,
    pub hoeffding_shots: Option<u64>,
    /// Half-width of the Hoeffding interval of the sampled estimate at the
    /// target confidence.
    pub hoeffding_envelope: Option<f64>,
    /// `(s_k, exact trace, estimated trace)`.
    pub points: Vec<(f64, f64, f64)>,
}

/// Shots needed for `|mean - E| <= epsilon` with probability `1 - delta`.
pub fn hoeffding_shots(range: f64, epsilon: f64, delta: f64) -> u64 {
    (range * range * (2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

fn path_hamiltonian(p: &ThermoIntegration<'_>, s: f64) -> Result<Operator> {
    let m = match &p.source {
        GibbsSource::Exact => p.h0.matrix() + p.v.matrix() * C64::new(s, 0.0),
        GibbsSource::Projected { projector, .. } => {
            p.h0.matrix() + projector.as_ref() * p.v.matrix() * projector.as_ref() * C64::new(s, 0.0)
        }
    };
    Operator::hermitian(p.h0.basis().clone(), linalg::symmetrize(&m), format!("H({s})"))
}

/// Multinomial counts over `probs` by sequential binomial draws.
fn multinomial(rng: &mut ChaCha8Rng, shots: u64, probs: &[f64]) -> Result<Vec<u64>> {
    let mut left = shots;
    let mut mass = 1.0_f64;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || i + 1 == probs.len() {
            out.push(left);
            left = 0;
            continue;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let k = Binomial::new(left, q)
            .map_err(|e| Error::numerical(format!("binomial sampler: {e}")))?
            .sample(rng);
        out.push(k);
        left -= k;
        mass -= p;
    }
    Ok(out)
}

/// Left Riemann sum `(1/L) sum_k Tr(sigma(H(k/L)) H_M)` of the free-energy
/// derivative, optionally replacing each trace by the empirical mean of
/// computational-basis samples.
pub fn thermo_integration_estimate(p: &ThermoIntegration<'_>) -> Result<FreeEnergyResult> {
    if p.grid == 0 {
        return Err(Error::param("grid size must be at least 1"));
    }
    if p.observable_cutoff > p.h0.basis().per_mode_cutoff() {
        return Err(Error::param(format!(
            "observable cutoff {} exceeds the basis cutoff {}",
            p.observable_cutoff,
            p.h0.basis().per_mode_cutoff()
        )));
    }
    if let Some(s) = p.sampling {
        if s.seed.is_none() {
            return Err(Error::Config("sampling requires a seed".into()));
        }
        if s.shots == 0 {
            return Err(Error::param("sampling requires at least one shot"));
        }
    }
    let basis = p.h0.basis().clone();
    let proj = fock::per_mode_projector(&basis, p.observable_cutoff);
    let hm = &proj * p.v.matrix() * &proj;
    let diag: Vec<f64> = (0..basis.dim()).map(|i| hm[(i, i)].re).collect();
    let mut off = hm.clone();
    off.fill_diagonal(ZERO);
    if linalg::max_abs(&off) > 1e-12 * linalg::max_abs(&hm).max(1.0) {
        return Err(Error::param("sampling needs an observable diagonal in the Fock basis"));
    }
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;

    let l = p.grid;
    let points = (0..l)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 / l as f64;
            let g = gibbs_state(&path_hamiltonian(p, s)?, p.beta)?;
            let probs: Vec<f64> = (0..basis.dim()).map(|i| g.density[(i, i)].re.max(0.0)).collect();
            let exact: f64 = probs.iter().zip(&diag).map(|(a, b)| a * b).sum();
            let est = match p.sampling {
                None => exact,
                Some(sm) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(sm.seed.expect("checked"));
                    rng.set_stream(k as u64);
                    let total: f64 = probs.iter().sum();
                    let normed: Vec<f64> = probs.iter().map(|x| x / total).collect();
                    let counts = multinomial(&mut rng, sm.shots, &normed)?;
                    counts.iter().zip(&diag).map(|(&c, &h)| c as f64 * h).sum::<f64>() / sm.shots as f64
                }
            };
            Ok((s, exact, est))
        })
        .collect::<Result<Vec<_>>>()?;
    let riemann = points.iter().map(|x| x.1).sum::<f64>() / l as f64;
    let estimate = points.iter().map(|x| x.2).sum::<f64>() / l as f64;
    let h1 = Operator::hermitian(basis.clone(), p.h0.matrix() + p.v.matrix(), "H_0 + V")?;
    let exact = exact_free_energy(&h1, p.beta)? - exact_free_energy(p.h0, p.beta)?;
    let (hoeffding_shots_v, envelope) = match p.target {
        Some((eps, delta)) => {
            let n = hoeffding_shots(range, eps, delta);
            let env = p
                .sampling
                .map(|s| range * ((2.0 / delta).ln() / (2.0 * l as f64 * s.shots as f64)).sqrt());
            (Some(n), env)
        }
        None => (None, None),
    };
    Ok(FreeEnergyResult {
        estimate,
        exact,
        error: (estimate - exact).abs(),
        riemann,
        grid: l,
        observable_cutoff: p.observable_cutoff,
        source: p.source.label(),
        shots: p.sampling.map(|s| s.shots),
        seed: p.sampling.and_then(|s| s.seed),
        observable_range: range,
        hoeffding_shots: hoeffding_shots_v,
        hoeffding_envelope: envelope,
        points,
    })
}

/// Richardson extrapolation of deterministic left Riemann sums on grids
/// `L, 2L, ..., 2^levels L`.
pub fn romberg_free_energy(p: &ThermoIntegration<'_>, levels: usize) -> Result<f64> {
    let mut row: Vec<f64> = Vec::new();
    for j in 0..=levels {
        let mut q = p.clone();
        q.grid = p.grid << j;
        q.sampling = None;
        row.push(thermo_integration_estimate(&q)?.riemann);
    }
    // error expansion in powers of 1/L
    let mut table = row;
    let mut factor = 2.0;
    while table.len() > 1 {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 2.0;
    }
    Ok(table[0])
}
