//! Scenario implementations. Each returns results, series, invariant checks
//! and findings; the runner in `mod.rs` wraps them into a report.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::*;
use super::report::{InvariantCheck, Series};
use crate::error::{Error, Result};
use crate::filters::{self, FilterFunction};
use crate::fock::{self, FockBasis, Operator};
use crate::lindblad::{self, build_generator, Picture, SigmaE};
use crate::linalg::{self, CMatrix};
use crate::models::{self, BoseHubbardParams, LatticeSpec, MeanFieldParams};
use crate::spectral::{self, GapReport};
use crate::thermal::{self, GibbsSource, Sampling, ThermoIntegration, TruncationModel};

/// Tolerance for fixed-point residuals, Hermiticity and the top eigenvalue.
pub const GENERATOR_TOL: f64 = 1e-8;
/// Threshold for a gap to count as positive.
pub const GAP_FLOOR: f64 = 1e-6;

#[derive(Default)]
pub struct Outcome {
    pub results: Value,
    pub series: Vec<Series>,
    pub invariants: Vec<InvariantCheck>,
    pub findings: Vec<String>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.invariants.push(InvariantCheck {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }
}

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub filter: FilterFunction,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig, base_dir: Option<&Path>) -> Result<Self> {
        Ok(Context {
            config,
            filter: config.filter.build(base_dir)?,
        })
    }

    fn beta(&self) -> f64 {
        self.filter.beta()
    }

    fn model(&self) -> &ModelConfig {
        self.config.model.as_ref().expect("validated")
    }

    fn basis(&self) -> Result<Arc<FockBasis>> {
        self.config.basis.as_ref().expect("validated").build(self.model().n_modes())
    }

    fn lattice(&self) -> Result<(LatticeSpec, BoseHubbardParams)> {
        let (l, p) = self.model().lattice_params().expect("validated");
        Ok((l.build()?, p))
    }
}

/// Hamiltonian of a model block.
pub fn build_hamiltonian(model: &ModelConfig, basis: &Arc<FockBasis>) -> Result<Operator> {
    match model {
        ModelConfig::Number { .. } => models::number_hamiltonian(basis),
        ModelConfig::MeanField { .. } => models::build_mean_field(&model.mean_field().expect("family"), basis),
        ModelConfig::BoseHubbard { lattice, params } => models::build_bose_hubbard(&lattice.build()?, params, basis),
        ModelConfig::Superfluid { lattice, params, m_prime } => {
            models::build_superfluid_truncation(&lattice.build()?, params, *m_prime, basis)
        }
        ModelConfig::Mott { lattice, params, m } => models::build_mott_truncation(&lattice.build()?, params, *m, basis),
        ModelConfig::AubryAndre { .. } => {
            Ok(models::build_aubry_andre(&model.aubry_andre().expect("family"), basis)?.hamiltonian)
        }
    }
}

/// `b_k = sum_x W[k, x] a_x` and adjoints for a mode rotation `W`.
pub fn normal_mode_jumps(rotation: &CMatrix, basis: &Arc<FockBasis>) -> Result<Vec<Operator>> {
    let n = basis.n_modes();
    let a: Vec<CMatrix> = (0..n).map(|x| fock::annihilation(basis, x)).collect::<Result<_>>()?;
    let d = basis.dim();
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let b = (0..n).fold(CMatrix::zeros(d, d), |acc, x| acc + &a[x] * rotation[(k, x)]);
        let bd = b.adjoint();
        out.push(Operator::new(basis.clone(), b, format!("b_{k}"))?);
        out.push(Operator::new(basis.clone(), bd, format!("b_{k}^dagger"))?);
    }
    Ok(out)
}

fn build_jumps(ctx: &Context<'_>, basis: &Arc<FockBasis>) -> Result<Vec<Operator>> {
    match ctx.config.generator.jumps {
        JumpSet::Ladder => models::ladder_jumps(basis),
        JumpSet::NormalModes => {
            let p = ctx.model().aubry_andre().expect("validated");
            normal_mode_jumps(&models::build_aubry_andre(&p, basis)?.rotation, basis)
        }
    }
}

/// Gap, fixed-point residual and self-adjointness data of one generator.
pub struct GeneratorAudit {
    pub gap: GapReport,
    pub residual: f64,
}

pub fn audit_generator(h: &Operator, jumps: &[Operator], filter: &FilterFunction, sigma_e: SigmaE) -> Result<GeneratorAudit> {
    let l = build_generator(h, jumps, filter, sigma_e)?;
    let g = thermal::gibbs_state(h, filter.beta())?;
    let residual = thermal::fixed_point_residual(&l, &g)?;
    let gap = spectral::spectral_gap(&l.in_picture(Picture::SelfadjointHs)?)?;
    Ok(GeneratorAudit { gap, residual })
}

fn generator_checks(out: &mut Outcome, label: &str, a: &GeneratorAudit) {
    out.check(
        format!("fixed point [{label}]"),
        a.residual <= GENERATOR_TOL,
        format!("normalized residual {:.3e}", a.residual),
    );
    out.check(
        format!("self-adjoint [{label}]"),
        a.gap.hermiticity_defect <= GENERATOR_TOL && a.gap.max_eigenvalue.abs() <= GENERATOR_TOL,
        format!(
            "Hermiticity defect {:.3e}, top eigenvalue {:.3e}",
            a.gap.hermiticity_defect, a.gap.max_eigenvalue
        ),
    );
    if a.gap.degenerate_kernel {
        out.findings
            .push(format!("[{label}] kernel dimension {}: fixed point not unique", a.gap.kernel_dimension));
    }
}

pub fn filter_audit(ctx: &Context<'_>, p: &FilterAuditParams) -> Result<Outcome> {
    let beta = ctx.beta();
    let grid = filters::symmetric_grid(p.half_width.unwrap_or(10.0 / beta), p.points.unwrap_or(401));
    let rep = filters::kms_audit(&ctx.filter, &grid)?;
    let mut out = Outcome::default();
    let mut s = Series::new("kms", &["nu", "f_re", "f_im", "kms_defect"]);
    for &nu in &grid {
        let f = ctx.filter.eval(nu);
        s.push(vec![nu, f.re, f.im, ctx.filter.kms_defect(nu)]);
    }
    out.series.push(s);
    let mut r = Series::new("rates", &["omega", "nu_plus", "nu_minus", "half_difference"]);
    for &w in &p.omegas {
        let (np, nm) = filters::birth_death_rates(&ctx.filter, w);
        r.push(vec![w, np, nm, (nm - np) / 2.0]);
    }
    out.series.push(r);
    out.check(
        "KMS condition",
        rep.pass,
        format!("max defect {:.3e} at nu = {}", rep.max_violation, rep.worst_nu),
    );
    if !rep.bounded {
        out.findings.push("filter is not bounded on the audit grid".into());
    }
    out.results = json!({ "filter": ctx.filter.id(), "kms": rep });
    Ok(out)
}

pub fn gap_vs_psi(ctx: &Context<'_>, p: &PsiSweep) -> Result<Outcome> {
    let base = ctx.model().mean_field().expect("validated");
    let basis = ctx.basis()?;
    let jumps = build_jumps(ctx, &basis)?;
    let sigma_e = ctx.config.generator.sigma_e;
    let audits = p
        .psi
        .par_iter()
        .map(|&psi| {
            let params = MeanFieldParams { psi_re: psi, psi_im: 0.0, ..base };
            let h = models::build_mean_field(&params, &basis)?;
            audit_generator(&h, &jumps, &ctx.filter, sigma_e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut s = Series::new("gap_vs_psi", &["psi", "gap", "kernel_dimension", "residual"]);
    for (&psi, a) in p.psi.iter().zip(&audits) {
        s.push(vec![psi, a.gap.gap, a.gap.kernel_dimension as f64, a.residual]);
        let label = format!("psi={psi}");
        generator_checks(&mut out, &label, a);
        out.check(format!("gap positive [{label}]"), a.gap.gap > GAP_FLOOR, format!("gap {:.6e}", a.gap.gap));
    }
    out.series.push(s);
    let mut psi_zero = Value::Null;
    if let Some(i0) = p.psi.iter().position(|&x| x == 0.0) {
        let g0 = audits[i0].gap.gap;
        let mut pairs: Vec<(f64, f64)> = p
            .psi
            .iter()
            .zip(&audits)
            .filter(|(x, _)| **x != 0.0)
            .map(|(x, a)| (x.abs(), (a.gap.gap - g0).abs()))
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let monotone = pairs.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6);
        out.check(
            "gap continuity in psi",
            monotone,
            format!("|gap(psi) - gap(0)| for decreasing |psi|: {:?}", pairs.iter().map(|p| p.1).collect::<Vec<_>>()),
        );
        if sigma_e == SigmaE::Infinite {
            let params = MeanFieldParams { psi_re: 0.0, psi_im: 0.0, ..base };
            let closed = lindblad::number_diagonal_generator(|n| params.unperturbed_energy(n), &ctx.filter, &basis)?;
            let gc = spectral::spectral_gap(&closed)?.gap;
            out.check(
                "gap(0) equals the number-diagonal closed form",
                (gc - g0).abs() <= GENERATOR_TOL,
                format!("closed form {gc:.12e}, generic {g0:.12e}"),
            );
            psi_zero = json!({ "gap0": g0, "closed_form_gap0": gc });
        } else {
            psi_zero = json!({ "gap0": g0 });
        }
    }
    out.results = json!({
        "gaps": audits.iter().map(|a| &a.gap).collect::<Vec<_>>(),
        "psi": p.psi,
        "psi_zero": psi_zero,
    });
    Ok(out)
}

fn truncated_hamiltonian(
    which: TruncationModel,
    lattice: &LatticeSpec,
    params: &BoseHubbardParams,
    level: usize,
    basis: &Arc<FockBasis>,
) -> Result<Operator> {
    match which {
        TruncationModel::Superfluid => models::build_superfluid_truncation(lattice, params, level, basis),
        TruncationModel::Mott => models::build_mott_truncation(lattice, params, level, basis),
    }
}

pub fn gap_vs_truncation(ctx: &Context<'_>, p: &TruncationSweep) -> Result<Outcome> {
    let (lattice, params) = ctx.lattice()?;
    let basis = ctx.basis()?;
    let jumps = build_jumps(ctx, &basis)?;
    let audits = p
        .levels
        .par_iter()
        .map(|&m| {
            let h = truncated_hamiltonian(p.truncation, &lattice, &params, m, &basis)?;
            audit_generator(&h, &jumps, &ctx.filter, ctx.config.generator.sigma_e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut s = Series::new("gap_vs_truncation", &["level", "n_modes", "gap", "residual"]);
    for (&m, a) in p.levels.iter().zip(&audits) {
        s.push(vec![m as f64, basis.n_modes() as f64, a.gap.gap, a.residual]);
        let label = format!("{:?} level={m}", p.truncation).to_lowercase();
        generator_checks(&mut out, &label, a);
        out.check(format!("gap positive [{label}]"), a.gap.gap > GAP_FLOOR, format!("gap {:.6e}", a.gap.gap));
    }
    out.series.push(s);
    out.findings
        .push("uniformity of the gap in the number of modes is not asserted".into());
    out.results = json!({
        "truncation": p.truncation,
        "levels": p.levels,
        "n_modes": basis.n_modes(),
        "gaps": audits.iter().map(|a| &a.gap).collect::<Vec<_>>(),
    });
    Ok(out)
}

pub fn gap_vs_sigma(ctx: &Context<'_>, p: &SigmaSweep) -> Result<Outcome> {
    let basis = ctx.basis()?;
    let h = build_hamiltonian(ctx.model(), &basis)?;
    let jumps = build_jumps(ctx, &basis)?;
    let audits = p
        .sigma_e
        .par_iter()
        .map(|&s| audit_generator(&h, &jumps, &ctx.filter, s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut s = Series::new(
        "gap_vs_sigma_e",
        &["sigma_e", "gap", "residual", "hermiticity_defect", "max_eigenvalue"],
    );
    for (sig, a) in p.sigma_e.iter().zip(&audits) {
        s.push(vec![sig.as_f64(), a.gap.gap, a.residual, a.gap.hermiticity_defect, a.gap.max_eigenvalue]);
        let label = format!("sigma_E={sig}");
        generator_checks(&mut out, &label, a);
        out.check(format!("gap positive [{label}]"), a.gap.gap > GAP_FLOOR, format!("gap {:.6e}", a.gap.gap));
    }
    out.series.push(s);
    out.results = json!({
        "hamiltonian": h.label(),
        "sigma_e": p.sigma_e,
        "gaps": audits.iter().map(|a| &a.gap).collect::<Vec<_>>(),
    });
    Ok(out)
}

pub fn ladder_block_compare(ctx: &Context<'_>, p: &LadderParams) -> Result<Outcome> {
    let basis = ctx.basis()?;
    let d = basis.dim();
    let h = models::number_hamiltonian(&basis)?;
    let jumps = models::ladder_jumps(&basis)?;
    let (nu_plus, nu_minus) = filters::birth_death_rates(&ctx.filter, 1.0);
    let lb = spectral::ladder_block_operator(nu_plus, nu_minus, &basis)?;
    let mut out = Outcome::default();

    let mut table = Series::new("kappa", &["k", "kappa", "defect"]);
    let mut worst = 0.0_f64;
    for k in 0..=p.k_max.min(2 * (d - 1)) {
        let kappa = spectral::kappa(nu_plus, nu_minus, k);
        let mut defect = 0.0_f64;
        for n in 0..d {
            if k < n || k - n >= d {
                continue;
            }
            let mut x = CMatrix::zeros(d, d);
            x[(n, k - n)] = C64::new(1.0, 0.0);
            let r = lb.operator.apply(&x) - &x * C64::new(kappa, 0.0);
            defect = defect.max(linalg::max_abs(&r));
        }
        worst = worst.max(defect);
        table.push(vec![k as f64, kappa, defect]);
    }
    out.series.push(table);
    out.check("ladder-block eigenvalue table", worst <= 1e-10, format!("max defect {worst:.3e}"));

    let l = build_generator(&h, &jumps, &ctx.filter, ctx.config.generator.sigma_e)?;
    let hs = l.in_picture(Picture::SelfadjointHs)?;
    let gap = spectral::spectral_gap(&hs)?;
    let expected = (nu_minus - nu_plus) / 2.0;
    out.check(
        "qOU gap closed form",
        (gap.gap - expected).abs() <= GENERATOR_TOL,
        format!("gap {:.12e}, (nu- - nu+)/2 = {expected:.12e}", gap.gap),
    );
    let cmp = spectral::comparison_defect(&hs, &lb.operator, p.excluded)?;
    if !cmp.holds {
        out.findings.push(format!(
            "L_qOU >= L_LB fails on the interior: min eigenvalue {:.6e}",
            cmp.min_eigenvalue
        ));
    }
    if !cmp.holds_reversed {
        out.findings.push(format!(
            "L_LB >= L_qOU fails on the interior: min eigenvalue {:.6e}",
            cmp.min_eigenvalue_reversed
        ));
    }
    let mut c = Series::new(
        "comparison",
        &["excluded", "min_eig", "min_eig_reversed", "min_eig_full", "min_eig_reversed_full", "vacuum_form"],
    );
    c.push(vec![
        p.excluded as f64,
        cmp.min_eigenvalue,
        cmp.min_eigenvalue_reversed,
        cmp.min_eigenvalue_full,
        cmp.min_eigenvalue_reversed_full,
        cmp.vacuum_form,
    ]);
    out.series.push(c);
    out.results = json!({
        "nu_plus": nu_plus,
        "nu_minus": nu_minus,
        "gap": gap,
        "kappa": lb.kappa,
        "comparison": cmp,
    });
    Ok(out)
}

pub fn finite_rank_audit(ctx: &Context<'_>, p: &FiniteRankParams) -> Result<Outcome> {
    let basis = ctx.basis()?;
    let d = basis.dim();
    let h0 = build_hamiltonian(ctx.model(), &basis)?;
    let jumps = build_jumps(ctx, &basis)?;
    let beta = ctx.beta();
    let mut out = Outcome::default();
    let mut s = Series::new("remainders", &["case", "s", "jump", "qbar_norm", "norm", "rank", "rank_bound"]);
    let mut reports = Vec::new();
    for (ci, case) in p.cases.iter().enumerate() {
        let mut proj = CMatrix::zeros(d, d);
        for &i in &case.support {
            if i >= d {
                return Err(Error::param(format!("support index {i} outside basis of dimension {d}")));
            }
            proj[(i, i)] = C64::new(1.0, 0.0);
        }
        let mut r = CMatrix::zeros(d, d);
        for &(i, j, re, im) in &case.entries {
            if i >= d || j >= d {
                return Err(Error::param(format!("entry ({i}, {j}) outside basis of dimension {d}")));
            }
            r[(i, j)] += C64::new(re, im);
        }
        let r = linalg::symmetrize(&r);
        let ss = case.s.clone().unwrap_or_else(|| vec![beta / 4.0, -beta / 4.0]);
        for sv in ss {
            let rep = spectral::finite_rank_remainder(&h0, &proj, &r, &jumps, &ctx.filter, sv, None)?;
            for (ji, j) in rep.jumps.iter().enumerate() {
                s.push(vec![ci as f64, sv, ji as f64, j.qbar_norm, j.norm, j.rank as f64, j.rank_bound as f64]);
            }
            let worst = rep.jumps.iter().map(|j| j.qbar_norm).fold(0.0, f64::max);
            out.check(
                format!("Qbar R Qbar = 0 [case {ci}, s={sv}]"),
                rep.pass,
                format!("max ||Qbar R Qbar|| {worst:.3e}, rank(P) {}", rep.rank_p),
            );
            reports.push(rep);
        }
    }
    out.series.push(s);
    out.results = json!({ "reports": reports });
    Ok(out)
}

pub fn meanfield_audit(ctx: &Context<'_>, p: &MeanFieldAuditParams) -> Result<Outcome> {
    let params = ctx.model().mean_field().expect("validated");
    let basis = ctx.basis()?;
    let audit = spectral::meanfield_eigen_audit(&params, &basis, p.r, p.levels.as_deref())?;
    let mut out = Outcome::default();
    let mut s = Series::new(
        "eigen_audit",
        &[
            "n",
            "unperturbed",
            "energy",
            "energy_deviation",
            "energy_bound",
            "vector_deviation",
            "vector_bound",
            "separation_margin",
            "overlap",
        ],
    );
    for r in &audit.rows {
        s.push(vec![
            r.n as f64,
            r.unperturbed,
            r.energy,
            r.energy_deviation,
            r.energy_bound,
            r.vector_deviation,
            r.vector_bound,
            r.separation_margin,
            r.overlap,
        ]);
        if r.ambiguous {
            out.findings.push(format!("level {}: ambiguous overlap matching", r.n));
        }
        out.check(
            format!("eigenvalue bound [n={}]", r.n),
            r.energy_pass,
            format!("{:.3e} vs {:.3e}", r.energy_deviation, r.energy_bound),
        );
        out.check(
            format!("eigenvector bound [n={}]", r.n),
            r.vector_pass,
            format!("{:.3e} vs {:.3e}", r.vector_deviation, r.vector_bound),
        );
        out.check(
            format!("unperturbed separation [n={}]", r.n),
            r.separation_pass,
            format!("margin {:.3e}", r.separation_margin),
        );
    }
    out.series.push(s);
    out.results = json!({ "audit": audit });
    Ok(out)
}

pub fn gibbs_trace_distance(ctx: &Context<'_>, p: &TraceDistanceParams) -> Result<Outcome> {
    let (lattice, params) = ctx.lattice()?;
    let basis = ctx.basis()?;
    let beta = ctx.beta();
    let study = thermal::truncation_convergence_study(p.truncation, &lattice, &params, &p.levels, beta, &basis)?;
    let mut out = Outcome::default();
    let mut s = Series::new("trace_distance", &["level", "trace_distance"]);
    for &(m, d) in &study.points {
        s.push(vec![m as f64, d]);
    }
    out.series.push(s);
    out.check(
        "trace distance strictly decreasing",
        study.strictly_decreasing,
        format!("{:?}", study.points.iter().map(|p| p.1).collect::<Vec<_>>()),
    );
    let kappa = beta * params.single_particle_gap(&lattice);
    let factor = p
        .slope_factor
        .or(if p.truncation == TruncationModel::Superfluid { Some(0.25) } else { None });
    if let Some(f) = factor {
        let target = -f * kappa;
        let ok = matches!(study.fitted_slope, Some(sl) if sl <= target);
        out.check(
            "fitted log-slope",
            ok,
            format!("slope {:?}, required <= {target:.6}", study.fitted_slope),
        );
    }
    out.findings.extend(study.findings.iter().cloned());
    out.results = json!({ "study": study, "kappa": kappa });
    Ok(out)
}

pub fn mixing(ctx: &Context<'_>, p: &MixingParams) -> Result<Outcome> {
    let basis = ctx.basis()?;
    let d = basis.dim();
    let h = build_hamiltonian(ctx.model(), &basis)?;
    let jumps = build_jumps(ctx, &basis)?;
    let l = build_generator(&h, &jumps, &ctx.filter, ctx.config.generator.sigma_e)?;
    let gibbs = thermal::gibbs_state(&h, ctx.beta())?;
    let gap = spectral::spectral_gap(&l.in_picture(Picture::SelfadjointHs)?)?;
    let prop = thermal::Propagator::new(&l)?;
    let rho = match p.initial {
        InitialState::Vacuum => {
            let mut r = CMatrix::zeros(d, d);
            r[(basis.vacuum_index(), basis.vacuum_index())] = C64::new(1.0, 0.0);
            r
        }
        InitialState::Fock { index } => {
            if index >= d {
                return Err(Error::param(format!("Fock index {index} outside basis of dimension {d}")));
            }
            let mut r = CMatrix::zeros(d, d);
            r[(index, index)] = C64::new(1.0, 0.0);
            r
        }
        InitialState::MaximallyMixed => CMatrix::identity(d, d) / C64::new(d as f64, 0.0),
    };
    let c = thermal::warm_start_constant(&rho, &gibbs)?;
    let records = p
        .epsilon
        .par_iter()
        .map(|&e| thermal::mixing_time(&prop, &gibbs, &rho, e, gap.gap, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut summary = Series::new("mixing", &["epsilon", "t_mix", "bound", "warm_start", "gap"]);
    for (i, r) in records.iter().enumerate() {
        summary.push(vec![r.epsilon, r.t_mix, r.bound, r.warm_start, r.gap]);
        let mut t = Series::new(format!("trajectory_{i}"), &["t", "trace_distance"]);
        for &(tt, dd) in &r.trajectory {
            t.push(vec![tt, dd]);
        }
        out.series.push(t);
        out.check(
            format!("mixing-time bound [eps={}]", r.epsilon),
            r.within_bound,
            format!("t_mix {:.6e} <= {:.6e}", r.t_mix, r.bound),
        );
        if !r.monotone {
            out.findings
                .push(format!("eps={}: trace distance trajectory is not monotone", r.epsilon));
        }
    }
    out.series.insert(0, summary);
    if p.initial == InitialState::Vacuum {
        let z = gibbs.partition_function() * (gibbs.beta * gibbs.energies[0]).exp();
        let e_vac = h.matrix()[(basis.vacuum_index(), basis.vacuum_index())].re;
        out.results = json!({
            "partition_function_shifted": z,
            "vacuum_energy": e_vac,
        });
    }
    let extra = json!({
        "gap": gap,
        "warm_start": c,
        "records": records,
        "propagator_fallback": prop.uses_fallback(),
    });
    merge(&mut out.results, extra);
    Ok(out)
}

fn merge(a: &mut Value, b: Value) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => x.extend(y),
        (a, b) => *a = b,
    }
}

pub fn free_energy(ctx: &Context<'_>, p: &FreeEnergyParams) -> Result<Outcome> {
    let (lattice, params) = ctx.lattice()?;
    let basis = ctx.basis()?;
    let c = params.canonical();
    let h0 = Operator::hermitian(basis.clone(), models::free_part(&lattice, &params, &basis)?, "H_0")?;
    let v = Operator::hermitian(basis.clone(), models::interaction(&basis, c.u, c.eta_prime), "V")?;
    let source = match p.source {
        SourceConfig::Exact => GibbsSource::Exact,
        SourceConfig::Superfluid { m_prime } => GibbsSource::superfluid(&lattice, &params, m_prime, &basis)?,
    };
    let base = ThermoIntegration {
        h0: &h0,
        v: &v,
        beta: ctx.beta(),
        grid: p.grid,
        observable_cutoff: p.observable_cutoff,
        source,
        sampling: None,
        target: p.target.map(|t| (t.epsilon, t.delta)),
    };
    let det = thermal::thermo_integration_estimate(&base)?;
    let mut out = Outcome::default();
    let mut pts = Series::new("integrand", &["s", "exact_trace", "estimated_trace"]);
    for &(s, a, b) in &det.points {
        pts.push(vec![s, a, b]);
    }
    out.series.push(pts);
    if let Some(tol) = p.tolerance {
        out.check(
            "deterministic estimate",
            det.error <= tol,
            format!("|{:.12e} - {:.12e}| = {:.3e} <= {tol:e}", det.estimate, det.exact, det.error),
        );
    }

    let mut convergence = Value::Null;
    if !p.convergence_grids.is_empty() {
        // discretization error against the extrapolated path integral
        let limit = thermal::romberg_free_energy(&ThermoIntegration { grid: 50, ..base.clone() }, 4)?;
        let mut grids = p.convergence_grids.clone();
        grids.sort_unstable();
        grids.dedup();
        let rows = grids
            .par_iter()
            .map(|&l| {
                let r = thermal::thermo_integration_estimate(&ThermoIntegration { grid: l, ..base.clone() })?;
                Ok((l, r.riemann, (r.riemann - limit).abs(), (r.riemann - r.exact).abs()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Series::new("error_vs_grid", &["grid", "riemann", "discretization_error", "total_error"]);
        for &(l, r, e, t) in &rows {
            s.push(vec![l as f64, r, e, t]);
        }
        out.series.push(s);
        let loglog: Vec<(f64, f64)> = rows.iter().map(|&(l, _, e, _)| ((l as f64).ln(), e)).collect();
        let slope = thermal::log_slope(&loglog, 1e-15);
        out.check(
            "discretization error is O(1/L)",
            matches!(slope, Some(s) if (s + 1.0).abs() <= 0.1),
            format!("log-log slope {slope:?}"),
        );
        convergence = json!({ "extrapolated": limit, "slope": slope });
    }

    let mut sampled = Value::Null;
    if let Some(sc) = p.sampling {
        let seed0 = sc.seed.expect("validated");
        let runs = (0..p.repeats as u64)
            .into_par_iter()
            .map(|r| {
                let run = ThermoIntegration {
                    sampling: Some(Sampling {
                        shots: sc.shots,
                        seed: Some(seed0.wrapping_add(r)),
                    }),
                    ..base.clone()
                };
                thermal::thermo_integration_estimate(&run)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Series::new("sampled", &["run", "seed", "estimate", "deviation", "envelope"]);
        let mut inside = 0usize;
        for (i, r) in runs.iter().enumerate() {
            let dev = (r.estimate - r.riemann).abs();
            let env = r.hoeffding_envelope.unwrap_or(f64::NAN);
            if dev <= env {
                inside += 1;
            }
            s.push(vec![i as f64, r.seed.unwrap_or(0) as f64, r.estimate, dev, env]);
        }
        out.series.push(s);
        let frac = inside as f64 / runs.len() as f64;
        if let Some(cov) = p.coverage {
            out.check(
                "Hoeffding coverage",
                frac >= cov,
                format!("{inside}/{} runs inside the envelope (required {cov})", runs.len()),
            );
        }
        sampled = json!({
            "runs": runs.len(),
            "inside": inside,
            "fraction": frac,
            "shots": sc.shots,
            "hoeffding_shots": runs.first().and_then(|r| r.hoeffding_shots),
            "envelope": runs.first().and_then(|r| r.hoeffding_envelope),
        });
    }
    out.results = json!({
        "deterministic": det,
        "convergence": convergence,
        "sampled": sampled,
    });
    Ok(out)
}

pub fn aubry_andre_spectrum(ctx: &Context<'_>) -> Result<Outcome> {
    let params = ctx.model().aubry_andre().expect("validated");
    let basis = ctx.basis()?;
    let sys = models::build_aubry_andre(&params, &basis)?;
    let mut out = Outcome::default();
    let mut s = Series::new("modes", &["m", "band", "k1", "energy", "half_rate_difference"]);
    let momenta = params.momenta();
    let mut predicted = f64::INFINITY;
    for (m, row) in sys.energies.iter().enumerate() {
        for (band, &e) in row.iter().enumerate() {
            let (np, nm) = filters::birth_death_rates(&ctx.filter, e);
            let g = (nm - np) / 2.0;
            predicted = predicted.min(g);
            s.push(vec![m as f64, band as f64, momenta[m], e, g]);
        }
    }
    out.series.push(s);
    out.check(
        "single-particle diagonalization",
        sys.single_particle_defect <= 1e-10,
        format!("defect {:.3e}", sys.single_particle_defect),
    );
    out.check(
        "Fock-space diagonalization",
        sys.fock_defect <= 1e-10,
        format!("defect {:.3e}", sys.fock_defect),
    );
    let jumps = build_jumps(ctx, &basis)?;
    let a = audit_generator(&sys.hamiltonian, &jumps, &ctx.filter, ctx.config.generator.sigma_e)?;
    generator_checks(&mut out, &format!("H_AA p={}", params.p), &a);
    if ctx.config.generator.jumps == JumpSet::NormalModes {
        out.check(
            "gap equals the per-mode minimum",
            (a.gap.gap - predicted).abs() <= GENERATOR_TOL,
            format!("gap {:.12e}, min (nu- - nu+)/2 = {predicted:.12e}", a.gap.gap),
        );
    } else {
        out.findings
            .push("site-local jumps: per-mode gap formula not checked (use normal_modes jumps)".into());
    }
    out.results = json!({
        "energies": sys.energies,
        "single_particle_defect": sys.single_particle_defect,
        "fock_defect": sys.fock_defect,
        "gap": a.gap,
        "predicted_gap": predicted,
        "residual": a.residual,
    });
    Ok(out)
}
