use std::sync::Arc;

use gibbs_core::filters::FilterFunction;
use gibbs_core::fock::{FockBasis, Operator};
use gibbs_core::linalg::{self, CMatrix};
use gibbs_core::lindblad::{build_generator, Picture, SigmaE};
use gibbs_core::models::{self, BoseHubbardParams, Boundary, LatticeSpec, MeanFieldParams};
use gibbs_core::spectral;
use gibbs_core::thermal::{self, GibbsSource, Propagator, ThermoIntegration, TruncationModel};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let m = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = &m * m.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn mean_field(psi: f64, cutoff: usize) -> (Arc<FockBasis>, Operator, Vec<Operator>) {
    let b = FockBasis::new(1, cutoff, None).unwrap();
    let h = models::build_mean_field(&MeanFieldParams::new(0.5, 1.0, C64::new(psi, 0.0)), &b).unwrap();
    let j = models::ladder_jumps(&b).unwrap();
    (b, h, j)
}

#[test]
fn gibbs_state_matches_matrix_exponential() {
    let (_, h, _) = mean_field(0.1, 8);
    let beta = 1.7;
    let g = thermal::gibbs_state(&h, beta).unwrap();
    let e = (h.matrix() * C64::new(-beta, 0.0)).exp();
    let z = e.trace();
    assert!(linalg::max_abs(&(&e / z - &g.density)) <= 1e-10);
    assert!((g.partition_function() - z.re).abs() <= 1e-10 * z.re);
    let lse = {
        let eig = linalg::eigh(h.matrix()).unwrap();
        let m = eig.values.iter().map(|x| -beta * x).fold(f64::NEG_INFINITY, f64::max);
        m + eig.values.iter().map(|x| (-beta * x - m).exp()).sum::<f64>().ln()
    };
    assert!((thermal::exact_free_energy(&h, beta).unwrap() + lse / beta).abs() <= 1e-12);
    // sigma^{1/2} sigma^{1/2} = sigma
    let r = g.power(0.5);
    assert!(linalg::max_abs(&(&r * &r - &g.density)) <= 1e-12);
}

#[test]
fn vacuum_warm_start_is_partition_function() {
    let b = FockBasis::new(1, 14, None).unwrap();
    let h = models::number_hamiltonian(&b).unwrap();
    for beta in [0.5, 1.0, 2.0] {
        let g = thermal::gibbs_state(&h, beta).unwrap();
        let mut rho = CMatrix::zeros(15, 15);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let c = thermal::warm_start_constant(&rho, &g).unwrap();
        let z: f64 = (0..15).map(|n| (-beta * n as f64).exp()).sum();
        assert!((c - z).abs() <= 1e-10 * z, "{c} vs {z}");
    }
    // two-site regularized Bose-Hubbard: the vacuum is an eigenvector with energy 0
    let lattice = LatticeSpec::new(1, 2, Boundary::Open).unwrap();
    let params = BoseHubbardParams::regularized(0.2, 1.0, 1.5, 1.0);
    let b = FockBasis::new(2, 6, Some(6)).unwrap();
    let h = models::build_bose_hubbard(&lattice, &params, &b).unwrap();
    let g = thermal::gibbs_state(&h, 1.0).unwrap();
    let mut rho = CMatrix::zeros(b.dim(), b.dim());
    rho[(b.vacuum_index(), b.vacuum_index())] = C64::new(1.0, 0.0);
    let c = thermal::warm_start_constant(&rho, &g).unwrap();
    assert!((c - g.partition_function()).abs() <= 1e-10 * c);
}

#[test]
fn propagator_matches_dense_exponential() {
    let (_, h, jumps) = mean_field(0.1, 5);
    let f = FilterFunction::gaussian_kms(1.0, None).unwrap();
    let l = build_generator(&h, &jumps, &f, SigmaE::Finite(1.0)).unwrap();
    let prop = Propagator::new(&l).unwrap();
    assert!(!prop.uses_fallback());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rho = random_state(&mut rng, h.dim());
    for t in [0.0, 0.3, 2.5] {
        let dense = (l.matrix() * C64::new(t, 0.0)).exp();
        let want = linalg::apply_superop(&dense, &rho);
        let got = prop.evolve(&rho, t).unwrap();
        assert!(linalg::max_abs(&(got - want)) <= 1e-9, "t={t}");
    }
}

#[test]
fn trace_distance_to_gibbs_is_nonincreasing() {
    let (_, h, jumps) = mean_field(0.05, 8);
    let f = FilterFunction::metropolis(1.0).unwrap();
    let l = build_generator(&h, &jumps, &f, SigmaE::Infinite).unwrap();
    let g = thermal::gibbs_state(&h, 1.0).unwrap();
    let prop = Propagator::new(&l).unwrap();
    let mut rho = CMatrix::zeros(h.dim(), h.dim());
    rho[(3, 3)] = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..30 {
        let d = thermal::trace_distance(&prop.evolve(&rho, 0.5 * k as f64).unwrap(), &g.density).unwrap();
        assert!(d <= last + 1e-12);
        last = d;
    }
    assert!(last < 0.1);
}

#[test]
fn qou_mixing_time_respects_bound() {
    let b = FockBasis::new(1, 12, None).unwrap();
    let h = models::number_hamiltonian(&b).unwrap();
    let jumps = models::ladder_jumps(&b).unwrap();
    let f = FilterFunction::metropolis(1.0).unwrap();
    let l = build_generator(&h, &jumps, &f, SigmaE::Infinite).unwrap();
    let g = thermal::gibbs_state(&h, 1.0).unwrap();
    let gap = spectral::spectral_gap(&l.in_picture(Picture::SelfadjointHs).unwrap()).unwrap();
    let prop = Propagator::new(&l).unwrap();
    let mut rho = CMatrix::zeros(13, 13);
    rho[(0, 0)] = C64::new(1.0, 0.0);
    let c = thermal::warm_start_constant(&rho, &g).unwrap();
    for eps in [0.1, 0.01, 0.001] {
        let r = thermal::mixing_time(&prop, &g, &rho, eps, gap.gap, c).unwrap();
        assert!(r.within_bound, "{eps}: {} > {}", r.t_mix, r.bound);
        assert!((r.bound - 2.0 * (c / eps).ln() / gap.gap).abs() <= 1e-12 * r.bound);
        let at = thermal::trace_distance(&prop.evolve(&rho, r.t_mix).unwrap(), &g.density).unwrap();
        assert!(at <= eps * (1.0 + 1e-6));
    }
}

fn free_energy_instance(total: usize) -> (LatticeSpec, BoseHubbardParams, Arc<FockBasis>, Operator, Operator) {
    let lattice = LatticeSpec::new(1, 2, Boundary::Open).unwrap();
    let params = BoseHubbardParams::regularized(0.2, 1.0, 1.5, 1.0);
    let b = FockBasis::new(2, total, Some(total)).unwrap();
    let c = params.canonical();
    let h0 = Operator::hermitian(b.clone(), models::free_part(&lattice, &params, &b).unwrap(), "H_0").unwrap();
    let v = Operator::hermitian(b.clone(), models::interaction(&b, c.u, c.eta_prime), "V").unwrap();
    (lattice, params, b, h0, v)
}

#[test]
fn thermodynamic_integration_converges_to_dense_difference() {
    let (_, _, b, h0, v) = free_energy_instance(6);
    let full = Operator::hermitian(b.clone(), h0.matrix() + v.matrix(), "H").unwrap();
    let want = thermal::exact_free_energy(&full, 1.0).unwrap() - thermal::exact_free_energy(&h0, 1.0).unwrap();
    let p = ThermoIntegration {
        h0: &h0,
        v: &v,
        beta: 1.0,
        grid: 16,
        observable_cutoff: 6,
        source: GibbsSource::Exact,
        sampling: None,
        target: None,
    };
    let r = thermal::romberg_free_energy(&p, 4).unwrap();
    assert!((r - want).abs() <= 1e-6, "{r} vs {want}");
    let det = thermal::thermo_integration_estimate(&p).unwrap();
    assert!((det.exact - want).abs() <= 1e-12);
    // left Riemann sum of a decreasing integrand overshoots
    assert!(det.riemann >= r);
}

#[test]
fn quadratic_free_energy_within_tail_bound() {
    let (lattice, params, _, _, _) = free_energy_instance(2);
    let c = params.canonical();
    let b = FockBasis::new(2, 10, Some(10)).unwrap();
    let modes = models::normal_mode_transform(&lattice, c.j, c.eta, &b).unwrap();
    let h0 = Operator::hermitian(b.clone(), models::free_part(&lattice, &params, &b).unwrap(), "H_0").unwrap();
    let dense = thermal::exact_free_energy(&h0, 1.0).unwrap();
    let closed = thermal::quadratic_free_energy(&modes.energies, 1.0).unwrap();
    let bound = thermal::quadratic_tail_bound(&modes.energies, 1.0, 10).unwrap();
    assert!(dense >= closed - 1e-12);
    assert!(dense - closed <= bound, "{} > {bound}", dense - closed);
}

#[test]
fn hoeffding_shot_count() {
    // range^2 log(2/delta) / (2 eps^2) = 50 log 40 = 184.4
    assert_eq!(thermal::hoeffding_shots(1.0, 0.1, 0.05), 185);
    assert!(thermal::hoeffding_shots(2.0, 0.05, 0.05) > thermal::hoeffding_shots(2.0, 0.1, 0.05));
}

#[test]
fn superfluid_truncation_trace_distance_decays() {
    let (lattice, params, _, _, _) = free_energy_instance(2);
    let b = FockBasis::new(2, 8, Some(8)).unwrap();
    let grid: Vec<usize> = (0..=7).collect();
    let study = thermal::truncation_convergence_study(TruncationModel::Superfluid, &lattice, &params, &grid, 1.0, &b).unwrap();
    assert!(study.strictly_decreasing, "{:?}", study.points);
    let kappa = params.single_particle_gap(&lattice);
    assert!(study.fitted_slope.unwrap() <= -kappa / 4.0);
    let slope = thermal::log_slope(&[(0.0, 1.0), (1.0, (-0.5f64).exp()), (2.0, (-1.0f64).exp())], 0.0).unwrap();
    assert!((slope + 0.5).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn evolution_preserves_trace_and_positivity(seed in any::<u64>(), t in 0.0f64..20.0, psi in 0.0f64..0.1, sigma in prop::sample::select(vec![0.0, 1.0, f64::INFINITY])) {
        let (_, h, jumps) = mean_field(psi, 6);
        let f = FilterFunction::gaussian_kms(1.0, None).unwrap();
        let l = build_generator(&h, &jumps, &f, SigmaE::from_f64(sigma).unwrap()).unwrap();
        prop_assert!(l.trace_defect() <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state(&mut rng, h.dim());
        let out = thermal::evolve(&l, &rho, t).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() <= 1e-10);
        prop_assert!(linalg::hermiticity_defect(&out) <= 1e-10);
        let min = linalg::eigh(&linalg::symmetrize(&out)).unwrap().values[0];
        prop_assert!(min >= -1e-10, "{min}");
    }
}
