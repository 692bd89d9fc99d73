//! Hamiltonian families: Bose-Hubbard and its two regularizations, the
//! single-site mean-field model, normal modes and the Aubry-Andre lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FockBasis, LadderKind, Operator};
use crate::linalg::{self, CMatrix, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Hypercubic lattice `[0, L)^D`. Site `x` has index `sum_mu x_mu L^mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub dim: usize,
    pub side: usize,
    pub boundary: Boundary,
    pub sites: Vec<Vec<usize>>,
    pub bonds: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn new(dim: usize, side: usize, boundary: Boundary) -> Result<Self> {
        if dim == 0 || side == 0 {
            return Err(Error::param("lattice dimension and side must be positive"));
        }
        let n = side
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::param("lattice too large"))?;
        let sites: Vec<Vec<usize>> = (0..n)
            .map(|mut i| {
                (0..dim)
                    .map(|_| {
                        let c = i % side;
                        i /= side;
                        c
                    })
                    .collect()
            })
            .collect();
        let index = |x: &[usize]| x.iter().rev().fold(0, |acc, &c| acc * side + c);
        let mut bonds = Vec::new();
        for (i, x) in sites.iter().enumerate() {
            for mu in 0..dim {
                let mut y = x.clone();
                if x[mu] + 1 < side {
                    y[mu] += 1;
                } else if boundary == Boundary::Periodic && side > 1 {
                    y[mu] = 0;
                } else {
                    continue;
                }
                let j = index(&y);
                let pair = (i.min(j), i.max(j));
                if i != j && !bonds.contains(&pair) {
                    bonds.push(pair);
                }
            }
        }
        bonds.sort_unstable();
        Ok(LatticeSpec {
            dim,
            side,
            boundary,
            sites,
            bonds,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Single-particle hopping matrix `-J * adjacency`.
    pub fn hopping_matrix(&self, j: f64) -> CMatrix {
        let n = self.n_sites();
        let mut h = CMatrix::zeros(n, n);
        for &(a, b) in &self.bonds {
            h[(a, b)] -= C64::new(j, 0.0);
            h[(b, a)] -= C64::new(j, 0.0);
        }
        h
    }
}

/// Chemical-potential form `(U/2) sum (N^2 - N) - mu N` or the form
/// `eta N + (U/2) sum (N^2 - eta' N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Parametrization {
    ChemicalPotential { mu: f64 },
    Regularized { eta: f64, eta_prime: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoseHubbardParams {
    pub j: f64,
    pub u: f64,
    pub parametrization: Parametrization,
}

/// `(J, U, eta, eta')`, the internal canonical form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalParams {
    pub j: f64,
    pub u: f64,
    pub eta: f64,
    pub eta_prime: f64,
}

impl BoseHubbardParams {
    pub fn with_mu(j: f64, u: f64, mu: f64) -> Self {
        BoseHubbardParams {
            j,
            u,
            parametrization: Parametrization::ChemicalPotential { mu },
        }
    }

    pub fn regularized(j: f64, u: f64, eta: f64, eta_prime: f64) -> Self {
        BoseHubbardParams {
            j,
            u,
            parametrization: Parametrization::Regularized { eta, eta_prime },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0) {
            return Err(Error::param(format!("U must be positive, got {}", self.u)));
        }
        Ok(())
    }

    pub fn canonical(&self) -> CanonicalParams {
        match self.parametrization {
            Parametrization::ChemicalPotential { mu } => CanonicalParams {
                j: self.j,
                u: self.u,
                eta: -mu,
                eta_prime: 1.0,
            },
            Parametrization::Regularized { eta, eta_prime } => CanonicalParams {
                j: self.j,
                u: self.u,
                eta,
                eta_prime,
            },
        }
    }

    pub fn to_regularized(&self) -> Self {
        let c = self.canonical();
        Self::regularized(c.j, c.u, c.eta, c.eta_prime)
    }

    /// Back to the chemical-potential form; only possible when `eta' = 1`.
    pub fn to_chemical_potential(&self) -> Result<Self> {
        let c = self.canonical();
        if c.eta_prime != 1.0 {
            return Err(Error::param(format!(
                "eta' = {} has no chemical-potential equivalent",
                c.eta_prime
            )));
        }
        Ok(Self::with_mu(c.j, c.u, -c.eta))
    }

    /// `kappa / beta = eta - 2 D |J|`, positive in the regime where the
    /// superfluid truncation has a normalizable Gibbs state uniformly in the cutoff.
    pub fn single_particle_gap(&self, lattice: &LatticeSpec) -> f64 {
        let c = self.canonical();
        c.eta - 2.0 * lattice.dim as f64 * c.j.abs()
    }
}

fn check_modes(lattice: &LatticeSpec, basis: &FockBasis) -> Result<()> {
    if basis.n_modes() != lattice.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "basis has {} modes but lattice has {} sites",
            basis.n_modes(),
            lattice.n_sites()
        )));
    }
    Ok(())
}

/// Second-quantized `sum_{x,y} h[x,y] a_x^dagger a_y` on the truncated basis.
pub fn quadratic_operator(h: &CMatrix, basis: &FockBasis) -> Result<CMatrix> {
    let n = basis.n_modes();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "single-particle matrix is {}x{}, basis has {n} modes",
            h.nrows(),
            h.ncols()
        )));
    }
    let d = basis.dim();
    let mut out = CMatrix::zeros(d, d);
    let mut moved = vec![0u16; n];
    for (col, state) in basis.states().iter().enumerate() {
        for y in 0..n {
            let ny = state[y];
            if ny == 0 {
                continue;
            }
            for x in 0..n {
                let hxy = h[(x, y)];
                if hxy == ZERO {
                    continue;
                }
                moved.copy_from_slice(state);
                moved[y] -= 1;
                moved[x] += 1;
                if let Some(row) = basis.index_of(&moved) {
                    let amp = (ny as f64 * moved[x] as f64).sqrt();
                    out[(row, col)] += hxy * amp;
                }
            }
        }
    }
    Ok(out)
}

/// Diagonal `(U/2) sum_i (N_i^2 - eta' N_i)`.
pub fn interaction(basis: &FockBasis, u: f64, eta_prime: f64) -> CMatrix {
    let v: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| {
            s.iter()
                .map(|&n| {
                    let n = n as f64;
                    0.5 * u * (n * n - eta_prime * n)
                })
                .sum()
        })
        .collect();
    linalg::diag(&v)
}

/// Quadratic part `H_0 = -J sum_<ij> (a_i^dagger a_j + h.c.) + eta N`.
pub fn free_part(lattice: &LatticeSpec, params: &BoseHubbardParams, basis: &FockBasis) -> Result<CMatrix> {
    check_modes(lattice, basis)?;
    let c = params.canonical();
    let mut h = lattice.hopping_matrix(c.j);
    for i in 0..lattice.n_sites() {
        h[(i, i)] += C64::new(c.eta, 0.0);
    }
    quadratic_operator(&h, basis)
}

pub fn build_bose_hubbard(
    lattice: &LatticeSpec,
    params: &BoseHubbardParams,
    basis: &Arc<FockBasis>,
) -> Result<Operator> {
    params.validate()?;
    let c = params.canonical();
    let h = free_part(lattice, params, basis)? + interaction(basis, c.u, c.eta_prime);
    Operator::hermitian(basis.clone(), h, "H_BH")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldParams {
    pub mu: f64,
    pub u: f64,
    #[serde(default)]
    pub psi_re: f64,
    #[serde(default)]
    pub psi_im: f64,
}

impl MeanFieldParams {
    pub fn new(mu: f64, u: f64, psi: C64) -> Self {
        MeanFieldParams {
            mu,
            u,
            psi_re: psi.re,
            psi_im: psi.im,
        }
    }

    pub fn psi(&self) -> C64 {
        C64::new(self.psi_re, self.psi_im)
    }

    /// Unperturbed level `E_n^(0) = -mu n + (U/2) n (n-1) + |psi|^2`.
    pub fn unperturbed_energy(&self, n: usize) -> f64 {
        let n = n as f64;
        -self.mu * n + 0.5 * self.u * n * (n - 1.0) + self.psi().norm_sqr()
    }
}

/// `-mu N + U N(N-1)/2 - conj(psi) a - psi a^dagger + |psi|^2` on one mode.
pub fn build_mean_field(params: &MeanFieldParams, basis: &Arc<FockBasis>) -> Result<Operator> {
    if basis.n_modes() != 1 {
        return Err(Error::param("mean-field model needs a single-mode basis"));
    }
    if !(params.u > 0.0) {
        return Err(Error::param("U must be positive"));
    }
    let diag: Vec<f64> = (0..basis.dim()).map(|n| params.unperturbed_energy(n)).collect();
    let a = fock::annihilation(basis, 0)?;
    let psi = params.psi();
    let h = linalg::diag(&diag) - &a * psi.conj() - a.adjoint() * psi;
    Operator::hermitian(basis.clone(), h, "H_MF")
}

/// Open-boundary normal modes of the quadratic part.
#[derive(Clone, Debug)]
pub struct NormalModeSystem {
    /// `phi[(k, x)]`, real orthonormal rows.
    pub phi: DMatrix<f64>,
    /// Multi-index `(k_1, ..., k_D)`, each in `1..=L`.
    pub labels: Vec<Vec<usize>>,
    pub energies: Vec<f64>,
    /// Annihilators `b_k = sum_x phi_k(x) a_x`.
    pub b: Vec<CMatrix>,
    n_sites: usize,
    lambda: Vec<f64>,
}

impl NormalModeSystem {
    pub fn n_modes(&self) -> usize {
        self.energies.len()
    }

    /// `Lambda_{kqrs} = sum_x phi_k(x) phi_q(x) phi_r(x) phi_s(x)`.
    pub fn lambda(&self, k: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_sites;
        self.lambda[((k * n + q) * n + r) * n + s]
    }

    pub fn number_operator(&self, basis: &Arc<FockBasis>, k: usize) -> Result<Operator> {
        let b = &self.b[k];
        Operator::hermitian(basis.clone(), b.adjoint() * b, format!("N^b_{k}"))
    }

    /// `sum_k eps_k b_k^dagger b_k`.
    pub fn quadratic_hamiltonian(&self) -> CMatrix {
        let d = self.b[0].nrows();
        self.b
            .iter()
            .zip(&self.energies)
            .fold(CMatrix::zeros(d, d), |acc, (b, &e)| acc + b.adjoint() * b * C64::new(e, 0.0))
    }
}

pub fn normal_mode_transform(
    lattice: &LatticeSpec,
    j: f64,
    eta: f64,
    basis: &Arc<FockBasis>,
) -> Result<NormalModeSystem> {
    check_modes(lattice, basis)?;
    if lattice.boundary != Boundary::Open {
        return Err(Error::param("normal modes are only available for open boundaries"));
    }
    let (dim, side) = (lattice.dim, lattice.side);
    let n = lattice.n_sites();
    let labels: Vec<Vec<usize>> = lattice.sites.iter().map(|x| x.iter().map(|c| c + 1).collect()).collect();
    let norm = (2.0 / (side as f64 + 1.0)).powf(dim as f64 / 2.0);
    let phi = DMatrix::from_fn(n, n, |k, x| {
        let mut v = norm;
        for mu in 0..dim {
            let (km, xm) = (labels[k][mu] as f64, (lattice.sites[x][mu] + 1) as f64);
            v *= (PI * km * xm / (side as f64 + 1.0)).sin();
        }
        v
    });
    let energies: Vec<f64> = labels
        .iter()
        .map(|k| eta - 2.0 * j * k.iter().map(|&km| (PI * km as f64 / (side as f64 + 1.0)).cos()).sum::<f64>())
        .collect();
    let a: Vec<CMatrix> = (0..n).map(|x| fock::annihilation(basis, x)).collect::<Result<_>>()?;
    let d = basis.dim();
    let b = (0..n)
        .map(|k| {
            (0..n).fold(CMatrix::zeros(d, d), |acc, x| acc + &a[x] * C64::new(phi[(k, x)], 0.0))
        })
        .collect();
    let mut lambda = vec![0.0; n.pow(4)];
    for k in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    lambda[((k * n + q) * n + r) * n + s] =
                        (0..n).map(|x| phi[(k, x)] * phi[(q, x)] * phi[(r, x)] * phi[(s, x)]).sum();
                }
            }
        }
    }
    Ok(NormalModeSystem {
        phi,
        labels,
        energies,
        b,
        n_sites: n,
        lambda,
    })
}

/// Product of the commuting spectral projectors `1{N^b_k <= M'}`.
pub fn normal_mode_projector(modes: &NormalModeSystem, basis: &Arc<FockBasis>, m_prime: usize) -> Result<CMatrix> {
    let d = basis.dim();
    let mut p = CMatrix::identity(d, d);
    for k in 0..modes.n_modes() {
        let nk = modes.number_operator(basis, k)?;
        let pk = fock::occupation_projector(&nk, m_prime)?;
        p *= pk.matrix();
    }
    Ok(linalg::symmetrize(&p))
}

/// `H_SF = H_0 + Pi^b V Pi^b` with `Pi^b` the normal-mode occupation projector.
pub fn build_superfluid_truncation(
    lattice: &LatticeSpec,
    params: &BoseHubbardParams,
    m_prime: usize,
    basis: &Arc<FockBasis>,
) -> Result<Operator> {
    params.validate()?;
    let c = params.canonical();
    let h0 = free_part(lattice, params, basis)?;
    let modes = normal_mode_transform(lattice, c.j, c.eta, basis)?;
    let p = normal_mode_projector(&modes, basis, m_prime)?;
    let v = interaction(basis, c.u, c.eta_prime);
    let h = h0 + &p * v * &p;
    Operator::hermitian(basis.clone(), linalg::symmetrize(&h), format!("H_SF(M'={m_prime})"))
}

/// `H_MI = P T P + V` with `P` the per-mode occupation projector at level `M`.
pub fn build_mott_truncation(
    lattice: &LatticeSpec,
    params: &BoseHubbardParams,
    m: usize,
    basis: &Arc<FockBasis>,
) -> Result<Operator> {
    params.validate()?;
    let c = params.canonical();
    let t = free_part(lattice, params, basis)?;
    let p = fock::per_mode_projector(basis, m);
    let h = &p * t * &p + interaction(basis, c.u, c.eta_prime);
    Operator::hermitian(basis.clone(), h, format!("H_MI(M={m})"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AubryAndreParams {
    pub t: f64,
    pub p: usize,
    pub side: usize,
}

impl AubryAndreParams {
    pub fn gamma(&self) -> f64 {
        2.0 * PI * self.p as f64 / self.side as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.p >= self.side {
            return Err(Error::param(format!(
                "flux index p = {} must satisfy 0 <= p < L = {}",
                self.p, self.side
            )));
        }
        Ok(())
    }

    /// Site index of `(j1, j2)` on the torus.
    pub fn site(&self, j1: usize, j2: usize) -> usize {
        (j1 % self.side) + self.side * (j2 % self.side)
    }

    /// Position-space single-particle Hamiltonian with Peierls phase along e1.
    pub fn position_hamiltonian(&self) -> CMatrix {
        let l = self.side;
        let n = l * l;
        let g = self.gamma();
        let t = C64::new(self.t, 0.0);
        let mut h = CMatrix::identity(n, n);
        for j2 in 0..l {
            for j1 in 0..l {
                let j = self.site(j1, j2);
                let e1 = self.site(j1 + 1, j2);
                let e2 = self.site(j1, j2 + 1);
                let phase = C64::from_polar(1.0, j2 as f64 * g);
                h[(e1, j)] += t * phase;
                h[(j, e1)] += t * phase.conj();
                h[(j, e2)] += t;
                h[(e2, j)] += t;
            }
        }
        h
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.side).map(|m| 2.0 * PI * m as f64 / self.side as f64).collect()
    }

    /// Fourier block `h_{k1}`: diagonal `1 + 2t cos(i gamma + k1)` plus
    /// periodic nearest-neighbour coupling `t`.
    pub fn fourier_block(&self, k1: f64) -> CMatrix {
        let l = self.side;
        let g = self.gamma();
        let mut h = CMatrix::zeros(l, l);
        for i in 0..l {
            h[(i, i)] += C64::new(1.0 + 2.0 * self.t * (i as f64 * g + k1).cos(), 0.0);
            if l > 1 {
                h[(i, (i + 1) % l)] += C64::new(self.t, 0.0);
                h[((i + 1) % l, i)] += C64::new(self.t, 0.0);
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct AubryAndreSystem {
    pub hamiltonian: Operator,
    /// `energies[m][i1]` for momentum index `m` (`k1 = 2 pi m / L`).
    pub energies: Vec<Vec<f64>>,
    /// Rows are normal modes in (momentum, band) order, columns are sites:
    /// `b = rotation * a`.
    pub rotation: CMatrix,
    /// `max|W^dagger diag(eps) W - h|` on the single-particle level.
    pub single_particle_defect: f64,
    /// `max|H - sum eps b^dagger b|` on the Fock space.
    pub fock_defect: f64,
}

impl AubryAndreSystem {
    pub fn mode_energies(&self) -> Vec<f64> {
        self.energies.iter().flatten().copied().collect()
    }
}

pub fn build_aubry_andre(params: &AubryAndreParams, basis: &Arc<FockBasis>) -> Result<AubryAndreSystem> {
    params.validate()?;
    let l = params.side;
    let n = l * l;
    if basis.n_modes() != n {
        return Err(Error::ShapeMismatch(format!(
            "Aubry-Andre lattice has {n} sites, basis has {} modes",
            basis.n_modes()
        )));
    }
    let h_pos = params.position_hamiltonian();
    let h = quadratic_operator(&h_pos, basis)?;
    let hamiltonian = Operator::hermitian(basis.clone(), h, format!("H_AA(p={})", params.p))?;

    // The Fourier mode c_{j2,k} = L^{-1/2} sum_j1 e^{-i k j1} a_j picks up
    // cos(j2 gamma - k) from the Peierls term, i.e. block h_{-k}.
    let momenta = params.momenta();
    let mut energies = Vec::with_capacity(l);
    let mut rotation = CMatrix::zeros(n, n);
    let mut flat_eps = Vec::with_capacity(n);
    for (m, &k1) in momenta.iter().enumerate() {
        let eig = linalg::eigh(&params.fourier_block(k1))?;
        let k = -k1;
        for (band, &e) in eig.values.iter().enumerate() {
            let row = m * l + band;
            flat_eps.push(e);
            for j2 in 0..l {
                let u = eig.vectors[(j2, band)].conj();
                for j1 in 0..l {
                    let f = C64::from_polar(1.0 / (l as f64).sqrt(), -k * j1 as f64);
                    rotation[(row, params.site(j1, j2))] += u * f;
                }
            }
        }
        energies.push(eig.values);
    }
    let rebuilt = rotation.adjoint() * linalg::diag(&flat_eps) * &rotation;
    let single_particle_defect = linalg::max_abs(&(&rebuilt - &h_pos));
    let h_modes = quadratic_operator(&rebuilt, basis)?;
    let fock_defect = linalg::max_abs(&(&h_modes - hamiltonian.matrix()));
    Ok(AubryAndreSystem {
        hamiltonian,
        energies,
        rotation,
        single_particle_defect,
        fock_defect,
    })
}

/// Number operator of a single mode or `sum_i N_i`, as used for the qOU model.
pub fn number_hamiltonian(basis: &Arc<FockBasis>) -> Result<Operator> {
    if basis.n_modes() == 1 {
        return Ok(fock::ladder_operator(basis, 0, LadderKind::Number)?.with_label("H=N"));
    }
    Ok(fock::total_number(basis).with_label("H=N_tot"))
}

/// Single-mode `h(N)` for a real function of the occupation.
pub fn number_diagonal_hamiltonian(basis: &Arc<FockBasis>, h: impl Fn(usize) -> f64) -> Result<Operator> {
    if basis.n_modes() != 1 {
        return Err(Error::param("h(N) models are single-mode"));
    }
    let v: Vec<f64> = (0..basis.dim()).map(h).collect();
    Operator::hermitian(basis.clone(), linalg::diag(&v), "H=h(N)")
}

/// Annihilators and creators of every mode, closed under adjoints.
pub fn ladder_jumps(basis: &Arc<FockBasis>) -> Result<Vec<Operator>> {
    let mut jumps = Vec::with_capacity(2 * basis.n_modes());
    for i in 0..basis.n_modes() {
        jumps.push(fock::ladder_operator(basis, i, LadderKind::Annihilate)?);
        jumps.push(fock::ladder_operator(basis, i, LadderKind::Create)?);
    }
    Ok(jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn chain(n: usize) -> LatticeSpec {
        LatticeSpec::new(1, n, Boundary::Open).unwrap()
    }

    #[test]
    fn lattice_bonds() {
        assert_eq!(chain(3).bonds, vec![(0, 1), (1, 2)]);
        let ring = LatticeSpec::new(1, 3, Boundary::Periodic).unwrap();
        assert_eq!(ring.bonds, vec![(0, 1), (0, 2), (1, 2)]);
        let sq = LatticeSpec::new(2, 2, Boundary::Periodic).unwrap();
        assert_eq!(sq.bonds.len(), 4);
        let open = LatticeSpec::new(2, 3, Boundary::Open).unwrap();
        assert_eq!(open.bonds.len(), 12);
    }

    #[test]
    fn single_site_interaction() {
        let lat = chain(1);
        let b = FockBasis::new(1, 2, None).unwrap();
        let h = build_bose_hubbard(&lat, &BoseHubbardParams::with_mu(0.0, 2.0, 0.0), &b).unwrap();
        assert!(max_abs(&(h.matrix() - linalg::diag(&[0.0, 0.0, 2.0]))) < 1e-15);
    }

    #[test]
    fn two_site_hopping_block() {
        let lat = chain(2);
        let b = FockBasis::new(2, 1, Some(1)).unwrap();
        // U = 0 is rejected by validation, so build the free part directly.
        let h = free_part(&lat, &BoseHubbardParams::with_mu(1.0, 1.0, 0.0), &b).unwrap();
        let blocks = fock::number_sector_blocks(&Operator::hermitian(b, h, "h").unwrap()).unwrap();
        let s1 = &blocks[1].block;
        assert_eq!(s1.nrows(), 2);
        assert_eq!(s1[(0, 0)], ZERO);
        assert_eq!(s1[(0, 1)].re, -1.0);
        assert_eq!(s1[(1, 0)].re, -1.0);
    }

    #[test]
    fn parametrization_conversion() {
        let p = BoseHubbardParams::with_mu(0.5, 2.0, -3.0);
        let r = p.to_regularized();
        assert_eq!(r.canonical().eta, 3.0);
        assert_eq!(r.to_chemical_potential().unwrap(), p);
        let c = r.canonical();
        assert!((c.eta - c.u * c.eta_prime / 2.0 - (-c.u / 2.0 - -3.0)).abs() < 1e-15);
        let lat = chain(2);
        let b = FockBasis::new(2, 3, None).unwrap();
        let h1 = build_bose_hubbard(&lat, &p, &b).unwrap();
        let h2 = build_bose_hubbard(&lat, &r, &b).unwrap();
        assert!(max_abs(&(h1.matrix() - h2.matrix())) < 1e-12);
    }

    #[test]
    fn mean_field_diagonal_and_offdiagonal() {
        let b = FockBasis::new(1, 3, None).unwrap();
        let h = build_mean_field(&MeanFieldParams::new(0.0, 2.0, C64::new(0.0, 0.0)), &b).unwrap();
        assert!(max_abs(&(h.matrix() - linalg::diag(&[0.0, 0.0, 2.0, 6.0]))) < 1e-15);
        let p = MeanFieldParams::new(0.3, 2.0, C64::new(0.1, 0.0));
        let h = build_mean_field(&p, &b).unwrap();
        assert!((h.matrix()[(0, 1)].norm() - 0.1).abs() < 1e-15);
        for n in 0..5 {
            let gap = p.unperturbed_energy(n + 1) - p.unperturbed_energy(n);
            assert!((gap - (-p.mu + p.u * n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_mode_dispersion_and_rebuild() {
        let lat = chain(2);
        let b = FockBasis::new(2, 3, Some(3)).unwrap();
        let nm = normal_mode_transform(&lat, 1.0, 3.0, &b).unwrap();
        let mut e = nm.energies.clone();
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 2.0).abs() < 1e-12 && (e[1] - 4.0).abs() < 1e-12);
        let gram = &nm.phi * nm.phi.transpose();
        assert!((gram - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
        let h0 = free_part(&lat, &BoseHubbardParams::regularized(1.0, 1.0, 3.0, 1.0), &b).unwrap();
        assert!(max_abs(&(nm.quadratic_hamiltonian() - h0)) < 1e-10);
    }

    #[test]
    fn lambda_symmetry_and_quartic_rebuild() {
        let lat = LatticeSpec::new(1, 3, Boundary::Open).unwrap();
        let b = FockBasis::new(3, 3, Some(3)).unwrap();
        let nm = normal_mode_transform(&lat, 0.7, 2.0, &b).unwrap();
        let n = nm.n_modes();
        let mut quartic = CMatrix::zeros(b.dim(), b.dim());
        for k in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let l = nm.lambda(k, q, r, s);
                        assert!((l - nm.lambda(q, k, r, s)).abs() < 1e-12);
                        assert!((l - nm.lambda(k, q, s, r)).abs() < 1e-12);
                        assert!((l - nm.lambda(r, s, k, q)).abs() < 1e-12);
                        quartic += nm.b[k].adjoint() * nm.b[q].adjoint() * &nm.b[r] * &nm.b[s] * C64::new(l, 0.0);
                    }
                }
            }
        }
        // sum_x a_x^dagger a_x^dagger a_x a_x = sum_x (N_x^2 - N_x)
        assert!(max_abs(&(quartic - interaction(&b, 2.0, 1.0))) < 1e-10);
    }

    #[test]
    fn superfluid_truncation_limits() {
        let lat = chain(2);
        let params = BoseHubbardParams::regularized(0.2, 1.0, 1.5, 1.0);
        let b = FockBasis::new(2, 4, Some(4)).unwrap();
        let full = build_bose_hubbard(&lat, &params, &b).unwrap();
        let sf = build_superfluid_truncation(&lat, &params, 4, &b).unwrap();
        assert!(max_abs(&(sf.matrix() - full.matrix())) < 1e-10);
        for mp in 0..4 {
            let sf = build_superfluid_truncation(&lat, &params, mp, &b).unwrap();
            let low = fock::total_at_most_projector(&b, mp);
            assert!(max_abs(&((sf.matrix() - full.matrix()) * &low)) < 1e-10);
            assert!(sf.number_commutator_norm() < 1e-10);
        }
    }

    #[test]
    fn mott_truncation_limits() {
        let lat = chain(2);
        let b = FockBasis::new(2, 3, None).unwrap();
        let zero_hop = BoseHubbardParams::regularized(0.0, 1.0, 1.5, 1.0);
        for m in 0..4 {
            let h = build_mott_truncation(&lat, &zero_hop, m, &b).unwrap();
            let mut off = h.matrix().clone();
            off.fill_diagonal(ZERO);
            assert!(max_abs(&off) == 0.0);
        }
        let params = BoseHubbardParams::regularized(0.3, 1.0, 1.5, 1.0);
        let full = build_bose_hubbard(&lat, &params, &b).unwrap();
        let mi = build_mott_truncation(&lat, &params, 3, &b).unwrap();
        assert!(max_abs(&(mi.matrix() - full.matrix())) < 1e-12);
        let mi = build_mott_truncation(&lat, &params, 1, &b).unwrap();
        let q = CMatrix::identity(b.dim(), b.dim()) - fock::per_mode_projector(&b, 1);
        let rest = mi.matrix() - interaction(&b, 1.0, 1.0);
        assert!(max_abs(&(&q * &rest)) < 1e-15 && max_abs(&(&rest * &q)) < 1e-15);
    }

    #[test]
    fn aubry_andre_without_hopping() {
        let p = AubryAndreParams { t: 0.0, p: 1, side: 2 };
        let b = FockBasis::new(4, 2, Some(2)).unwrap();
        let sys = build_aubry_andre(&p, &b).unwrap();
        assert!(sys.mode_energies().iter().all(|&e| (e - 1.0).abs() < 1e-15));
        assert!(max_abs(&(sys.hamiltonian.matrix() - fock::total_number(&b).matrix())) < 1e-15);
    }

    #[test]
    fn aubry_andre_routes_agree() {
        for (side, p, t) in [(2, 0, 0.3), (2, 1, 0.3), (3, 1, 0.2), (4, 1, 0.15), (4, 3, 0.25)] {
            let params = AubryAndreParams { t, p, side };
            let b = FockBasis::new(side * side, 1, Some(1)).unwrap();
            let sys = build_aubry_andre(&params, &b).unwrap();
            assert!(sys.single_particle_defect < 1e-10, "{side} {p}");
            assert!(sys.fock_defect < 1e-10);
            let mut pos = linalg::eigh(&params.position_hamiltonian()).unwrap().values;
            let mut four = sys.mode_energies();
            pos.sort_by(f64::total_cmp);
            four.sort_by(f64::total_cmp);
            for (x, y) in pos.iter().zip(&four) {
                assert!((x - y).abs() < 1e-10);
            }
            // shifting k1 by gamma cyclically relabels the diagonal
            for &k1 in &params.momenta() {
                let a = linalg::eigh(&params.fourier_block(k1)).unwrap().values;
                let s = linalg::eigh(&params.fourier_block(k1 + params.gamma())).unwrap().values;
                for (x, y) in a.iter().zip(&s) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn aubry_andre_two_by_two_blocks() {
        let t = 0.4;
        let params = AubryAndreParams { t, p: 0, side: 2 };
        for &k1 in &params.momenta() {
            let h = params.fourier_block(k1);
            let (a, c) = (h[(0, 0)].re, h[(1, 1)].re);
            let off = h[(0, 1)].re;
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c).powi(2) + off * off).sqrt();
            let e = linalg::eigh(&h).unwrap().values;
            assert!((e[0] - (mean - rad)).abs() < 1e-14 && (e[1] - (mean + rad)).abs() < 1e-14);
        }
    }

    #[test]
    fn flux_index_is_checked() {
        let b = FockBasis::new(4, 1, None).unwrap();
        assert!(build_aubry_andre(&AubryAndreParams { t: 0.1, p: 2, side: 2 }, &b).is_err());
    }
}
