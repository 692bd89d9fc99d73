//! Frequency-domain construction of the Gibbs-sampler generators.
//!
//! Every generator is assembled in the eigenframe of the Hamiltonian, where
//! Bohr-frequency components of an operator are simply its matrix entries
//! grouped by energy difference, and then rotated to the Fock frame.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filters::{self, FilterFunction};
use crate::fock::{self, FockBasis, Operator, OperatorJson};
use crate::linalg::{self, CMatrix, I, ZERO};
use crate::quadrature;

/// Cap on the superoperator dimension `d^2`.
pub const SUPEROP_DIMENSION_CAP: usize = 10_000;

/// Eigendecomposition of a Hamiltonian with eigenvalues grouped into clusters.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `energies`.
    pub vectors: CMatrix,
    pub cluster_tol: f64,
    /// Contiguous index ranges of the clusters, ascending in energy.
    pub clusters: Vec<Range<usize>>,
    pub cluster_of: Vec<usize>,
    /// Mean energy of each cluster.
    pub cluster_energies: Vec<f64>,
    /// Eigenvectors were computed sector by sector in total occupation.
    pub number_conserving: bool,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Cluster mean energy of eigenvector `i`.
    pub fn level(&self, i: usize) -> f64 {
        self.cluster_energies[self.cluster_of[i]]
    }

    pub fn to_eigenframe(&self, m: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * m * &self.vectors
    }

    pub fn from_eigenframe(&self, m: &CMatrix) -> CMatrix {
        &self.vectors * m * self.vectors.adjoint()
    }

    pub fn projector(&self, cluster: usize) -> CMatrix {
        let r = self.clusters[cluster].clone();
        let v = self.vectors.columns(r.start, r.len());
        v * v.adjoint()
    }

    /// `max|H - sum_E E P_E|` with `E` the cluster means.
    pub fn reconstruction_defect(&self, h: &CMatrix) -> f64 {
        let levels: Vec<f64> = (0..self.dim()).map(|i| self.level(i)).collect();
        linalg::max_abs(&(self.from_eigenframe(&linalg::diag(&levels)) - h))
    }

    fn frame_is_identity(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| self.vectors[(i, j)] == if i == j { linalg::ONE } else { ZERO }))
    }
}

/// Default clustering tolerance `1e-9 * max(1, ||H||)`.
pub fn default_cluster_tol(norm: f64) -> f64 {
    1e-9 * norm.max(1.0)
}

pub fn spectral_decompose(h: &Operator, cluster_tol: Option<f64>) -> Result<SpectralDecomposition> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: linalg::hermiticity_defect(h.matrix()),
        });
    }
    let d = h.dim();
    let conserving = h.number_commutator_norm() <= fock::COMMUTATOR_TOL * linalg::max_abs(h.matrix()).max(1.0);
    let (mut energies, mut vectors) = if conserving {
        let blocks = fock::number_sector_blocks(h)?;
        let mut e = Vec::with_capacity(d);
        let mut v = CMatrix::zeros(d, d);
        let mut col = 0;
        for b in &blocks {
            let eig = linalg::eigh(&b.block)?;
            for (k, &val) in eig.values.iter().enumerate() {
                e.push(val);
                for (a, &row) in b.indices.iter().enumerate() {
                    v[(row, col)] = eig.vectors[(a, k)];
                }
                col += 1;
            }
        }
        (e, v)
    } else {
        let eig = linalg::eigh(h.matrix()).map_err(|e| {
            Error::numerical(format!(
                "{e}; matrix max entry {:.3e}, Hermiticity defect {:.3e}",
                linalg::max_abs(h.matrix()),
                linalg::hermiticity_defect(h.matrix())
            ))
        })?;
        (eig.values, eig.vectors)
    };
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        let e2: Vec<f64> = order.iter().map(|&k| energies[k]).collect();
        let mut v2 = CMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            v2.set_column(dst, &vectors.column(src));
        }
        energies = e2;
        vectors = v2;
    }
    let norm = energies.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    let tol = cluster_tol.unwrap_or_else(|| default_cluster_tol(norm));
    if !(tol >= 0.0) {
        return Err(Error::param("cluster_tol must be nonnegative"));
    }
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=d {
        if i == d || energies[i] - energies[start] > tol {
            clusters.push(start..i);
            start = i;
        }
    }
    let mut cluster_of = vec![0; d];
    let cluster_energies = clusters
        .iter()
        .enumerate()
        .map(|(c, r)| {
            for i in r.clone() {
                cluster_of[i] = c;
            }
            energies[r.clone()].iter().sum::<f64>() / r.len() as f64
        })
        .collect();
    Ok(SpectralDecomposition {
        energies,
        vectors,
        cluster_tol: tol,
        clusters,
        cluster_of,
        cluster_energies,
        number_conserving: conserving,
    })
}

/// Bohr frequencies `Sp(H) - Sp(H)` grouped with the clustering tolerance.
/// Group ids are symmetric: the pair `(c, c')` and its mirror `(c', c)` carry
/// opposite frequencies.
#[derive(Clone, Debug)]
pub struct BohrFrequencySet {
    /// Ascending and symmetric about zero.
    pub frequencies: Vec<f64>,
    group: Vec<usize>,
    n_clusters: usize,
    zero: usize,
}

impl BohrFrequencySet {
    pub fn new(spec: &SpectralDecomposition) -> Self {
        let ce = &spec.cluster_energies;
        let nc = ce.len();
        let mut pos: Vec<(f64, usize, usize)> = Vec::new();
        for c in 0..nc {
            for c2 in 0..c {
                pos.push((ce[c] - ce[c2], c, c2));
            }
        }
        pos.sort_by(|a, b| a.0.total_cmp(&b.0));
        // positive groups; group 0 is the zero frequency
        let mut reps: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0)]; // (start, sum, count)
        let mut assign = vec![0usize; pos.len()];
        for (k, &(nu, _, _)) in pos.iter().enumerate() {
            let last = reps.len() - 1;
            if nu - reps[last].0 <= spec.cluster_tol {
                if last > 0 {
                    reps[last].1 += nu;
                    reps[last].2 += 1;
                }
                assign[k] = last;
            } else {
                reps.push((nu, nu, 1));
                assign[k] = reps.len() - 1;
            }
        }
        let np = reps.len() - 1;
        let positive: Vec<f64> = reps[1..].iter().map(|r| r.1 / r.2 as f64).collect();
        let mut frequencies: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
        frequencies.push(0.0);
        frequencies.extend(&positive);
        let zero = np;
        let mut group = vec![zero; nc * nc];
        for (k, &(_, c, c2)) in pos.iter().enumerate() {
            let g = assign[k];
            if g > 0 {
                group[c + nc * c2] = zero + g;
                group[c2 + nc * c] = zero - g;
            }
        }
        BohrFrequencySet {
            frequencies,
            group,
            n_clusters: nc,
            zero,
        }
    }

    /// Group of the transition from cluster `to_from.1` to cluster `to_from.0`,
    /// i.e. of the frequency `E_c - E_c'`.
    pub fn group_of(&self, c: usize, c2: usize) -> usize {
        self.group[c + self.n_clusters * c2]
    }

    pub fn frequency(&self, g: usize) -> f64 {
        self.frequencies[g]
    }

    pub fn zero_group(&self) -> usize {
        self.zero
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Cluster pairs `(c, c')` in group `g`.
    pub fn pairs(&self, g: usize) -> Vec<(usize, usize)> {
        let nc = self.n_clusters;
        (0..nc * nc)
            .filter(|&k| self.group[k] == g)
            .map(|k| (k % nc, k / nc))
            .collect()
    }
}

/// Energy resolution of the regularized generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaE {
    /// Only equal Bohr frequencies couple (Davies limit).
    Zero,
    Finite(f64),
    Infinite,
}

impl SigmaE {
    pub fn from_f64(x: f64) -> Result<Self> {
        if x == 0.0 {
            Ok(SigmaE::Zero)
        } else if x == f64::INFINITY {
            Ok(SigmaE::Infinite)
        } else if x > 0.0 && x.is_finite() {
            Ok(SigmaE::Finite(x))
        } else {
            Err(Error::param(format!("sigma_E must lie in [0, inf], got {x}")))
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            SigmaE::Zero => 0.0,
            SigmaE::Finite(s) => s,
            SigmaE::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for SigmaE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaE::Infinite => write!(f, "inf"),
            s => write!(f, "{}", s.as_f64()),
        }
    }
}

impl Serialize for SigmaE {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaE::Infinite => s.serialize_str("inf"),
            x => s.serialize_f64(x.as_f64()),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaE {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => SigmaE::from_f64(x).map_err(serde::de::Error::custom),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(SigmaE::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid sigma_E '{t}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    Schrodinger,
    SelfadjointHs,
}

impl fmt::Display for Picture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Picture::Schrodinger => write!(f, "schrodinger"),
            Picture::SelfadjointHs => write!(f, "selfadjoint_hs"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorMeta {
    pub sigma_e: SigmaE,
    pub filter: String,
    pub jumps: String,
    pub hamiltonian: String,
    pub beta: f64,
}

/// Everything needed to reassemble a generator in either picture.
#[derive(Clone, Debug)]
pub struct GeneratorRecipe {
    pub spec: SpectralDecomposition,
    pub bohr: BohrFrequencySet,
    /// Bare jumps in the eigenframe.
    pub jumps: Vec<CMatrix>,
    pub filter: FilterFunction,
    pub sigma_e: SigmaE,
}

/// Linear map on `d x d` matrices stored as a `d^2 x d^2` matrix acting on
/// column-stacked vectors.
#[derive(Clone, Debug)]
pub struct SuperOperator {
    basis: Arc<FockBasis>,
    matrix: CMatrix,
    picture: Picture,
    meta: GeneratorMeta,
    recipe: Option<Arc<GeneratorRecipe>>,
}

impl SuperOperator {
    pub fn from_matrix(basis: Arc<FockBasis>, matrix: CMatrix, picture: Picture, meta: GeneratorMeta) -> Result<Self> {
        let d = basis.dim();
        if matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "superoperator is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                d * d,
                d * d
            )));
        }
        Ok(SuperOperator {
            basis,
            matrix,
            picture,
            meta,
            recipe: None,
        })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn meta(&self) -> &GeneratorMeta {
        &self.meta
    }

    pub fn recipe(&self) -> Option<&Arc<GeneratorRecipe>> {
        self.recipe.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        linalg::apply_superop(&self.matrix, x)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    /// `max |L^dagger(I)|`, zero for a trace-annihilating generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        let v = linalg::vec_of(&CMatrix::identity(d, d));
        let w = self.matrix.adjoint() * v;
        w.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// Largest column 2-norm, the normalization used for residuals.
    pub fn scale(&self) -> f64 {
        linalg::max_column_norm(&self.matrix)
    }

    pub fn require(&self, picture: Picture) -> Result<()> {
        if self.picture != picture {
            return Err(Error::WrongPicture {
                expected: picture.to_string(),
                got: self.picture.to_string(),
            });
        }
        Ok(())
    }

    /// The same generator in the other picture, when it was built from a recipe.
    pub fn in_picture(&self, picture: Picture) -> Result<SuperOperator> {
        if picture == self.picture {
            return Ok(self.clone());
        }
        let recipe = self
            .recipe
            .as_ref()
            .ok_or_else(|| Error::param("generator has no frequency-domain recipe"))?;
        Ok(from_recipe(self.basis.clone(), recipe.clone(), picture, self.meta.clone()))
    }

    /// The generator matrix in the Hamiltonian eigenframe.
    pub fn eigenframe_matrix(&self) -> Result<CMatrix> {
        let recipe = self
            .recipe
            .as_ref()
            .ok_or_else(|| Error::param("generator has no frequency-domain recipe"))?;
        Ok(assemble(recipe, self.picture))
    }

    pub fn to_json(&self) -> SuperOperatorJson {
        SuperOperatorJson {
            picture: self.picture,
            meta: self.meta.clone(),
            vectorization: "column-stacking".into(),
            operator: OperatorJson::from_matrix(&self.matrix, &format!("L[{}]", self.meta.hamiltonian)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuperOperatorJson {
    pub picture: Picture,
    pub meta: GeneratorMeta,
    pub vectorization: String,
    pub operator: OperatorJson,
}

#[derive(Clone, Debug, Default)]
pub struct GeneratorOptions {
    pub cluster_tol: Option<f64>,
    /// KMS audit grid; the filter's default grid when absent.
    pub audit_grid: Option<Vec<f64>>,
}

fn check_adjoint_closed(jumps: &[Operator]) -> Result<()> {
    for (i, a) in jumps.iter().enumerate() {
        let ad = a.matrix().adjoint();
        let tol = 1e-12 * linalg::max_abs(a.matrix()).max(1.0);
        if !jumps.iter().any(|b| linalg::max_abs(&(b.matrix() - &ad)) <= tol) {
            return Err(Error::NotAdjointClosed(format!(
                "adjoint of jump {i} ('{}') is missing",
                a.label()
            )));
        }
    }
    Ok(())
}

fn check_same_basis(h: &Operator, jumps: &[Operator]) -> Result<()> {
    if jumps.is_empty() {
        return Err(Error::param("jump set is empty"));
    }
    for a in jumps {
        if a.basis() != h.basis() {
            return Err(Error::ShapeMismatch(format!(
                "jump '{}' lives on a different basis than '{}'",
                a.label(),
                h.label()
            )));
        }
    }
    Ok(())
}

fn jump_set_id(jumps: &[Operator]) -> String {
    jumps.iter().map(|a| a.label()).collect::<Vec<_>>().join(",")
}

/// Builds the recipe shared by both pictures after validating the inputs.
pub fn prepare(
    h: &Operator,
    jumps: &[Operator],
    filter: &FilterFunction,
    sigma_e: SigmaE,
    opts: &GeneratorOptions,
) -> Result<GeneratorRecipe> {
    check_same_basis(h, jumps)?;
    let d = h.dim();
    if d * d > SUPEROP_DIMENSION_CAP {
        return Err(Error::DimensionCap {
            requested: (d * d) as u128,
            cap: SUPEROP_DIMENSION_CAP,
            context: format!("superoperator of a {d}-dimensional basis"),
        });
    }
    let grid = opts
        .audit_grid
        .clone()
        .unwrap_or_else(|| filters::default_grid(filter.beta()));
    let audit = filters::kms_audit(filter, &grid)?;
    if !audit.pass {
        return Err(Error::KmsViolation {
            max_defect: audit.max_violation,
            nu: audit.worst_nu,
        });
    }
    check_adjoint_closed(jumps)?;
    let spec = spectral_decompose(h, opts.cluster_tol)?;
    let bohr = BohrFrequencySet::new(&spec);
    let eig_jumps = jumps.iter().map(|a| spec.to_eigenframe(a.matrix())).collect();
    Ok(GeneratorRecipe {
        spec,
        bohr,
        jumps: eig_jumps,
        filter: filter.clone(),
        sigma_e,
    })
}

/// Schrodinger-picture generator `L_{sigma_E, f, H}`.
pub fn build_generator(
    h: &Operator,
    jumps: &[Operator],
    filter: &FilterFunction,
    sigma_e: SigmaE,
) -> Result<SuperOperator> {
    build_generator_with(h, jumps, filter, sigma_e, &GeneratorOptions::default())
}

pub fn build_generator_with(
    h: &Operator,
    jumps: &[Operator],
    filter: &FilterFunction,
    sigma_e: SigmaE,
    opts: &GeneratorOptions,
) -> Result<SuperOperator> {
    let recipe = Arc::new(prepare(h, jumps, filter, sigma_e, opts)?);
    let meta = GeneratorMeta {
        sigma_e,
        filter: filter.id().to_string(),
        jumps: jump_set_id(jumps),
        hamiltonian: h.label().to_string(),
        beta: filter.beta(),
    };
    Ok(from_recipe(h.basis().clone(), recipe, Picture::Schrodinger, meta))
}

fn from_recipe(basis: Arc<FockBasis>, recipe: Arc<GeneratorRecipe>, picture: Picture, meta: GeneratorMeta) -> SuperOperator {
    let eig = assemble(&recipe, picture);
    let matrix = if recipe.spec.frame_is_identity() {
        eig
    } else {
        linalg::superop_frame(&eig, &recipe.spec.vectors)
    };
    SuperOperator {
        basis,
        matrix,
        picture,
        meta,
        recipe: Some(recipe),
    }
}

/// Pairwise frequency weight `W(nu_a, nu_b)`.
fn weight(sigma: SigmaE, nu_a: f64, nu_b: f64, g_a: usize, g_b: usize) -> f64 {
    match sigma {
        SigmaE::Infinite => 1.0,
        SigmaE::Zero => (g_a == g_b) as u8 as f64,
        SigmaE::Finite(s) => {
            let x = nu_a - nu_b;
            (-x * x / (8.0 * s * s)).exp()
        }
    }
}

struct FrameData {
    d: usize,
    levels: Vec<f64>,
    /// `nu[i + d k] = E_i - E_k`
    nu: Vec<f64>,
    group: Vec<usize>,
}

impl FrameData {
    fn new(r: &GeneratorRecipe) -> Self {
        let d = r.spec.dim();
        let levels: Vec<f64> = (0..d).map(|i| r.spec.level(i)).collect();
        let mut nu = vec![0.0; d * d];
        let mut group = vec![0; d * d];
        for k in 0..d {
            for i in 0..d {
                nu[i + d * k] = levels[i] - levels[k];
                group[i + d * k] = r.bohr.group_of(r.spec.cluster_of[i], r.spec.cluster_of[k]);
            }
        }
        FrameData { d, levels, nu, group }
    }
}

/// Entrywise dressing `f(nu_ik) e^{s nu_ik} A_ik` in the eigenframe.
fn dress(r: &GeneratorRecipe, fd: &FrameData, a: &CMatrix, s: f64) -> CMatrix {
    let d = fd.d;
    CMatrix::from_fn(d, d, |i, k| {
        let v = a[(i, k)];
        if v == ZERO {
            ZERO
        } else {
            r.filter.eval_scaled(fd.nu[i + d * k], s) * v
        }
    })
}

/// `K^w_ij = sum_alpha sum_m W(nu_mi, nu_mj) conj(L_mi) L_mj` in the eigenframe.
fn weighted_k(r: &GeneratorRecipe, fd: &FrameData, dressed: &[CMatrix]) -> CMatrix {
    let d = fd.d;
    let mut k = CMatrix::zeros(d, d);
    for l in dressed {
        if r.sigma_e == SigmaE::Infinite {
            k += l.adjoint() * l;
            continue;
        }
        for j in 0..d {
            for i in 0..d {
                let mut acc = ZERO;
                for m in 0..d {
                    let (a, b) = (l[(m, i)], l[(m, j)]);
                    if a == ZERO || b == ZERO {
                        continue;
                    }
                    let w = weight(r.sigma_e, fd.nu[m + d * i], fd.nu[m + d * j], fd.group[m + d * i], fd.group[m + d * j]);
                    acc += a.conj() * b * w;
                }
                k[(i, j)] += acc;
            }
        }
    }
    k
}

/// Assembles the generator matrix in the eigenframe.
///
/// Schrodinger: `sum W L X L^dagger - (K/2)(1 - T) X - X (K/2)(1 + T)` with
/// `T_ij = tanh(beta (E_i - E_j) / 4)`, which is `-i[B, X] - {K, X}/2`.
/// Self-adjoint: `sum W L+ X L+^dagger - G X - X G` with
/// `L+ = e^{beta H/4} L e^{-beta H/4}` and `G = (K/2) sech(beta (E_i - E_j)/4)`.
fn assemble(r: &GeneratorRecipe, picture: Picture) -> CMatrix {
    let fd = FrameData::new(r);
    let d = fd.d;
    let beta = r.filter.beta();
    let plain: Vec<CMatrix> = r.jumps.iter().map(|a| dress(r, &fd, a, 0.0)).collect();
    let jump_terms: Vec<CMatrix> = match picture {
        Picture::Schrodinger => plain.clone(),
        Picture::SelfadjointHs => r.jumps.iter().map(|a| dress(r, &fd, a, beta / 4.0)).collect(),
    };
    let k = weighted_k(r, &fd, &plain);
    let (gl, gr) = match picture {
        Picture::Schrodinger => {
            let t = |i: usize, j: usize| (beta * (fd.levels[i] - fd.levels[j]) / 4.0).tanh();
            (
                CMatrix::from_fn(d, d, |i, j| k[(i, j)] * 0.5 * (1.0 - t(i, j))),
                CMatrix::from_fn(d, d, |i, j| k[(i, j)] * 0.5 * (1.0 + t(i, j))),
            )
        }
        Picture::SelfadjointHs => {
            let g = CMatrix::from_fn(d, d, |i, j| {
                k[(i, j)] * 0.5 / (beta * (fd.levels[i] - fd.levels[j]) / 4.0).cosh()
            });
            (g.clone(), g)
        }
    };
    let sigma = r.sigma_e;
    let mut s = CMatrix::zeros(d * d, d * d);
    s.as_mut_slice()
        .par_chunks_mut(d * d)
        .enumerate()
        .for_each(|(col, out)| {
            let (kk, ll) = (col % d, col / d);
            for l in &jump_terms {
                for j in 0..d {
                    let c2 = l[(j, ll)].conj();
                    if c2 == ZERO {
                        continue;
                    }
                    let (nu_b, g_b) = (fd.nu[j + d * ll], fd.group[j + d * ll]);
                    for i in 0..d {
                        let v1 = l[(i, kk)];
                        if v1 == ZERO {
                            continue;
                        }
                        let w = weight(sigma, fd.nu[i + d * kk], nu_b, fd.group[i + d * kk], g_b);
                        out[i + d * j] += v1 * c2 * w;
                    }
                }
            }
            // -(Gl X)_{ij}: column (k, l) feeds row (i, l) with -Gl[i, k]
            for i in 0..d {
                out[i + d * ll] -= gl[(i, kk)];
            }
            // -(X Gr)_{ij}: column (k, l) feeds row (k, j) with -Gr[l, j]
            for j in 0..d {
                out[kk + d * j] -= gr[(ll, j)];
            }
        });
    s
}

/// Self-adjoint (Hilbert-Schmidt) form `L = iota_2^{-1} o L o iota_2` with
/// `iota_2(x) = sigma^{1/4} x sigma^{1/4}`.
///
/// Generators that carry a frequency-domain recipe are reassembled exactly in
/// the eigenframe, which avoids the exponential amplification of the
/// similarity transform. Otherwise the similarity is applied directly and
/// refused when `sigma^{1/4}` is too ill-conditioned.
pub fn selfadjoint_form(generator: &SuperOperator, h: &Operator, beta: f64) -> Result<SuperOperator> {
    generator.require(Picture::Schrodinger)?;
    if let Some(r) = generator.recipe() {
        let same_beta = (r.filter.beta() - beta).abs() <= 1e-14 * beta.abs().max(1.0);
        let tol = 1e-10 * linalg::max_abs(h.matrix()).max(1.0);
        if same_beta && r.spec.reconstruction_defect(h.matrix()) <= tol + r.spec.cluster_tol {
            return generator.in_picture(Picture::SelfadjointHs);
        }
    }
    let eig = linalg::eigh(h.matrix())?;
    let e0 = eig.values[0];
    let spread = beta * (eig.values[eig.dim() - 1] - e0) / 4.0;
    if spread > 27.0 {
        return Err(Error::IllConditioned(format!(
            "condition number of sigma^(1/4) is exp({spread:.1}); lower beta or the cutoff"
        )));
    }
    let q = eig.apply_fn(|e| (-beta * (e - e0) / 4.0).exp());
    let qi = eig.apply_fn(|e| (beta * (e - e0) / 4.0).exp());
    let m = linalg::sandwich(&qi, &qi) * generator.matrix() * linalg::sandwich(&q, &q);
    let mut meta = generator.meta().clone();
    meta.beta = beta;
    SuperOperator::from_matrix(generator.basis().clone(), linalg::symmetrize(&m), Picture::SelfadjointHs, meta)
}

/// Dressed jump `L = sum_nu f(nu) A_nu` in the Fock frame.
pub fn dressed_jump(a: &Operator, filter: &FilterFunction, spec: &SpectralDecomposition) -> CMatrix {
    let d = spec.dim();
    let ae = spec.to_eigenframe(a.matrix());
    let le = CMatrix::from_fn(d, d, |i, k| filter.eval(spec.level(i) - spec.level(k)) * ae[(i, k)]);
    spec.from_eigenframe(&le)
}

/// `e^{sH} L e^{-sH}` for the dressed jump, in the Fock frame.
pub fn conjugated_dressed_jump(a: &CMatrix, filter: &FilterFunction, spec: &SpectralDecomposition, s: f64) -> CMatrix {
    let d = spec.dim();
    let ae = spec.to_eigenframe(a);
    let le = CMatrix::from_fn(d, d, |i, k| filter.eval_scaled(spec.level(i) - spec.level(k), s) * ae[(i, k)]);
    spec.from_eigenframe(&le)
}

/// Bohr-frequency components `(nu, A_nu)` of `A` in the Fock frame; only
/// nonzero components are returned.
pub fn frequency_components(a: &CMatrix, spec: &SpectralDecomposition, bohr: &BohrFrequencySet) -> Vec<(f64, CMatrix)> {
    let d = spec.dim();
    let ae = spec.to_eigenframe(a);
    let mut parts: Vec<Option<CMatrix>> = vec![None; bohr.len()];
    for k in 0..d {
        for i in 0..d {
            let v = ae[(i, k)];
            if v == ZERO {
                continue;
            }
            let g = bohr.group_of(spec.cluster_of[i], spec.cluster_of[k]);
            parts[g].get_or_insert_with(|| CMatrix::zeros(d, d))[(i, k)] = v;
        }
    }
    parts
        .into_iter()
        .enumerate()
        .filter_map(|(g, m)| m.map(|m| (bohr.frequency(g), spec.from_eigenframe(&m))))
        .collect()
}

/// Coherent term `B` (weighted by `sigma_E`) in the Fock frame.
pub fn coherent_term(
    jumps: &[Operator],
    filter: &FilterFunction,
    h: &Operator,
    sigma_e: SigmaE,
    cluster_tol: Option<f64>,
) -> Result<Operator> {
    check_same_basis(h, jumps)?;
    check_adjoint_closed(jumps)?;
    let spec = spectral_decompose(h, cluster_tol)?;
    let bohr = BohrFrequencySet::new(&spec);
    let r = GeneratorRecipe {
        jumps: jumps.iter().map(|a| spec.to_eigenframe(a.matrix())).collect(),
        spec,
        bohr,
        filter: filter.clone(),
        sigma_e,
    };
    let fd = FrameData::new(&r);
    let plain: Vec<CMatrix> = r.jumps.iter().map(|a| dress(&r, &fd, a, 0.0)).collect();
    let k = weighted_k(&r, &fd, &plain);
    let beta = filter.beta();
    let b = CMatrix::from_fn(fd.d, fd.d, |i, j| {
        I * 0.5 * (beta * (fd.levels[i] - fd.levels[j]) / 4.0).tanh() * k[(i, j)]
    });
    let b = r.spec.from_eigenframe(&b);
    Operator::new(h.basis().clone(), b, "B")
}

/// Closed-form self-adjoint generator for `H = h(N)` on one mode with jumps
/// `{a, a^dagger}`:
/// `a^dagger g+ X g+ a + a g- X g- a^dagger - {A+, X}/2 - {A-, X}/2` with
/// `A+ = (N+1)|f(h(N+1)-h(N))|^2` (vanishing on the top level of the
/// truncation) and `A- = N |f(h(N-1)-h(N))|^2`.
pub fn number_diagonal_generator(
    h: impl Fn(usize) -> f64,
    filter: &FilterFunction,
    basis: &Arc<FockBasis>,
) -> Result<SuperOperator> {
    if basis.n_modes() != 1 {
        return Err(Error::param("number-diagonal generator needs a single mode"));
    }
    let d = basis.dim();
    if d * d > SUPEROP_DIMENSION_CAP {
        return Err(Error::DimensionCap {
            requested: (d * d) as u128,
            cap: SUPEROP_DIMENSION_CAP,
            context: "number-diagonal generator".into(),
        });
    }
    let beta = filter.beta();
    let top = d - 1;
    let hv: Vec<f64> = (0..d).map(&h).collect();
    let up = |n: usize| hv[n + 1] - hv[n];
    let gp = |n: usize| if n < top { filter.eval_scaled(up(n), beta / 4.0) } else { ZERO };
    let gm = |n: usize| if n > 0 { filter.eval_scaled(hv[n - 1] - hv[n], beta / 4.0) } else { ZERO };
    let a_plus: Vec<f64> = (0..d)
        .map(|n| if n < top { (n + 1) as f64 * filter.eval(up(n)).norm_sqr() } else { 0.0 })
        .collect();
    let a_minus: Vec<f64> = (0..d)
        .map(|n| if n > 0 { n as f64 * filter.eval(hv[n - 1] - hv[n]).norm_sqr() } else { 0.0 })
        .collect();
    let a = fock::annihilation(basis, 0)?;
    let gpm = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |n, _| gp(n)));
    let gmm = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |n, _| gm(n)));
    let raise = a.adjoint() * &gpm; // a^dagger g+(N)
    let lower = &a * &gmm; // a g-(N)
    let anti: Vec<f64> = a_plus.iter().zip(&a_minus).map(|(p, m)| 0.5 * (p + m)).collect();
    let mut s = linalg::sandwich(&raise, &raise.adjoint()) + linalg::sandwich(&lower, &lower.adjoint());
    for j in 0..d {
        for i in 0..d {
            s[(i + d * j, i + d * j)] -= C64::new(anti[i] + anti[j], 0.0);
        }
    }
    SuperOperator::from_matrix(
        basis.clone(),
        s,
        Picture::SelfadjointHs,
        GeneratorMeta {
            sigma_e: SigmaE::Infinite,
            filter: filter.id().to_string(),
            jumps: "a,a^dagger".into(),
            hamiltonian: "h(N)".into(),
            beta,
        },
    )
}

/// Derivations `d_t x = M1(t) x - x M2(t)` attached to `(H, jumps, f)`.
#[derive(Clone, Debug)]
pub struct Derivation {
    spec: SpectralDecomposition,
    /// `f(nu) A_nu` in the eigenframe, one per jump.
    dressed: Vec<CMatrix>,
    /// `e^{beta nu / 2}` ratio between right and left factors.
    ratio: Vec<f64>,
    beta: f64,
}

impl Derivation {
    pub fn new(h: &Operator, jumps: &[Operator], filter: &FilterFunction, cluster_tol: Option<f64>) -> Result<Self> {
        check_same_basis(h, jumps)?;
        let spec = spectral_decompose(h, cluster_tol)?;
        let d = spec.dim();
        let beta = filter.beta();
        let dressed = jumps
            .iter()
            .map(|a| {
                let ae = spec.to_eigenframe(a.matrix());
                CMatrix::from_fn(d, d, |i, k| filter.eval(spec.level(i) - spec.level(k)) * ae[(i, k)])
            })
            .collect();
        let mut ratio = vec![0.0; d * d];
        for k in 0..d {
            for i in 0..d {
                ratio[i + d * k] = (beta * (spec.level(i) - spec.level(k)) / 2.0).exp();
            }
        }
        Ok(Derivation {
            spec,
            dressed,
            ratio,
            beta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_jumps(&self) -> usize {
        self.dressed.len()
    }

    /// `(M1, M2)` for jump `alpha` at time `t`, in the eigenframe.
    pub fn eigen_factors(&self, alpha: usize, t: f64) -> (CMatrix, CMatrix) {
        let d = self.spec.dim();
        let l = &self.dressed[alpha];
        let m1 = CMatrix::from_fn(d, d, |i, k| {
            let nu = self.spec.level(i) - self.spec.level(k);
            l[(i, k)] * C64::from_polar(1.0, nu * t)
        });
        let m2 = CMatrix::from_fn(d, d, |i, k| m1[(i, k)] * self.ratio[i + d * k]);
        (m1, m2)
    }

    /// `(M1, M2)` in the Fock frame.
    pub fn fock_factors(&self, alpha: usize, t: f64) -> (CMatrix, CMatrix) {
        let (m1, m2) = self.eigen_factors(alpha, t);
        (self.spec.from_eigenframe(&m1), self.spec.from_eigenframe(&m2))
    }

    /// `sum_alpha ||d_t x||_2^2` for `x` in the Fock frame.
    pub fn squared_norm(&self, x: &CMatrix, t: f64) -> f64 {
        let xe = self.spec.to_eigenframe(x);
        (0..self.n_jumps())
            .map(|a| {
                let (m1, m2) = self.eigen_factors(a, t);
                let dx = &m1 * &xe - &xe * &m2;
                dx.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    /// `t`-independent bound `sum_alpha (||M1|| + ||M2||)^2` on the operator
    /// norm squared of the derivations.
    pub fn norm_bound(&self) -> f64 {
        (0..self.n_jumps())
            .map(|a| {
                let (m1, m2) = self.eigen_factors(a, 0.0);
                (linalg::op_norm(&m1) + linalg::op_norm(&m2)).powi(2)
            })
            .sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DirichletReport {
    /// `-<x, L x>` from the self-adjoint generator.
    pub direct: f64,
    /// Weighted time integral of `||d_t x||^2`.
    pub quadrature: f64,
    pub quadrature_error: f64,
    pub half_width: f64,
    pub agree: bool,
}

/// Agreement tolerance between the two Dirichlet-form evaluations.
pub const DIRICHLET_TOL: f64 = 1e-6;

/// `-<x, L x>` for a self-adjoint generator.
pub fn dirichlet_direct(l: &SuperOperator, x: &CMatrix) -> Result<f64> {
    l.require(Picture::SelfadjointHs)?;
    Ok(-linalg::hs_inner(x, &l.apply(x)).re)
}

/// Evaluates the Dirichlet form both ways. The derivation representation
/// holds for the `sigma_E = inf` generator.
pub fn dirichlet_form(
    l: &SuperOperator,
    h: &Operator,
    jumps: &[Operator],
    filter: &FilterFunction,
    x: &CMatrix,
) -> Result<DirichletReport> {
    let direct = dirichlet_direct(l, x)?;
    let der = Derivation::new(h, jumps, filter, None)?;
    let beta = filter.beta();
    let xn = linalg::frobenius(x).powi(2);
    let bound = der.norm_bound() * xn;
    let scale = direct.abs().max(1e-300);
    let tail_tol = 1e-3 * DIRICHLET_TOL * scale.max(1e-12);
    let t = quadrature::tail_cutoff(bound, beta, tail_tol);
    let r = quadrature::integrate(
        |s| der.squared_norm(x, s) * quadrature::cosh_weight(s, beta),
        -t,
        t,
        1e-3 * DIRICHLET_TOL * scale.max(1e-12),
        1e-10,
        4000,
    );
    let err = r.error + bound * quadrature::tail_mass(t, beta);
    if !r.converged {
        return Err(Error::numerical(format!(
            "Dirichlet quadrature did not converge: residual {:.3e}",
            r.error
        )));
    }
    Ok(DirichletReport {
        direct,
        quadrature: r.value,
        quadrature_error: err,
        half_width: t,
        agree: (direct - r.value).abs() <= DIRICHLET_TOL * direct.abs().max(1.0),
    })
}
