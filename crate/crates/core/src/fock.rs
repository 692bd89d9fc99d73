//! Truncated multi-mode bosonic Fock spaces and operators on them.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};

/// Default hard cap on the number of basis states.
pub const DEFAULT_DIMENSION_CAP: usize = 20_000;

/// Hermiticity gate: `max|A - A^dagger| <= HERMITIAN_TOL * max(1, max|A|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Tolerance used when checking `[A, N_tot] = 0`.
pub const COMMUTATOR_TOL: f64 = 1e-10;

/// Occupation-number basis with a per-mode cutoff and an optional cap on the
/// total occupation. States are ordered by total occupation, then
/// lexicographically by occupation vector.
#[derive(Clone, PartialEq, Eq)]
pub struct FockBasis {
    n_modes: usize,
    per_mode_cutoff: usize,
    total_cutoff: Option<usize>,
    states: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl fmt::Debug for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FockBasis")
            .field("n_modes", &self.n_modes)
            .field("per_mode_cutoff", &self.per_mode_cutoff)
            .field("total_cutoff", &self.total_cutoff)
            .field("dim", &self.states.len())
            .finish()
    }
}

impl FockBasis {
    pub fn new(n_modes: usize, per_mode_cutoff: usize, total_cutoff: Option<usize>) -> Result<Arc<Self>> {
        Self::with_cap(n_modes, per_mode_cutoff, total_cutoff, DEFAULT_DIMENSION_CAP)
    }

    /// Builds the basis, refusing before enumeration if the state count
    /// exceeds `cap`.
    pub fn with_cap(
        n_modes: usize,
        per_mode_cutoff: usize,
        total_cutoff: Option<usize>,
        cap: usize,
    ) -> Result<Arc<Self>> {
        if n_modes == 0 {
            return Err(Error::param("n_modes must be at least 1"));
        }
        if per_mode_cutoff > u16::MAX as usize {
            return Err(Error::param("per_mode_cutoff too large"));
        }
        let count = Self::count_states(n_modes, per_mode_cutoff, total_cutoff);
        if count > cap as u128 {
            return Err(Error::DimensionCap {
                requested: count,
                cap,
                context: format!(
                    "Fock basis with {n_modes} modes, per-mode cutoff {per_mode_cutoff}, total cutoff {total_cutoff:?}"
                ),
            });
        }
        let max_total = n_modes * per_mode_cutoff;
        let top = total_cutoff.map_or(max_total, |t| t.min(max_total));
        let mut states = Vec::with_capacity(count as usize);
        let mut scratch = vec![0u16; n_modes];
        for total in 0..=top {
            compositions(&mut scratch, 0, total, per_mode_cutoff, &mut states);
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Arc::new(FockBasis {
            n_modes,
            per_mode_cutoff,
            total_cutoff,
            states,
            index,
        }))
    }

    /// Number of occupation vectors admitted by the cutoffs, without
    /// enumerating them.
    pub fn count_states(n_modes: usize, per_mode_cutoff: usize, total_cutoff: Option<usize>) -> u128 {
        let max_total = n_modes * per_mode_cutoff;
        let top = total_cutoff.map_or(max_total, |t| t.min(max_total));
        // ways[t] = number of vectors over the modes seen so far with sum t
        let mut ways = vec![0u128; top + 1];
        ways[0] = 1;
        for _ in 0..n_modes {
            let mut next = vec![0u128; top + 1];
            for (t, &w) in ways.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                for k in 0..=per_mode_cutoff.min(top - t) {
                    next[t + k] = next[t + k].saturating_add(w);
                }
            }
            ways = next;
        }
        ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn per_mode_cutoff(&self) -> usize {
        self.per_mode_cutoff
    }

    pub fn total_cutoff(&self) -> Option<usize> {
        self.total_cutoff
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u16>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u16] {
        &self.states[i]
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn total(&self, i: usize) -> usize {
        self.states[i].iter().map(|&n| n as usize).sum()
    }

    /// Largest total occupation present in the basis.
    pub fn max_total(&self) -> usize {
        self.states.last().map_or(0, |s| s.iter().map(|&n| n as usize).sum())
    }

    pub fn vacuum_index(&self) -> usize {
        0
    }
}

fn compositions(scratch: &mut [u16], pos: usize, remaining: usize, cap: usize, out: &mut Vec<Vec<u16>>) {
    let n = scratch.len();
    if pos == n - 1 {
        if remaining <= cap {
            scratch[pos] = remaining as u16;
            out.push(scratch.to_vec());
        }
        return;
    }
    let left = n - pos - 1;
    let lo = remaining.saturating_sub(left * cap);
    for k in lo..=remaining.min(cap) {
        scratch[pos] = k as u16;
        compositions(scratch, pos + 1, remaining - k, cap, out);
    }
}

/// A square matrix on a Fock basis with provenance.
#[derive(Clone, Debug)]
pub struct Operator {
    basis: Arc<FockBasis>,
    matrix: CMatrix,
    hermitian: bool,
    label: String,
}

impl Operator {
    /// Wraps a matrix; the Hermitian flag is detected with the Hermiticity gate.
    pub fn new(basis: Arc<FockBasis>, matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        let d = basis.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "operator is {}x{} but basis has dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = passes_hermitian_gate(&matrix);
        Ok(Operator {
            basis,
            matrix,
            hermitian,
            label: label.into(),
        })
    }

    /// Like [`Operator::new`] but fails unless the matrix is Hermitian.
    pub fn hermitian(basis: Arc<FockBasis>, matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        let op = Self::new(basis, matrix, label)?;
        if !op.hermitian {
            return Err(Error::NotHermitian {
                defect: linalg::hermiticity_defect(&op.matrix),
            });
        }
        Ok(op)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            basis: self.basis.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
            label: format!("({})^dagger", self.label),
        }
    }

    /// Fraction of exactly-zero entries.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.matrix.iter().filter(|z| **z == ZERO).count();
        zeros as f64 / self.matrix.len().max(1) as f64
    }

    /// Suggested storage: triplets when at least a quarter of the entries vanish.
    pub fn storage_hint(&self) -> Storage {
        if self.zero_fraction() >= 0.25 {
            Storage::Triplet
        } else {
            Storage::Dense
        }
    }

    /// Frobenius norm of `[A, B]`, an upper bound on its operator norm.
    pub fn commutator_norm(&self, other: &CMatrix) -> f64 {
        let c = &self.matrix * other - other * &self.matrix;
        linalg::frobenius(&c)
    }

    /// Frobenius norm of `[A, N_tot]`.
    pub fn number_commutator_norm(&self) -> f64 {
        // N_tot is diagonal, so [A, N]_{ij} = A_ij (n_j - n_i)
        let b = &self.basis;
        let mut s = 0.0;
        for j in 0..b.dim() {
            for i in 0..b.dim() {
                let dn = b.total(j) as f64 - b.total(i) as f64;
                s += (self.matrix[(i, j)] * dn).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn to_json(&self) -> OperatorJson {
        OperatorJson::from_matrix(&self.matrix, &self.label)
    }

    pub fn from_json(basis: Arc<FockBasis>, json: &OperatorJson) -> Result<Self> {
        let m = json.to_matrix()?;
        Self::new(basis, m, json.label.clone())
    }
}

pub fn passes_hermitian_gate(m: &CMatrix) -> bool {
    linalg::hermiticity_defect(m) <= HERMITIAN_TOL * linalg::max_abs(m).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Dense,
    Triplet,
}

/// Sparse triplet interchange format `{dims, entries: [[row, col, re, im], ...], label}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorJson {
    pub dims: [usize; 2],
    pub entries: Vec<(usize, usize, f64, f64)>,
    pub label: String,
}

impl OperatorJson {
    pub fn from_matrix(m: &CMatrix, label: &str) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if z != ZERO {
                    entries.push((i, j, z.re, z.im));
                }
            }
        }
        OperatorJson {
            dims: [m.nrows(), m.ncols()],
            entries,
            label: label.to_string(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let [r, c] = self.dims;
        let mut m = CMatrix::zeros(r, c);
        for &(i, j, a, b) in &self.entries {
            if i >= r || j >= c {
                return Err(Error::ShapeMismatch(format!("entry ({i}, {j}) outside {r}x{c}")));
            }
            m[(i, j)] += C64::new(a, b);
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderKind {
    Annihilate,
    Create,
    Number,
}

/// Truncated ladder or number operator of one mode. Creation maps states at
/// the cutoff to zero.
pub fn ladder_operator(basis: &Arc<FockBasis>, mode: usize, kind: LadderKind) -> Result<Operator> {
    if mode >= basis.n_modes() {
        return Err(Error::param(format!(
            "mode {mode} out of range for {} modes",
            basis.n_modes()
        )));
    }
    let d = basis.dim();
    let mut a = CMatrix::zeros(d, d);
    let mut lowered = vec![0u16; basis.n_modes()];
    for (col, state) in basis.states().iter().enumerate() {
        let n = state[mode];
        if n == 0 {
            continue;
        }
        lowered.copy_from_slice(state);
        lowered[mode] -= 1;
        if let Some(row) = basis.index_of(&lowered) {
            a[(row, col)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let label = |s: &str| format!("{s}_{mode}");
    match kind {
        LadderKind::Annihilate => Operator::new(basis.clone(), a, label("a")),
        LadderKind::Create => Operator::new(basis.clone(), a.adjoint(), label("a^dagger")),
        LadderKind::Number => {
            let n = a.adjoint() * &a;
            Operator::hermitian(basis.clone(), n, label("N"))
        }
    }
}

pub fn annihilation(basis: &Arc<FockBasis>, mode: usize) -> Result<CMatrix> {
    Ok(ladder_operator(basis, mode, LadderKind::Annihilate)?.into_matrix())
}

/// Diagonal total-number operator.
pub fn total_number(basis: &Arc<FockBasis>) -> Operator {
    let totals: Vec<f64> = (0..basis.dim()).map(|i| basis.total(i) as f64).collect();
    Operator::hermitian(basis.clone(), linalg::diag(&totals), "N_tot").expect("diagonal is Hermitian")
}

/// Diagonal projector onto states whose total occupation equals `k`.
pub fn sector_projector(basis: &Arc<FockBasis>, k: usize) -> Operator {
    let v: Vec<f64> = (0..basis.dim()).map(|i| (basis.total(i) == k) as u8 as f64).collect();
    Operator::hermitian(basis.clone(), linalg::diag(&v), format!("P_sector{k}")).expect("diagonal")
}

/// Diagonal projector onto states whose total occupation is at most `k`.
pub fn total_at_most_projector(basis: &Arc<FockBasis>, k: usize) -> CMatrix {
    let v: Vec<f64> = (0..basis.dim()).map(|i| (basis.total(i) <= k) as u8 as f64).collect();
    linalg::diag(&v)
}

/// Diagonal projector onto states with every mode occupied at most `m` times.
pub fn per_mode_projector(basis: &Arc<FockBasis>, m: usize) -> CMatrix {
    let v: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| s.iter().all(|&n| n as usize <= m) as u8 as f64)
        .collect();
    linalg::diag(&v)
}

/// Tolerance on the integrality of a number operator's spectrum.
pub const INTEGER_SPECTRUM_TOL: f64 = 1e-6;

/// Spectral projector `1{N <= threshold}` of a Hermitian operator with
/// integer spectrum.
pub fn occupation_projector(number: &Operator, threshold: usize) -> Result<Operator> {
    if !number.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: linalg::hermiticity_defect(number.matrix()),
        });
    }
    let eig = linalg::eigh(number.matrix())?;
    for &l in &eig.values {
        if (l - l.round()).abs() > INTEGER_SPECTRUM_TOL || l < -INTEGER_SPECTRUM_TOL {
            return Err(Error::Invariant(format!(
                "number operator '{}' has non-integer eigenvalue {l}",
                number.label()
            )));
        }
    }
    let cut = threshold as f64 + 0.5;
    let p = eig.apply_fn(|l| if l < cut { 1.0 } else { 0.0 });
    let p = linalg::symmetrize(&p);
    Operator::hermitian(number.basis().clone(), p, format!("1{{{} <= {threshold}}}", number.label()))
}

/// One block of a number-conserving operator.
#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub total: usize,
    pub indices: Vec<usize>,
    pub block: CMatrix,
}

/// Splits a number-conserving operator into its total-occupation blocks.
pub fn number_sector_blocks(op: &Operator) -> Result<Vec<SectorBlock>> {
    let defect = op.number_commutator_norm();
    if defect > COMMUTATOR_TOL * linalg::max_abs(op.matrix()).max(1.0) {
        return Err(Error::NotNumberConserving { defect });
    }
    let basis = op.basis();
    let mut by_total: Vec<Vec<usize>> = vec![Vec::new(); basis.max_total() + 1];
    for i in 0..basis.dim() {
        by_total[basis.total(i)].push(i);
    }
    Ok(by_total
        .into_iter()
        .enumerate()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(total, indices)| {
            let k = indices.len();
            let block = CMatrix::from_fn(k, k, |a, b| op.matrix()[(indices[a], indices[b])]);
            SectorBlock { total, indices, block }
        })
        .collect())
}

/// Inverse of [`number_sector_blocks`].
pub fn reassemble_blocks(dim: usize, blocks: &[SectorBlock]) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for b in blocks {
        for (a, &i) in b.indices.iter().enumerate() {
            for (c, &j) in b.indices.iter().enumerate() {
                m[(i, j)] = b.block[(a, c)];
            }
        }
    }
    m
}
