//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use gibbs_core::filters::FilterFunction;
use gibbs_core::models::{self, BoseHubbardParams, Boundary, LatticeSpec, MeanFieldParams};
use gibbs_core::{FockBasis, Operator, Result, C64};

pub struct Fixture {
    pub name: String,
    pub basis: Arc<FockBasis>,
    pub h: Operator,
    pub jumps: Vec<Operator>,
    pub filter: FilterFunction,
}

/// Single-mode `H = N` with ladder jumps.
pub fn qou(cutoff: usize) -> Result<Fixture> {
    let basis = FockBasis::new(1, cutoff, None)?;
    Ok(Fixture {
        name: format!("qou/d={}", basis.dim()),
        h: models::number_hamiltonian(&basis)?,
        jumps: models::ladder_jumps(&basis)?,
        filter: FilterFunction::metropolis(1.0)?,
        basis,
    })
}

pub fn mean_field(cutoff: usize, psi: f64) -> Result<Fixture> {
    let basis = FockBasis::new(1, cutoff, None)?;
    Ok(Fixture {
        name: format!("mean_field/d={}", basis.dim()),
        h: models::build_mean_field(&MeanFieldParams::new(0.5, 2.0, C64::new(psi, 0.0)), &basis)?,
        jumps: models::ladder_jumps(&basis)?,
        filter: FilterFunction::metropolis(1.0)?,
        basis,
    })
}

/// Two-site superfluid truncation with a total occupation cap.
pub fn superfluid(total: usize, m_prime: usize) -> Result<Fixture> {
    let lattice = LatticeSpec::new(1, 2, Boundary::Open)?;
    let params = BoseHubbardParams::regularized(0.2, 1.0, 1.5, 1.0);
    let basis = FockBasis::new(2, total, Some(total))?;
    Ok(Fixture {
        name: format!("superfluid/d={}", basis.dim()),
        h: models::build_superfluid_truncation(&lattice, &params, m_prime, &basis)?,
        jumps: models::ladder_jumps(&basis)?,
        filter: FilterFunction::gaussian_kms(1.0, None)?,
        basis,
    })
}
