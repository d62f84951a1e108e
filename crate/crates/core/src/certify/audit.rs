//! Independent re-verification of every certificate the constructions
//! produce: symbolic re-expansion plus sampling of the claimed inequality.

use alloc::vec;

use super::local::{Ctx, LevelBox};
use super::{CertifyError, CertifyOptions};
use crate::lyap::{embed, radial_level, random_direction};
use crate::rng::Stream;
use crate::sos::{check_certificate, Certificate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Direct,
    Phase1,
    Phase1Edge,
    Phase2,
    Phase2Edge,
    Closure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertRecord {
    pub stage: Stage,
    pub round: usize,
    pub agent: usize,
    pub edge: Option<usize>,
    pub coeff_residual: f64,
    pub min_eigenvalue: f64,
    /// Largest `-target(x)` over the samples (`None` when sampling is off).
    pub sample_violation: Option<f64>,
}

impl CertRecord {
    pub fn passes(&self, coeff_tol: f64, psd_tol: f64, sample_tol: f64) -> bool {
        self.coeff_residual <= coeff_tol
            && self.min_eigenvalue >= -psd_tol
            && self.sample_violation.is_none_or(|v| v <= sample_tol)
    }
}

fn stream_id(stage: Stage, round: usize, agent: usize, edge: Option<usize>) -> u64 {
    ((stage as u64) << 56) | ((round as u64 & 0xffff) << 32) | ((agent as u64 & 0xffff) << 16) | edge.map_or(0, |e| e as u64 + 1)
}

/// Re-expands `cert` and samples `target >= 0` over the level boxes.
#[allow(clippy::too_many_arguments)]
pub fn audit_certificate(
    ctx: &Ctx<'_>,
    cert: &Certificate,
    domain: &[LevelBox],
    stage: Stage,
    round: usize,
    agent: usize,
    edge: Option<usize>,
    opts: &CertifyOptions,
) -> Result<CertRecord, CertifyError> {
    let chk = check_certificate(cert)?;
    let sample_violation = if opts.audit_samples == 0 {
        None
    } else {
        let mut rng = Stream::new(opts.audit_seed, stream_id(stage, round, agent, edge));
        let mut x = vec![0.0; ctx.net.universe().len()];
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..opts.audit_samples {
            for b in domain {
                let lf = &ctx.lfs[b.sub];
                let level = b.lo + (b.hi - b.lo) * rng.unit();
                let dir = random_direction(lf.vars.len(), &mut rng);
                let r = radial_level(&lf.v, &lf.vars, &dir, level);
                let local: alloc::vec::Vec<f64> = dir.iter().map(|d| d * r).collect();
                embed(&mut x, &lf.vars, &local);
            }
            worst = worst.max(-cert.target.eval(&x));
        }
        Some(worst)
    };
    Ok(CertRecord {
        stage,
        round,
        agent,
        edge,
        coeff_residual: chk.coeff_residual,
        min_eigenvalue: chk.min_eigenvalue,
        sample_violation,
    })
}
