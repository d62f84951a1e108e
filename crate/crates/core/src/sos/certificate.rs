//! Putinar certificates: `p - sum s_j k_j - sum l_l h_l = s_0`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{GramPoly, Multiplier, SosError, SosExpr, SosProgram, SosStatus};
use crate::poly::{Polynomial, Universe, VarId};
use crate::sdp::SolverOptions;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DomainSense {
    /// `k >= 0`
    NonNeg,
    /// `k = 0`
    Zero,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub universe: Arc<Universe>,
    pub target: Polynomial,
    pub sigma0: GramPoly,
    pub ineqs: Vec<(Polynomial, GramPoly)>,
    pub eqs: Vec<(Polynomial, Polynomial)>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CertificateCheck {
    /// Max absolute coefficient of `p - sum s_j k_j - sum l_l h_l - s_0`.
    pub coeff_residual: f64,
    /// Smallest eigenvalue over all Gram matrices (`+inf` when there are none).
    pub min_eigenvalue: f64,
}

impl CertificateCheck {
    pub fn is_valid(&self, coeff_tol: f64, psd_tol: f64) -> bool {
        self.coeff_residual <= coeff_tol && self.min_eigenvalue >= -psd_tol
    }
}

/// Re-expands the identity symbolically and checks every Gram matrix.
pub fn check_certificate(cert: &Certificate) -> Result<CertificateCheck, SosError> {
    let u = &cert.universe;
    let mut r = cert.target.checked_sub(&cert.sigma0.polynomial(u))?;
    let mut min_eig = cert.sigma0.min_eigenvalue();
    for (k, s) in &cert.ineqs {
        r = r.checked_sub(&k.checked_mul(&s.polynomial(u))?)?;
        min_eig = min_eig.min(s.min_eigenvalue());
    }
    for (h, l) in &cert.eqs {
        r = r.checked_sub(&h.checked_mul(l)?)?;
    }
    Ok(CertificateCheck {
        coeff_residual: r.max_abs_coefficient(),
        min_eigenvalue: min_eig,
    })
}

/// Even ceiling of `target_degree - k_degree`, clamped to `[0, 4]`.
pub fn default_multiplier_degree(target_degree: u32, k_degree: u32) -> u32 {
    let d = target_degree.saturating_sub(k_degree);
    (d + d % 2).min(4)
}

#[derive(Clone, Debug)]
pub enum ProveOutcome {
    Certificate(Certificate),
    Infeasible,
    Unknown,
}

/// Searches for a Putinar certificate of `p >= 0` on the given domain.
/// `degrees` overrides the per-domain-polynomial multiplier degree.
pub fn prove_nonneg_on(
    p: &Polynomial,
    domain: &[(Polynomial, DomainSense)],
    degrees: Option<&[u32]>,
    opts: &SolverOptions,
) -> Result<ProveOutcome, SosError> {
    let u = p.universe().clone();
    let mut vars: Vec<VarId> = p.variables();
    for (k, _) in domain {
        if !Universe::compatible(k.universe(), &u) {
            return Err(crate::poly::PolyError::UniverseMismatch.into());
        }
        vars.extend(k.variables());
    }
    vars.sort_unstable();
    vars.dedup();
    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    for (j, (k, sense)) in domain.iter().enumerate() {
        let degree = match degrees.and_then(|d| d.get(j)) {
            Some(&d) => d,
            None => default_multiplier_degree(p.degree(), k.degree()),
        };
        let m = Multiplier {
            vars: vars.clone(),
            degree,
        };
        match sense {
            DomainSense::NonNeg => ineqs.push((k.clone(), m)),
            DomainSense::Zero => eqs.push((k.clone(), m)),
        }
    }
    let mut prog = SosProgram::new(&u);
    let h = prog.add_putinar(SosExpr::known(p.clone()), &ineqs, &eqs)?;
    let sol = prog.solve(opts)?;
    Ok(match sol.status {
        SosStatus::Optimal | SosStatus::Feasible => {
            let cert = prog.certificate(&sol, &h)?;
            let chk = check_certificate(&cert)?;
            if chk.is_valid(1e-6, opts.psd_tol) {
                ProveOutcome::Certificate(cert)
            } else {
                ProveOutcome::Unknown
            }
        }
        SosStatus::Infeasible => ProveOutcome::Infeasible,
        SosStatus::Unbounded | SosStatus::Unknown => ProveOutcome::Unknown,
    })
}
