//! Putinar certificates as JSON: polynomials in text form, Gram matrices as
//! row lists over a monomial basis.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use vecstab_core::poly::{Monomial, Polynomial, Universe};
use vecstab_core::sos::{Certificate, GramPoly};

use super::parse_poly;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub variables: Vec<String>,
    pub target: String,
    pub sigma0: GramFile,
    pub ineqs: Vec<IneqFile>,
    pub eqs: Vec<EqFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramFile {
    pub basis: Vec<String>,
    pub gram: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IneqFile {
    pub k: String,
    pub sigma: GramFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqFile {
    pub h: String,
    pub lambda: String,
}

fn monomial_text(u: &Arc<Universe>, m: &Monomial) -> String {
    Polynomial::from_terms(u, [(m.clone(), 1.0)]).to_string()
}

fn parse_monomial(u: &Arc<Universe>, text: &str) -> Result<Monomial> {
    let p = parse_poly(u, text)?;
    let mut terms = p.terms();
    match (terms.next(), terms.next()) {
        (Some((m, c)), None) if c == 1.0 => Ok(m.clone()),
        _ => Err(Error::Format(format!("`{text}` is not a monomial"))),
    }
}

impl GramFile {
    fn from_gram(u: &Arc<Universe>, g: &GramPoly) -> Self {
        GramFile {
            basis: g.basis.iter().map(|m| monomial_text(u, m)).collect(),
            gram: (0..g.gram.nrows()).map(|r| g.gram.row(r).iter().copied().collect()).collect(),
        }
    }

    fn to_gram(&self, u: &Arc<Universe>) -> Result<GramPoly> {
        let n = self.basis.len();
        if self.gram.len() != n || self.gram.iter().any(|r| r.len() != n) {
            return Err(Error::Format(format!("Gram matrix is not {n}x{n}")));
        }
        Ok(GramPoly {
            basis: self.basis.iter().map(|t| parse_monomial(u, t)).collect::<Result<_>>()?,
            gram: DMatrix::from_fn(n, n, |r, c| self.gram[r][c]),
        })
    }
}

impl CertificateFile {
    pub fn from_certificate(c: &Certificate) -> Self {
        let u = &c.universe;
        CertificateFile {
            variables: u.names().to_vec(),
            target: c.target.to_string(),
            sigma0: GramFile::from_gram(u, &c.sigma0),
            ineqs: c
                .ineqs
                .iter()
                .map(|(k, s)| IneqFile { k: k.to_string(), sigma: GramFile::from_gram(u, s) })
                .collect(),
            eqs: c
                .eqs
                .iter()
                .map(|(h, l)| EqFile { h: h.to_string(), lambda: l.to_string() })
                .collect(),
        }
    }

    pub fn to_certificate(&self) -> Result<Certificate> {
        let u = Universe::new(&self.variables)?;
        Ok(Certificate {
            target: parse_poly(&u, &self.target)?,
            sigma0: self.sigma0.to_gram(&u)?,
            ineqs: self
                .ineqs
                .iter()
                .map(|i| Ok((parse_poly(&u, &i.k)?, i.sigma.to_gram(&u)?)))
                .collect::<Result<_>>()?,
            eqs: self
                .eqs
                .iter()
                .map(|e| Ok((parse_poly(&u, &e.h)?, parse_poly(&u, &e.lambda)?)))
                .collect::<Result<_>>()?,
            universe: u,
        })
    }
}
