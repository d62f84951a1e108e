//! Interconnected polynomial systems `x_i' = f_i(x_i) + sum_j g_ij(x_i, x_j)`.

mod vdp;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg::max_real_eigenvalue;
use crate::poly::{Monomial, PolyError, Polynomial, Universe, VarId};

pub use vdp::{
    default_topology, generate_vdp_network, vdp_network_from_params, EdgeParams, Topology, VdpParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("duplicate subsystem id {0}")]
    DuplicateSubsystem(usize),
    #[error("unknown subsystem id {0}")]
    UnknownSubsystem(usize),
    #[error("subsystem {id}: {f} dynamics components for {n} states")]
    DimensionMismatch { id: usize, f: usize, n: usize },
    #[error("duplicate interaction {from} -> {to}")]
    DuplicateInteraction { to: usize, from: usize },
    #[error("self-interaction on subsystem {0}")]
    SelfInteraction(usize),
    #[error("interaction {from} -> {to} uses variables outside x_{to} and x_{from}")]
    ForeignVariables { to: usize, from: usize },
    #[error("subsystem {0} uses variables outside its state")]
    ForeignStateVariables(usize),
    #[error("degenerate draw: 1 - sum beta~ = {0} for subsystem {1}")]
    DegenerateDraw(f64, usize),
    #[error("topology neighborhood of {0} does not contain {0}")]
    BadTopology(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subsystem {
    pub id: usize,
    pub state_vars: Vec<VarId>,
    pub f: Vec<Polynomial>,
}

impl Subsystem {
    pub fn dim(&self) -> usize {
        self.state_vars.len()
    }

    /// Jacobian of `f` at the origin.
    pub fn linearization(&self) -> DMatrix<f64> {
        linearization(&self.f, &self.state_vars)
    }
}

/// `g_ij`: the effect of subsystem `from` (j) on subsystem `to` (i).
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub to: usize,
    pub from: usize,
    pub g: Vec<Polynomial>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    universe: Arc<Universe>,
    subsystems: Vec<Subsystem>,
    interactions: Vec<Interaction>,
    /// `N_i`: `i` first, then the neighbors with nonzero `g_ij` ascending.
    neighborhoods: BTreeMap<usize, Vec<usize>>,
}

/// Jacobian at the origin: coefficient of `x_k` in `f_r`.
pub fn linearization(f: &[Polynomial], vars: &[VarId]) -> DMatrix<f64> {
    DMatrix::from_fn(f.len(), vars.len(), |r, c| f[r].coefficient(&Monomial::var(vars[c])))
}

impl Network {
    pub fn new(
        universe: &Arc<Universe>,
        subsystems: Vec<Subsystem>,
        interactions: Vec<Interaction>,
    ) -> Result<Network, ModelError> {
        let mut ids = BTreeSet::new();
        for s in &subsystems {
            if !ids.insert(s.id) {
                return Err(ModelError::DuplicateSubsystem(s.id));
            }
            if s.f.len() != s.state_vars.len() {
                return Err(ModelError::DimensionMismatch {
                    id: s.id,
                    f: s.f.len(),
                    n: s.state_vars.len(),
                });
            }
            for p in &s.f {
                if !Universe::compatible(p.universe(), universe) {
                    return Err(PolyError::UniverseMismatch.into());
                }
                if !p.variables().iter().all(|v| s.state_vars.contains(v)) {
                    return Err(ModelError::ForeignStateVariables(s.id));
                }
            }
        }
        let mut net = Network {
            universe: universe.clone(),
            subsystems,
            interactions: Vec::new(),
            neighborhoods: BTreeMap::new(),
        };
        let mut seen = BTreeSet::new();
        for it in interactions {
            if it.to == it.from {
                return Err(ModelError::SelfInteraction(it.to));
            }
            let to = net.subsystem(it.to).ok_or(ModelError::UnknownSubsystem(it.to))?;
            let from = net.subsystem(it.from).ok_or(ModelError::UnknownSubsystem(it.from))?;
            if it.g.len() != to.dim() {
                return Err(ModelError::DimensionMismatch {
                    id: it.to,
                    f: it.g.len(),
                    n: to.dim(),
                });
            }
            let allowed: Vec<VarId> = to.state_vars.iter().chain(&from.state_vars).copied().collect();
            for p in &it.g {
                if !Universe::compatible(p.universe(), universe) {
                    return Err(PolyError::UniverseMismatch.into());
                }
                if !p.variables().iter().all(|v| allowed.contains(v)) {
                    return Err(ModelError::ForeignVariables { to: it.to, from: it.from });
                }
            }
            if !seen.insert((it.to, it.from)) {
                return Err(ModelError::DuplicateInteraction { to: it.to, from: it.from });
            }
            net.interactions.push(it);
        }
        net.interactions.sort_by_key(|it| (it.to, it.from));
        net.neighborhoods = net.derive_neighborhoods();
        Ok(net)
    }

    /// `N_i = {i} ∪ {j : g_ij ≢ 0}`.
    pub fn derive_neighborhoods(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = self.subsystems.iter().map(|s| (s.id, alloc::vec![s.id])).collect();
        for it in &self.interactions {
            if it.g.iter().any(|p| !p.is_zero()) {
                out.get_mut(&it.to).unwrap().push(it.from);
            }
        }
        for n in out.values_mut() {
            n[1..].sort_unstable();
        }
        out
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn ids(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.id).collect()
    }

    pub fn subsystem(&self, id: usize) -> Option<&Subsystem> {
        self.subsystems.iter().find(|s| s.id == id)
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.subsystems.iter().position(|s| s.id == id)
    }

    pub fn neighborhood(&self, id: usize) -> &[usize] {
        self.neighborhoods.get(&id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn neighborhoods(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.neighborhoods
    }

    pub fn interaction(&self, to: usize, from: usize) -> Option<&Interaction> {
        self.interactions.iter().find(|it| it.to == to && it.from == from)
    }

    /// Interactions acting on `to`, ordered by source.
    pub fn incoming(&self, to: usize) -> impl Iterator<Item = &Interaction> + '_ {
        self.interactions.iter().filter(move |it| it.to == to)
    }

    /// `g_i = sum_j g_ij`, computed on demand.
    pub fn g_sum(&self, to: usize) -> Vec<Polynomial> {
        let n = self.subsystem(to).map(|s| s.dim()).unwrap_or(0);
        let mut acc = alloc::vec![Polynomial::zero(&self.universe); n];
        for it in self.incoming(to) {
            for (a, g) in acc.iter_mut().zip(&it.g) {
                *a = &*a + g;
            }
        }
        acc
    }

    /// Full vector field in the order of `all_state_vars`.
    pub fn vector_field(&self) -> Vec<Polynomial> {
        let mut out = Vec::new();
        for s in &self.subsystems {
            let g = self.g_sum(s.id);
            for (f, g) in s.f.iter().zip(&g) {
                out.push(f + g);
            }
        }
        out
    }

    pub fn all_state_vars(&self) -> Vec<VarId> {
        self.subsystems.iter().flat_map(|s| s.state_vars.iter().copied()).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.neighborhoods.values().map(|n| n.len() - 1).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    /// `f_i(0) != 0`.
    DriftAtOrigin { id: usize, component: usize, value: f64 },
    /// `g_ij(x_i, 0)` is not identically zero.
    InteractionWithoutNeighbor {
        to: usize,
        from: usize,
        component: usize,
        residual: String,
    },
    NeighborhoodMismatch { id: usize, stored: Vec<usize>, derived: Vec<usize> },
    /// Isolated linearization is not Hurwitz.
    NotHurwitz { id: usize, max_real_eigenvalue: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate(net: &Network) -> ValidationReport {
    let mut issues = Vec::new();
    for s in &net.subsystems {
        for (c, f) in s.f.iter().enumerate() {
            let v = f.constant_term();
            if v != 0.0 {
                issues.push(Issue::DriftAtOrigin { id: s.id, component: c, value: v });
            }
        }
        let lam = max_real_eigenvalue(&s.linearization());
        if !(lam < 0.0) {
            issues.push(Issue::NotHurwitz {
                id: s.id,
                max_real_eigenvalue: lam,
            });
        }
    }
    for it in &net.interactions {
        let own = &net.subsystem(it.to).unwrap().state_vars;
        for (c, g) in it.g.iter().enumerate() {
            let r = g.restrict_to(own);
            if !r.is_zero() {
                issues.push(Issue::InteractionWithoutNeighbor {
                    to: it.to,
                    from: it.from,
                    component: c,
                    residual: alloc::format!("{r}"),
                });
            }
        }
    }
    let derived = net.derive_neighborhoods();
    for (id, stored) in &net.neighborhoods {
        let d = derived.get(id).cloned().unwrap_or_default();
        if &d != stored {
            issues.push(Issue::NeighborhoodMismatch {
                id: *id,
                stored: stored.clone(),
                derived: d,
            });
        }
    }
    ValidationReport { issues }
}
