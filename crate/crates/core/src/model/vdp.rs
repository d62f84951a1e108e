//! Randomized network of modified Van der Pol oscillators, shifted so the
//! equilibrium sits at the origin:
//!
//! ```text
//! f_i  = [x_i2, mu_i x_i2 (c1_i - c2_i x_i1 - x_i1^2) - c3_i x_i1]
//! g_ij = [0, b1_ij x_j2 + b2_ij x_j2 x_i1]
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Interaction, ModelError, Network, Subsystem};
use crate::poly::{Polynomial, Universe, VarId};
use crate::rng::Stream;

/// `i -> N_i` with `i` listed first.
pub type Topology = BTreeMap<usize, Vec<usize>>;

/// The nine-oscillator interconnection used throughout the examples.
pub fn default_topology() -> Topology {
    [
        (1, vec![1, 2, 5, 9]),
        (2, vec![2, 1, 3]),
        (3, vec![3, 2, 8]),
        (4, vec![4, 6, 7]),
        (5, vec![5, 1, 6]),
        (6, vec![6, 4, 5]),
        (7, vec![7, 4, 8, 9]),
        (8, vec![8, 3, 7]),
        (9, vec![9, 1, 7]),
    ]
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeParams {
    pub to: usize,
    pub from: usize,
    pub c: f64,
    pub beta1_tilde: f64,
    pub beta2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VdpParams {
    pub seed: u64,
    pub prng: String,
    /// `(id, mu_i)` ascending by id.
    pub mu: Vec<(usize, f64)>,
    pub edges: Vec<EdgeParams>,
    // Derived quantities, per subsystem / per edge in the same order.
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub beta1: Vec<f64>,
    /// Unshifted equilibrium `x~*_i1`.
    pub equilibrium: Vec<f64>,
}

pub const MU_RANGE: (f64, f64) = (-3.0, -1.0);
pub const C_RANGE: (f64, f64) = (-0.2, 0.2);
pub const BETA1_TILDE_RANGE: (f64, f64) = (-0.1, 0.1);
pub const BETA2_RANGE: (f64, f64) = (-0.1, 0.1);

fn edge_stream(i: usize, j: usize) -> u64 {
    (1u64 << 32) | ((i as u64) << 16) | j as u64
}

fn check_topology(topology: &Topology) -> Result<(), ModelError> {
    for (&i, n) in topology {
        if n.first() != Some(&i) {
            return Err(ModelError::BadTopology(i));
        }
        for j in &n[1..] {
            if !topology.contains_key(j) {
                return Err(ModelError::UnknownSubsystem(*j));
            }
        }
    }
    Ok(())
}

/// Draws all parameters from their ranges and builds the shifted network.
/// A draw whose denominator `1 - sum beta~` is within 1e-6 of zero is redrawn
/// from the next attempt counter in the same stream.
pub fn generate_vdp_network(seed: u64, topology: &Topology) -> Result<(Network, VdpParams), ModelError> {
    check_topology(topology)?;
    let mut mu = Vec::new();
    let mut edges = Vec::new();
    for (&i, n) in topology {
        mu.push((i, Stream::new(seed, i as u64).uniform(MU_RANGE.0, MU_RANGE.1)));
        let mut draws: Vec<(usize, Stream)> = n[1..].iter().map(|&j| (j, Stream::new(seed, edge_stream(i, j)))).collect();
        loop {
            let row: Vec<EdgeParams> = draws
                .iter_mut()
                .map(|(j, s)| EdgeParams {
                    to: i,
                    from: *j,
                    c: s.uniform(C_RANGE.0, C_RANGE.1),
                    beta1_tilde: s.uniform(BETA1_TILDE_RANGE.0, BETA1_TILDE_RANGE.1),
                    beta2: s.uniform(BETA2_RANGE.0, BETA2_RANGE.1),
                })
                .collect();
            let denom = 1.0 - row.iter().map(|e| e.beta1_tilde).sum::<f64>();
            if libm::fabs(denom) > 1e-6 {
                edges.extend(row);
                break;
            }
        }
    }
    vdp_network_from_params(seed, &mu, &edges)
}

/// Builds the shifted network from explicit draws.
pub fn vdp_network_from_params(
    seed: u64,
    mu: &[(usize, f64)],
    edges: &[EdgeParams],
) -> Result<(Network, VdpParams), ModelError> {
    let mut ids: Vec<usize> = mu.iter().map(|m| m.0).collect();
    ids.sort_unstable();
    let names: Vec<String> = ids.iter().flat_map(|i| [format!("x{i}_1"), format!("x{i}_2")]).collect();
    let u = Universe::new(&names)?;
    let var = |id: usize, k: usize| -> Result<VarId, ModelError> {
        let pos = ids.binary_search(&id).map_err(|_| ModelError::UnknownSubsystem(id))?;
        Ok(VarId((2 * pos + k) as u32))
    };
    let x = |v: VarId| Polynomial::var(&u, v);
    let konst = |c: f64| Polynomial::constant(&u, c);

    let mut mu_sorted = mu.to_vec();
    mu_sorted.sort_by_key(|m| m.0);
    let (mut c1, mut c2, mut c3, mut eq) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut beta1 = vec![0.0; edges.len()];
    let mut subsystems = Vec::new();
    for &(i, mu_i) in &mu_sorted {
        let incoming: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].to == i).collect();
        let sum_c: f64 = incoming.iter().map(|&e| edges[e].c).sum();
        let denom = 1.0 - incoming.iter().map(|&e| edges[e].beta1_tilde).sum::<f64>();
        if libm::fabs(denom) <= 1e-6 {
            return Err(ModelError::DegenerateDraw(denom, i));
        }
        let c2_i = 2.0 * sum_c / denom;
        let c1_i = 1.0 - (0.5 * c2_i) * (0.5 * c2_i);
        let mut c3_i = 1.0;
        for &e in &incoming {
            beta1[e] = 0.5 * edges[e].beta2 * c2_i - edges[e].beta1_tilde;
            c3_i -= 0.5 * edges[e].beta2 * c2_i - beta1[e];
        }
        let (x1, x2) = (x(var(i, 0)?), x(var(i, 1)?));
        // mu x2 (c1 - c2 x1 - x1^2) - c3 x1
        let inner = &(&konst(c1_i) - &x1.scale(c2_i)) - &(&x1 * &x1);
        let f2 = &(&(&x2 * &inner) * mu_i) - &x1.scale(c3_i);
        subsystems.push(Subsystem {
            id: i,
            state_vars: vec![var(i, 0)?, var(i, 1)?],
            f: vec![x2.clone(), f2],
        });
        c1.push(c1_i);
        c2.push(c2_i);
        c3.push(c3_i);
        eq.push(0.5 * c2_i);
    }
    let mut interactions = Vec::new();
    for (e, p) in edges.iter().enumerate() {
        let xi1 = x(var(p.to, 0)?);
        let xj2 = x(var(p.from, 1)?);
        let g2 = &xj2.scale(beta1[e]) + &(&xj2 * &xi1).scale(p.beta2);
        interactions.push(Interaction {
            to: p.to,
            from: p.from,
            g: vec![Polynomial::zero(&u), g2],
        });
    }
    let net = Network::new(&u, subsystems, interactions)?;
    Ok((
        net,
        VdpParams {
            seed,
            prng: String::from(crate::rng::PRNG_NAME),
            mu: mu_sorted,
            edges: edges.to_vec(),
            c1,
            c2,
            c3,
            beta1,
            equilibrium: eq,
        },
    ))
}
