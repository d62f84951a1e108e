//! `{"variables", "subsystems":[{"id","state_vars","f"}], "interactions":[{"to","from","g"}]}`
//! with every polynomial in its canonical text form.

use serde::{Deserialize, Serialize};
use vecstab_core::model::{Interaction, Network, Subsystem};
use vecstab_core::poly::Universe;

use super::{lookup_vars, parse_poly, var_names};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub variables: Vec<String>,
    pub subsystems: Vec<SubsystemFile>,
    pub interactions: Vec<InteractionFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemFile {
    pub id: usize,
    pub state_vars: Vec<String>,
    pub f: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionFile {
    pub to: usize,
    pub from: usize,
    pub g: Vec<String>,
}

impl NetworkFile {
    pub fn from_network(net: &Network) -> Self {
        let u = net.universe();
        NetworkFile {
            variables: u.names().to_vec(),
            subsystems: net
                .subsystems()
                .iter()
                .map(|s| SubsystemFile {
                    id: s.id,
                    state_vars: var_names(u, &s.state_vars),
                    f: s.f.iter().map(|p| p.to_string()).collect(),
                })
                .collect(),
            interactions: net
                .interactions()
                .iter()
                .map(|it| InteractionFile {
                    to: it.to,
                    from: it.from,
                    g: it.g.iter().map(|p| p.to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        let u = Universe::new(&self.variables)?;
        let subsystems = self
            .subsystems
            .iter()
            .map(|s| {
                Ok(Subsystem {
                    id: s.id,
                    state_vars: lookup_vars(&u, &s.state_vars)?,
                    f: s.f.iter().map(|t| parse_poly(&u, t)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let interactions = self
            .interactions
            .iter()
            .map(|it| {
                Ok(Interaction {
                    to: it.to,
                    from: it.from,
                    g: it.g.iter().map(|t| parse_poly(&u, t)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network::new(&u, subsystems, interactions)?)
    }
}
