//! Lyapunov functions: polynomial text, lowest degree `d`, and how the
//! function was scaled. Hand-written files (e.g. quartic functions) may omit
//! the scaling record.

use serde::{Deserialize, Serialize};
use vecstab_core::lyap::{LyapunovFn, Scaling};
use vecstab_core::model::Network;

use super::{lookup_vars, parse_poly, var_names};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfsFile {
    pub lfs: Vec<LfEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfEntry {
    pub id: usize,
    pub vars: Vec<String>,
    pub v: String,
    pub d: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingFile {
    pub unscaled: String,
    pub gamma_max: f64,
    pub capped: bool,
}

impl LfsFile {
    pub fn from_lfs(net: &Network, lfs: &[LyapunovFn]) -> Self {
        let u = net.universe();
        LfsFile {
            lfs: lfs
                .iter()
                .map(|lf| LfEntry {
                    id: lf.id,
                    vars: var_names(u, &lf.vars),
                    v: lf.v.to_string(),
                    d: lf.d,
                    scaling: Some(ScalingFile {
                        unscaled: lf.scaling.unscaled.to_string(),
                        gamma_max: lf.scaling.gamma_max,
                        capped: lf.scaling.capped,
                    }),
                })
                .collect(),
        }
    }

    /// Functions in subsystem order; each must live on its subsystem's state.
    pub fn to_lfs(&self, net: &Network) -> Result<Vec<LyapunovFn>> {
        let u = net.universe();
        if self.lfs.len() != net.subsystems().len() {
            return Err(Error::Format(format!(
                "{} Lyapunov functions for {} subsystems",
                self.lfs.len(),
                net.subsystems().len()
            )));
        }
        let mut out = Vec::with_capacity(self.lfs.len());
        for sub in net.subsystems() {
            let e = self
                .lfs
                .iter()
                .find(|e| e.id == sub.id)
                .ok_or_else(|| Error::Format(format!("no Lyapunov function for subsystem {}", sub.id)))?;
            let vars = lookup_vars(u, &e.vars)?;
            if vars != sub.state_vars {
                return Err(Error::Format(format!("Lyapunov function {}: variables differ from the subsystem state", e.id)));
            }
            let v = parse_poly(u, &e.v)?;
            if !v.variables().iter().all(|x| vars.contains(x)) {
                return Err(Error::Format(format!("Lyapunov function {} uses foreign variables", e.id)));
            }
            let mut lf = LyapunovFn::from_polynomial(e.id, &vars, v)?;
            if lf.d != e.d {
                return Err(Error::Format(format!("Lyapunov function {}: d = {} but lowest degree is {}", e.id, e.d, lf.d)));
            }
            if let Some(s) = &e.scaling {
                lf.scaling = Scaling {
                    unscaled: parse_poly(u, &s.unscaled)?,
                    gamma_max: s.gamma_max,
                    capped: s.capped,
                };
            }
            out.push(lf);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::network::NetworkFile;

    fn net() -> Network {
        let text = r#"{"variables":["x","y"],"subsystems":[{"id":1,"state_vars":["x"],"f":["-x"]},
            {"id":2,"state_vars":["y"],"f":["-y"]}],"interactions":[]}"#;
        serde_json::from_str::<NetworkFile>(text).unwrap().to_network().unwrap()
    }

    #[test]
    fn quartic_file_loads_and_round_trips() {
        let net = net();
        let file: LfsFile = serde_json::from_str(
            r#"{"lfs":[{"id":2,"vars":["y"],"v":"y^4 + 0.5*y^6","d":4},{"id":1,"vars":["x"],"v":"2.0*x^2","d":2}]}"#,
        )
        .unwrap();
        let lfs = file.to_lfs(&net).unwrap();
        assert_eq!(lfs.iter().map(|l| (l.id, l.d)).collect::<Vec<_>>(), vec![(1, 2), (2, 4)]);
        assert_eq!(lfs[1].scaling.gamma_max, 1.0);
        let again = LfsFile::from_lfs(&net, &lfs).to_lfs(&net).unwrap();
        assert_eq!(again, lfs);
    }

    #[test]
    fn rejects_mismatches() {
        let net = net();
        let parse = |s: &str| serde_json::from_str::<LfsFile>(s).unwrap().to_lfs(&net);
        // wrong d, foreign variable, odd degree, missing subsystem
        assert!(parse(r#"{"lfs":[{"id":1,"vars":["x"],"v":"x^2","d":4},{"id":2,"vars":["y"],"v":"y^2","d":2}]}"#).is_err());
        assert!(parse(r#"{"lfs":[{"id":1,"vars":["x"],"v":"x^2 + y^2","d":2},{"id":2,"vars":["y"],"v":"y^2","d":2}]}"#).is_err());
        assert!(parse(r#"{"lfs":[{"id":1,"vars":["x"],"v":"x^3","d":3},{"id":2,"vars":["y"],"v":"y^2","d":2}]}"#).is_err());
        assert!(parse(r#"{"lfs":[{"id":1,"vars":["x"],"v":"x^2","d":2}]}"#).is_err());
    }
}
