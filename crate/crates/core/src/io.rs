//! JSON representation of a decision process.
//!
//! ```json
//! {
//!   "states": ["a", "b"],
//!   "actions": [["0", "1"]],
//!   "horizon": 2,
//!   "factorization": {"star": ["L"], "bot": ["s1", "s2"]},
//!   "policies": [[[[0.7, 0.3], [0.7, 0.3]]]],
//!   "kernels": [[[[1, 0], [0, 1]], [[0, 1], [0, 1]]]],
//!   "payoffs": [[0], [1]],
//!   "init": [1, 0]
//! }
//! ```
//!
//! `policies` is indexed `[participant][t][state][action]`, `kernels`
//! `[t][state][joint_action][next_state]` and `payoffs` `[state][participant]`.
//! `factorization` may instead be a list of per-participant pairs. `init`
//! is optional and defaults to a point mass on the first state.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::mechanism::{validate_mechanism, Mechanism, MechanismFamily};
use crate::payoff::{validate_payoff, PayoffTable};
use crate::policy::{validate_policy, Policy, PolicyProfile};
use crate::rollout::point_mass;
use crate::spaces::{FactorizationDef, FiniteSpaces, SpacesDef};
use crate::validate::{check_prob_row, Location, Violation};

pub type Kernels = Vec<Vec<Vec<Vec<f64>>>>;
pub type PolicyTables = Vec<Vec<Vec<Vec<f64>>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessFile {
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorizationDef>,
    pub policies: PolicyTables,
    pub kernels: Kernels,
    pub payoffs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

/// Builds a profile from `[participant][t][state][action]` tables, reporting
/// every violation at once.
pub fn profile_from_tables(spaces: &FiniteSpaces, tables: PolicyTables) -> Result<PolicyProfile> {
    if tables.len() != spaces.n_participants() {
        return Err(Error::Invalid(vec![Violation::new(format!(
            "{} policies for {} participants",
            tables.len(),
            spaces.n_participants()
        ))]));
    }
    let v: Vec<Violation> = tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| validate_policy(spaces, i, t))
        .collect();
    Error::check(v)?;
    let ps = tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| Policy::new(spaces, i, t))
        .collect::<Result<Vec<_>>>()?;
    PolicyProfile::from_policies(spaces, ps)
}

impl ProcessFile {
    pub fn spaces_def(&self) -> SpacesDef {
        SpacesDef {
            states: self.states.clone(),
            actions: self.actions.clone(),
            horizon: self.horizon,
            factorization: self.factorization.clone(),
        }
    }

    /// Every violation in the file, without building anything.
    pub fn violations(&self) -> Vec<Violation> {
        let spaces = match FiniteSpaces::from_def(&self.spaces_def()) {
            Ok(s) => s,
            Err(Error::Invalid(v)) => return v,
            Err(e) => return vec![Violation::new(e.to_string())],
        };
        let mut out = Vec::new();
        if self.policies.len() != spaces.n_participants() {
            out.push(Violation::new(format!(
                "{} policies for {} participants",
                self.policies.len(),
                spaces.n_participants()
            )));
        } else {
            for (i, t) in self.policies.iter().enumerate() {
                out.extend(validate_policy(&spaces, i, t));
            }
        }
        out.extend(validate_mechanism(&spaces, &self.kernels));
        out.extend(validate_payoff(&spaces, &self.payoffs));
        if let Some(init) = &self.init {
            if init.len() != spaces.n_states() {
                out.push(Violation::new(format!(
                    "init has {} entries for {} states",
                    init.len(),
                    spaces.n_states()
                )));
            } else {
                check_prob_row(init, Location::default, &mut out);
            }
        }
        out
    }

    pub fn into_instance(self, id: &str) -> Result<Instance> {
        Error::check(self.violations())?;
        let spaces = FiniteSpaces::from_def(&self.spaces_def())?;
        let pi_star = profile_from_tables(&spaces, self.policies)?;
        let mechanism = Mechanism::new(&spaces, self.kernels)?;
        let family = MechanismFamily::explicit(&spaces, vec![Arc::new(mechanism.clone())])?;
        let payoff = PayoffTable::new(&spaces, self.payoffs)?;
        let init = self.init.unwrap_or_else(|| point_mass(spaces.n_states(), 0));
        Ok(Instance {
            id: id.to_string(),
            spaces,
            pi_star,
            mechanism,
            family,
            payoff,
            init,
        })
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let def = inst.spaces.to_def();
        ProcessFile {
            states: def.states,
            actions: def.actions,
            horizon: def.horizon,
            factorization: def.factorization,
            policies: inst.pi_star.policies().iter().map(|p| p.tables()).collect(),
            kernels: inst.mechanism.kernels(),
            payoffs: inst.payoff.rows(),
            init: Some(inst.init.clone()),
        }
    }
}

pub fn parse_process(json: &str, id: &str) -> Result<Instance> {
    let f: ProcessFile = serde_json::from_str(json)?;
    f.into_instance(id)
}

pub fn load_process(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    let id = path.file_stem().map_or_else(|| "instance".to_string(), |s| s.to_string_lossy().into_owned());
    parse_process(&text, &id)
}
