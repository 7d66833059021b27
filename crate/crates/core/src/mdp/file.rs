//! Structured-text description of a finite MDP.
//!
//! ```toml
//! n_states = 2
//! n_actions = 2
//! discount = 0.99
//! behavior = [[0.3333333333333333, 0.6666666666666666], [0.3333333333333333, 0.6666666666666666]]
//! features = [[1.0], [2.0]]          # optional, one row per state
//! target = [[1.0, 0.0], [1.0, 0.0]]  # optional fixed target policy
//!
//! [[transition]]                     # one table per non-zero (s, a, s')
//! state = 0
//! action = 0
//! next = 1
//! prob = 1.0
//! reward = 1.0
//! ```
//!
//! Indices are zero based. Entries that are not listed have probability and
//! reward zero. Floats are written in shortest round-trip form, so writing a
//! document and reading it back reproduces every value bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ActionProbabilities, FiniteMdp, FixedPolicy, LinearFeatureMap};

#[derive(Debug, Serialize, Deserialize)]
struct RawEntry {
    state: usize,
    action: usize,
    next: usize,
    prob: f64,
    reward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    behavior: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    transition: Vec<RawEntry>,
}

/// An MDP together with its behavior policy and, optionally, features and a
/// fixed target policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpDocument {
    pub mdp: FiniteMdp,
    pub behavior: FixedPolicy,
    pub features: Option<LinearFeatureMap>,
    pub target: Option<FixedPolicy>,
}

impl MdpDocument {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawDocument = toml::from_str(text).map_err(|e| Error::Parse {
            what: "MDP document",
            message: e.to_string(),
        })?;
        let mdp = FiniteMdp::from_entries(
            raw.n_states,
            raw.n_actions,
            raw.discount,
            raw.transition
                .iter()
                .map(|e| (e.state, e.action, e.next, e.prob, e.reward)),
        )?;
        let behavior = FixedPolicy::new(raw.behavior)?;
        let target = raw.target.map(FixedPolicy::new).transpose()?;
        for pol in std::iter::once(&behavior).chain(target.as_ref()) {
            if pol.n_states() != mdp.n_states() || pol.n_actions() != mdp.n_actions() {
                return Err(Error::Dimension(
                    "policy table does not match the MDP".into(),
                ));
            }
        }
        let features = raw.features.map(LinearFeatureMap::new).transpose()?;
        if features
            .as_ref()
            .is_some_and(|f| f.n_states() != mdp.n_states())
        {
            return Err(Error::Dimension(
                "feature rows do not match the state count".into(),
            ));
        }
        Ok(Self {
            mdp,
            behavior,
            features,
            target,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let mdp = &self.mdp;
        let mut transition = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for next in 0..mdp.n_states() {
                    let (prob, reward) = (mdp.prob(s, a, next), mdp.reward(s, a, next));
                    if prob != 0.0 || reward != 0.0 || reward.is_sign_negative() {
                        transition.push(RawEntry {
                            state: s,
                            action: a,
                            next,
                            prob,
                            reward,
                        });
                    }
                }
            }
        }
        let raw = RawDocument {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            discount: mdp.discount(),
            behavior: self.behavior.to_rows(),
            features: self.features.as_ref().map(LinearFeatureMap::to_rows),
            target: self.target.as_ref().map(FixedPolicy::to_rows),
            transition,
        };
        toml::to_string(&raw).map_err(|e| Error::Parse {
            what: "MDP document",
            message: e.to_string(),
        })
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}
