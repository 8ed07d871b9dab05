//! State and action spaces, the joint action encoding and the optional
//! relevant/irrelevant ("star"/"bot") factorization of joint actions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::validate::{check_labels, Violation};

/// Row-major (star, bot) label lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorPair {
    pub star: Vec<String>,
    pub bot: Vec<String>,
}

/// How a factorization is described on input.
///
/// `Joint` factors the joint action space directly, enumerated as
/// `star * |bot| + bot`. `PerParticipant` factors each participant's own
/// actions the same way; the joint factorization is their product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorizationDef {
    Joint(FactorPair),
    PerParticipant(Vec<FactorPair>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesDef {
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorizationDef>,
}

/// Bijection between joint actions and (star, bot) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    star: Vec<String>,
    bot: Vec<String>,
    split: Vec<(usize, usize)>,
    join: Vec<usize>,
    /// Per-participant (star size, bot size) when composed from participant factorizations.
    parts: Option<Vec<(usize, usize)>>,
}

impl Factorization {
    pub fn star_labels(&self) -> &[String] {
        &self.star
    }

    pub fn bot_labels(&self) -> &[String] {
        &self.bot
    }

    pub fn n_star(&self) -> usize {
        self.star.len()
    }

    pub fn n_bot(&self) -> usize {
        self.bot.len()
    }

    /// Joint action index -> (star index, bot index).
    pub fn split(&self, joint: usize) -> (usize, usize) {
        self.split[joint]
    }

    /// (star index, bot index) -> joint action index.
    pub fn join(&self, star: usize, bot: usize) -> usize {
        self.join[star * self.bot.len() + bot]
    }

    /// Per-participant factor sizes, if this factorization is a product of
    /// participant factorizations.
    pub fn parts(&self) -> Option<&[(usize, usize)]> {
        self.parts.as_deref()
    }

    /// Decomposes a joint bot index into per-participant bot indices.
    pub fn participant_bots(&self, bot: usize) -> Option<Vec<usize>> {
        let parts = self.parts.as_ref()?;
        let mut out = vec![0; parts.len()];
        let mut rest = bot;
        for (i, &(_, nb)) in parts.iter().enumerate().rev() {
            out[i] = rest % nb;
            rest /= nb;
        }
        Some(out)
    }

    fn from_split(
        star: Vec<String>,
        bot: Vec<String>,
        split: Vec<(usize, usize)>,
        parts: Option<Vec<(usize, usize)>>,
    ) -> std::result::Result<Self, Vec<Violation>> {
        let mut out = Vec::new();
        check_labels("star action list", &star, &mut out);
        check_labels("bot action list", &bot, &mut out);
        if !out.is_empty() {
            return Err(out);
        }
        let cells = star.len() * bot.len();
        if cells != split.len() {
            return Err(vec![Violation::new(format!(
                "factorization covers {} x {} = {cells} pairs but the joint action space has {} actions",
                star.len(),
                bot.len(),
                split.len()
            ))]);
        }
        let mut join = vec![usize::MAX; cells];
        for (j, &(s, b)) in split.iter().enumerate() {
            if s >= star.len() || b >= bot.len() {
                out.push(Violation::new(format!("joint action {j} maps outside the factor spaces")));
                continue;
            }
            let cell = s * bot.len() + b;
            if join[cell] != usize::MAX {
                out.push(Violation::new(format!(
                    "factorization is not injective: joint actions {} and {j} share a pair",
                    join[cell]
                )));
            }
            join[cell] = j;
        }
        if !out.is_empty() {
            return Err(out);
        }
        Ok(Factorization {
            star,
            bot,
            split,
            join,
            parts,
        })
    }
}

/// Validated finite spaces: states, per-participant actions, horizon.
///
/// Joint actions are enumerated row-major by participant index (participant 0
/// is the most significant digit).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpaces {
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    horizon: usize,
    factorization: Option<Factorization>,
    strides: Vec<usize>,
    joint_count: usize,
}

pub fn validate_spaces(def: &SpacesDef) -> Vec<Violation> {
    match build_spaces(def) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

fn build_spaces(def: &SpacesDef) -> std::result::Result<FiniteSpaces, Vec<Violation>> {
    let mut out = Vec::new();
    check_labels("𝒳 (state list)", &def.states, &mut out);
    if def.actions.is_empty() {
        out.push(Violation::new("no participants"));
    }
    for (i, a) in def.actions.iter().enumerate() {
        check_labels(&format!("action list of participant {i}"), a, &mut out);
    }
    if def.horizon < 2 {
        out.push(Violation::new(format!(
            "horizon {} < 2: at least one action step is needed before the terminal state",
            def.horizon
        )));
    }
    if !out.is_empty() {
        return Err(out);
    }

    let n = def.actions.len();
    let mut strides = vec![1usize; n];
    let mut joint_count = 1usize;
    for i in (0..n).rev() {
        strides[i] = joint_count;
        joint_count = joint_count
            .checked_mul(def.actions[i].len())
            .ok_or_else(|| vec![Violation::new("joint action space size overflows")])?;
    }
    let mut spaces = FiniteSpaces {
        states: def.states.clone(),
        actions: def.actions.clone(),
        horizon: def.horizon,
        factorization: None,
        strides,
        joint_count,
    };
    if let Some(f) = &def.factorization {
        spaces.factorization = Some(spaces.build_factorization(f)?);
    }
    Ok(spaces)
}

impl FiniteSpaces {
    pub fn new(states: Vec<String>, actions: Vec<Vec<String>>, horizon: usize) -> Result<Self> {
        Self::from_def(&SpacesDef {
            states,
            actions,
            horizon,
            factorization: None,
        })
    }

    pub fn from_def(def: &SpacesDef) -> Result<Self> {
        build_spaces(def).map_err(Error::Invalid)
    }

    pub fn with_factorization(mut self, f: &FactorizationDef) -> Result<Self> {
        self.factorization = Some(self.build_factorization(f).map_err(Error::Invalid)?);
        Ok(self)
    }

    pub fn to_def(&self) -> SpacesDef {
        SpacesDef {
            states: self.states.clone(),
            actions: self.actions.clone(),
            horizon: self.horizon,
            factorization: self.factorization.as_ref().map(|f| match &f.parts {
                None => FactorizationDef::Joint(FactorPair {
                    star: f.star.clone(),
                    bot: f.bot.clone(),
                }),
                Some(_) => FactorizationDef::PerParticipant(self.participant_factor_labels()),
            }),
        }
    }

    fn participant_factor_labels(&self) -> Vec<FactorPair> {
        // Only called for composed factorizations, whose participant labels are "star/bot".
        self.actions
            .iter()
            .map(|acts| {
                let mut star = Vec::new();
                let mut bot = Vec::new();
                for a in acts {
                    let (s, b) = a.split_once('/').unwrap_or((a.as_str(), ""));
                    if !star.iter().any(|x: &String| x == s) {
                        star.push(s.to_string());
                    }
                    if !bot.iter().any(|x: &String| x == b) {
                        bot.push(b.to_string());
                    }
                }
                FactorPair { star, bot }
            })
            .collect()
    }

    fn build_factorization(
        &self,
        f: &FactorizationDef,
    ) -> std::result::Result<Factorization, Vec<Violation>> {
        match f {
            FactorizationDef::Joint(pair) => {
                let nb = pair.bot.len().max(1);
                let split = (0..self.joint_count).map(|j| (j / nb, j % nb)).collect();
                Factorization::from_split(pair.star.clone(), pair.bot.clone(), split, None)
            }
            FactorizationDef::PerParticipant(parts) => {
                if parts.len() != self.n_participants() {
                    return Err(vec![Violation::new(format!(
                        "{} participant factorizations given for {} participants",
                        parts.len(),
                        self.n_participants()
                    ))]);
                }
                let mut out = Vec::new();
                for (i, p) in parts.iter().enumerate() {
                    check_labels(&format!("star list of participant {i}"), &p.star, &mut out);
                    check_labels(&format!("bot list of participant {i}"), &p.bot, &mut out);
                    if p.star.len() * p.bot.len() != self.actions[i].len() {
                        out.push(Violation::new(format!(
                            "participant {i}: {} x {} factor pairs for {} actions",
                            p.star.len(),
                            p.bot.len(),
                            self.actions[i].len()
                        )));
                    }
                }
                if !out.is_empty() {
                    return Err(out);
                }
                let sizes: Vec<(usize, usize)> =
                    parts.iter().map(|p| (p.star.len(), p.bot.len())).collect();
                let star = product_labels(parts.iter().map(|p| &p.star[..]));
                let bot = product_labels(parts.iter().map(|p| &p.bot[..]));
                let split = (0..self.joint_count)
                    .map(|j| {
                        let (mut s, mut b) = (0, 0);
                        for (i, &(ns, nb)) in sizes.iter().enumerate() {
                            let a = self.participant_action(j, i);
                            s = s * ns + a / nb;
                            b = b * nb + a % nb;
                        }
                        (s, b)
                    })
                    .collect();
                Factorization::from_split(star, bot, split, Some(sizes))
            }
        }
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_participants(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self, participant: usize) -> &[String] {
        &self.actions[participant]
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.actions.iter().map(Vec::len).collect()
    }

    pub fn n_joint_actions(&self) -> usize {
        self.joint_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn factorization(&self) -> Option<&Factorization> {
        self.factorization.as_ref()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn participant_action(&self, joint: usize, participant: usize) -> usize {
        (joint / self.strides[participant]) % self.actions[participant].len()
    }

    pub fn decode_joint(&self, joint: usize) -> Vec<usize> {
        (0..self.n_participants())
            .map(|i| self.participant_action(joint, i))
            .collect()
    }

    pub fn encode_joint(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.n_participants() {
            return Err(Error::dim(format!(
                "joint action has {} components for {} participants",
                actions.len(),
                self.n_participants()
            )));
        }
        let mut j = 0;
        for (i, &a) in actions.iter().enumerate() {
            if a >= self.actions[i].len() {
                return Err(Error::dim(format!("action {a} out of range for participant {i}")));
            }
            j += a * self.strides[i];
        }
        Ok(j)
    }

    pub fn joint_label(&self, joint: usize) -> String {
        (0..self.n_participants())
            .map(|i| self.actions[i][self.participant_action(joint, i)].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn check_state(&self, x: usize) -> Result<()> {
        if x < self.n_states() {
            Ok(())
        } else {
            Err(Error::dim(format!("state index {x} out of range ({} states)", self.n_states())))
        }
    }

    pub fn check_joint(&self, u: usize) -> Result<()> {
        if u < self.joint_count {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "joint action index {u} out of range ({} joint actions)",
                self.joint_count
            )))
        }
    }
}

fn product_labels<'a>(lists: impl Iterator<Item = &'a [String]>) -> Vec<String> {
    let mut acc: Vec<String> = vec![String::new()];
    let mut first = true;
    for list in lists {
        let mut next = Vec::with_capacity(acc.len() * list.len());
        for prefix in &acc {
            for l in list {
                next.push(if first { l.clone() } else { format!("{prefix},{l}") });
            }
        }
        acc = next;
        first = false;
    }
    acc
}

/// Opaque per-participant type descriptors. Payoff tables already encode
/// what the types mean; the core never interprets them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeProfile {
    types: Vec<String>,
}

impl TypeProfile {
    pub fn new(spaces: &FiniteSpaces, types: Vec<String>) -> Result<Self> {
        if types.len() != spaces.n_participants() {
            return Err(Error::dim(format!(
                "{} type descriptors for {} participants",
                types.len(),
                spaces.n_participants()
            )));
        }
        Ok(TypeProfile { types })
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }
}
