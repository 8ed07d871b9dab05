use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use reprsim::instances::{g1, g2, Instance};
use reprsim::io::{load_process, profile_from_tables, Kernels, PolicyTables};
use reprsim::representativity::{representativity, Discrepancy, DiscrepancyKind, Representativity, RepresentativityMode};
use reprsim::{Mechanism, MechanismFamily, PayoffTable, PolicyProfile, QFamily, QFunction};

use crate::config::{load, out_dir, resolve, write_csv, write_json};
use crate::{Options, Outcome};

pub const HELP: &str = "\
Config (JSON, unknown keys rejected):
  process        path to a process file (relative to the config), or
  builtin        \"g1\" | \"g2\"; exactly one of the two (without --config: g1)
  candidates     list of {label, kind, action?, policies?} where kind is
                 \"target\" | \"uniform\" | \"deterministic\" (every participant
                 plays participant action `action`) | \"tables\" (`policies`
                 indexed [participant][t][state][action])
  mechanisms     {kind: \"process\" | \"all-deterministic\" | \"kernels\",
                  kernels?: list of [t][state][joint_action][next_state]}
  terminals      {kind: \"payoff\" | \"tables\",
                  tables?: list of [state][participant]}
  discrepancy    {kind: \"mean-absolute\" | \"max-absolute\" | \"euclidean\",
                  mask?: participant indices}
  init           initial state distribution (default: the process's)

Outputs in --out:
  representativity.csv          candidate,value,mechanism,q,mode
  representativity_report.json  config and per-candidate results

`mechanism` and `q` index the maximizing members of the two families.
`mode` is fixed-payoff for the process's own mechanism with its payoff,
family-max otherwise.";

const HEADER: [&str; 5] = ["candidate", "value", "mechanism", "q", "mode"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateKind {
    Target,
    Uniform,
    Deterministic,
    Tables,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub label: String,
    pub kind: CandidateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<PolicyTables>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Process,
    AllDeterministic,
    Kernels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Kernels>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Payoff,
    Tables,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSpec {
    pub kind: TerminalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancySpec {
    pub kind: DiscrepancyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepresentativityConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<PathBuf>,
    /// Absent from a config file means no builtin; the no-config default is g1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    pub candidates: Vec<CandidateSpec>,
    pub mechanisms: MechanismSpec,
    pub terminals: TerminalSpec,
    pub discrepancy: DiscrepancySpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

impl Default for RepresentativityConfig {
    fn default() -> Self {
        RepresentativityConfig {
            process: None,
            builtin: Some("g1".into()),
            candidates: vec![
                CandidateSpec {
                    label: "target".into(),
                    kind: CandidateKind::Target,
                    action: None,
                    policies: None,
                },
                CandidateSpec {
                    label: "always-0".into(),
                    kind: CandidateKind::Deterministic,
                    action: Some(0),
                    policies: None,
                },
            ],
            mechanisms: MechanismSpec {
                kind: MechanismKind::Process,
                kernels: None,
            },
            terminals: TerminalSpec {
                kind: TerminalKind::Payoff,
                tables: None,
            },
            discrepancy: DiscrepancySpec {
                kind: DiscrepancyKind::MeanAbsolute,
                mask: None,
            },
            init: None,
        }
    }
}

#[derive(Serialize)]
struct Row<'a> {
    candidate: &'a str,
    value: f64,
    mechanism: usize,
    q: usize,
    mode: &'static str,
}

#[derive(Serialize)]
struct CandidateResult<'a> {
    label: &'a str,
    #[serde(flatten)]
    result: &'a Representativity,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a RepresentativityConfig,
    process: &'a str,
    n_mechanisms: usize,
    n_terminals: usize,
    results: Vec<CandidateResult<'a>>,
}

fn process(opts: &Options, cfg: &RepresentativityConfig) -> Result<Instance> {
    match (&cfg.process, cfg.builtin.as_deref()) {
        (Some(p), None) => {
            let path = resolve(opts.config.as_deref(), p)?;
            load_process(&path).with_context(|| format!("loading {}", path.display()))
        }
        (None, Some("g1")) => Ok(g1()),
        (None, Some("g2")) => Ok(g2()),
        (None, Some(other)) => bail!("unknown builtin process {other:?}; expected \"g1\" or \"g2\""),
        (Some(_), Some(_)) => bail!("set either `process` or `builtin`, not both"),
        (None, None) => bail!("one of `process` or `builtin` is required"),
    }
}

fn candidate(inst: &Instance, c: &CandidateSpec) -> Result<PolicyProfile> {
    let s = &inst.spaces;
    let unused = |field: bool, name: &str| -> Result<()> {
        ensure!(!field, "candidate {:?}: `{name}` does not apply to kind {:?}", c.label, c.kind);
        Ok(())
    };
    match c.kind {
        CandidateKind::Target | CandidateKind::Uniform => {
            unused(c.action.is_some(), "action")?;
            unused(c.policies.is_some(), "policies")?;
            Ok(match c.kind {
                CandidateKind::Target => inst.pi_star.clone(),
                _ => PolicyProfile::uniform(s)?,
            })
        }
        CandidateKind::Deterministic => {
            unused(c.policies.is_some(), "policies")?;
            let a = c
                .action
                .with_context(|| format!("candidate {:?}: `action` is required", c.label))?;
            let fewest = s.action_counts().into_iter().min().unwrap_or(0);
            ensure!(
                a < fewest,
                "candidate {:?}: action {a} is not available to every participant",
                c.label
            );
            Ok(inst.deterministic_profile(a))
        }
        CandidateKind::Tables => {
            unused(c.action.is_some(), "action")?;
            let t = c
                .policies
                .clone()
                .with_context(|| format!("candidate {:?}: `policies` is required", c.label))?;
            profile_from_tables(s, t).with_context(|| format!("candidate {:?}", c.label))
        }
    }
}

fn mechanisms(inst: &Instance, m: &MechanismSpec) -> Result<MechanismFamily> {
    let s = &inst.spaces;
    ensure!(
        m.kind == MechanismKind::Kernels || m.kernels.is_none(),
        "`mechanisms.kernels` only applies to kind \"kernels\""
    );
    Ok(match m.kind {
        MechanismKind::Process => inst.single_mechanism_family(),
        MechanismKind::AllDeterministic => MechanismFamily::all_deterministic(s)?,
        MechanismKind::Kernels => {
            let ks = m.kernels.clone().context("`mechanisms.kernels` is required")?;
            let members = ks
                .into_iter()
                .enumerate()
                .map(|(k, t)| Mechanism::new(s, t).map(Arc::new).with_context(|| format!("mechanism {k}")))
                .collect::<Result<Vec<_>>>()?;
            MechanismFamily::explicit(s, members)?
        }
    })
}

fn terminals(inst: &Instance, t: &TerminalSpec) -> Result<QFamily> {
    ensure!(
        t.kind == TerminalKind::Tables || t.tables.is_none(),
        "`terminals.tables` only applies to kind \"tables\""
    );
    Ok(match t.kind {
        TerminalKind::Payoff => inst.payoff_family(),
        TerminalKind::Tables => {
            let tables = t.tables.clone().context("`terminals.tables` is required")?;
            let nu = inst.spaces.n_joint_actions();
            let members = tables
                .into_iter()
                .enumerate()
                .map(|(k, v)| {
                    PayoffTable::new(&inst.spaces, v)
                        .map(|p| QFunction::terminal(&p, nu))
                        .with_context(|| format!("terminal table {k}"))
                })
                .collect::<Result<Vec<_>>>()?;
            QFamily::from_tables(members)?
        }
    })
}

pub fn run(opts: &Options) -> Result<Outcome> {
    let cfg: RepresentativityConfig = load(opts.config.as_deref())?;
    if opts.seed.is_some() {
        eprintln!("note: representativity is computed exactly; --seed has no effect");
    }
    let inst = process(opts, &cfg)?;
    ensure!(!cfg.candidates.is_empty(), "`candidates` is empty");
    let profiles = cfg
        .candidates
        .iter()
        .map(|c| candidate(&inst, c))
        .collect::<Result<Vec<_>>>()?;
    let mechs = mechanisms(&inst, &cfg.mechanisms)?;
    let qs = terminals(&inst, &cfg.terminals)?;
    let disc = Discrepancy::new(
        cfg.discrepancy.kind,
        cfg.discrepancy.mask.clone(),
        inst.spaces.n_participants(),
    )?;
    let init = cfg.init.clone().unwrap_or_else(|| inst.init.clone());
    ensure!(
        init.len() == inst.spaces.n_states(),
        "init has {} entries for {} states",
        init.len(),
        inst.spaces.n_states()
    );
    let fixed = cfg.mechanisms.kind == MechanismKind::Process && cfg.terminals.kind == TerminalKind::Payoff;

    let results = profiles
        .iter()
        .map(|p| {
            let mut r = representativity(&inst.pi_star, p, &mechs, &qs, &init, &disc)?;
            if fixed {
                r.mode = RepresentativityMode::FixedPayoff;
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    out_dir(&opts.out)?;
    let rows: Vec<Row> = cfg
        .candidates
        .iter()
        .zip(&results)
        .map(|(c, r)| Row {
            candidate: &c.label,
            value: r.value,
            mechanism: r.mechanism,
            q: r.q,
            mode: match r.mode {
                RepresentativityMode::FamilyMax => "family-max",
                RepresentativityMode::FixedPayoff => "fixed-payoff",
            },
        })
        .collect();
    write_csv(&opts.out.join("representativity.csv"), &HEADER, &rows)?;
    write_json(
        &opts.out.join("representativity_report.json"),
        &Report {
            config: &cfg,
            process: &inst.id,
            n_mechanisms: mechs.len(),
            n_terminals: qs.len(),
            results: cfg
                .candidates
                .iter()
                .zip(&results)
                .map(|(c, r)| CandidateResult { label: &c.label, result: r })
                .collect(),
        },
    )?;
    for r in &rows {
        println!("{:<20} {:.6} (mechanism {}, q {})", r.candidate, r.value, r.mechanism, r.q);
    }
    Ok(Outcome::Ok)
}
