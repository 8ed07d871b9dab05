use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use reprsim::equivalence::{verify_proposition1, Candidate, Prop1Options, Prop1Report};
use reprsim::instances::{g2, mc_estimate, prop1_instance, random_instance, standard_candidates, Instance, RandomSpec};
use reprsim::io::load_process;
use reprsim::seed::{derive_seed, rng_for};

use crate::config::{load, out_dir, resolve, write_csv, write_json};
use crate::{Options, Outcome};

pub const HELP: &str = "\
Config (JSON, every key optional, unknown keys rejected):
  seed               u64, default 2024
  n_instances        random instances to generate, default 100
  include_g2         also check the two-outcome reference game, default true
  instance_files     process files (paths relative to the config)
  generator          {max_states, max_joint, max_horizon, max_participants,
                      n_mechanisms, factorization_prob, payoff_scale}
  candidates         \"standard\" | \"sampled-pair\"
  n_samples          draws per row in sampled-pair mode, default 10
  tol                equality tolerance, default 1e-9
  closure_depth      Bellman closure depth (default: horizon - 1)
  bot_probes         add irrelevant-label probes to the transition family

In sampled-pair mode the target is an empirical estimate built by repeated
addition and the single candidate is the same estimate built by division;
they differ only in rounding.

Outputs in --out:
  prop1_report.json      full per-instance reports
  prop1_candidates.csv   instance,candidate,conditional_equal,transition_equal,
                         trajectory_equal,conditional_deviation,
                         transition_deviation,trajectory_deviation,
                         transition_family_size,chain_holds
  prop1_strictness.csv   instance,trajectory_equal,trajectory_max_deviation,
                         transition_equal,transition_witness_deviation,
                         min_escape_mass,value_function_max_gap,holds

Deviations are the largest over the tested family; when a class test fails
this is the deviation of its witness. Exit 1 when any candidate breaks the
inclusion chain.";

const CANDIDATE_HEADER: [&str; 10] = [
    "instance",
    "candidate",
    "conditional_equal",
    "transition_equal",
    "trajectory_equal",
    "conditional_deviation",
    "transition_deviation",
    "trajectory_deviation",
    "transition_family_size",
    "chain_holds",
];

const STRICTNESS_HEADER: [&str; 8] = [
    "instance",
    "trajectory_equal",
    "trajectory_max_deviation",
    "transition_equal",
    "transition_witness_deviation",
    "min_escape_mass",
    "value_function_max_gap",
    "holds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    Standard,
    SampledPair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Generator {
    pub max_states: usize,
    pub max_joint: usize,
    pub max_horizon: usize,
    pub max_participants: usize,
    pub n_mechanisms: usize,
    pub factorization_prob: f64,
    pub payoff_scale: f64,
}

impl Default for Generator {
    fn default() -> Self {
        let s = RandomSpec::default();
        Generator {
            max_states: s.max_states,
            max_joint: s.max_joint,
            max_horizon: s.max_horizon,
            max_participants: s.max_participants,
            n_mechanisms: s.n_mechanisms,
            factorization_prob: s.factorization_prob,
            payoff_scale: s.payoff_scale,
        }
    }
}

impl Generator {
    fn spec(&self) -> Result<RandomSpec> {
        ensure!(self.max_states >= 1, "generator.max_states must be at least 1");
        ensure!(self.max_joint >= 1, "generator.max_joint must be at least 1");
        ensure!(self.max_horizon >= 2, "generator.max_horizon must be at least 2");
        ensure!(self.max_participants >= 1, "generator.max_participants must be at least 1");
        ensure!(self.n_mechanisms >= 1, "generator.n_mechanisms must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&self.factorization_prob),
            "generator.factorization_prob must lie in [0, 1]"
        );
        ensure!(
            self.payoff_scale.is_finite() && self.payoff_scale > 0.0,
            "generator.payoff_scale must be positive"
        );
        Ok(RandomSpec {
            max_states: self.max_states,
            max_joint: self.max_joint,
            max_horizon: self.max_horizon,
            max_participants: self.max_participants,
            n_mechanisms: self.n_mechanisms,
            factorization_prob: self.factorization_prob,
            payoff_scale: self.payoff_scale,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub n_instances: usize,
    pub include_g2: bool,
    pub instance_files: Vec<PathBuf>,
    pub generator: Generator,
    pub candidates: CandidateMode,
    pub n_samples: usize,
    pub tol: f64,
    pub closure_depth: Option<usize>,
    pub bot_probes: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 2024,
            n_instances: 100,
            include_g2: true,
            instance_files: Vec::new(),
            generator: Generator::default(),
            candidates: CandidateMode::Standard,
            n_samples: 10,
            tol: 1e-9,
            closure_depth: None,
            bot_probes: true,
        }
    }
}

#[derive(Serialize)]
struct CandidateRow<'a> {
    instance: &'a str,
    candidate: &'a str,
    conditional_equal: bool,
    transition_equal: bool,
    trajectory_equal: bool,
    conditional_deviation: f64,
    transition_deviation: f64,
    trajectory_deviation: f64,
    transition_family_size: usize,
    chain_holds: bool,
}

#[derive(Serialize)]
struct StrictnessRow<'a> {
    instance: &'a str,
    trajectory_equal: bool,
    trajectory_max_deviation: f64,
    transition_equal: bool,
    transition_witness_deviation: f64,
    min_escape_mass: f64,
    value_function_max_gap: f64,
    holds: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a VerifyConfig,
    n_instances: usize,
    n_candidates: usize,
    chain_violations: usize,
    strictness_checked: usize,
    strictness_failures: usize,
    instances: &'a [Prop1Report],
}

// Stream tags under the config seed.
const GENERATED_STREAM: u64 = 1;
const FIXED_STREAM: u64 = 2;

fn candidates(cfg: &VerifyConfig, inst: &mut Instance, stream: u64, index: u64) -> Vec<Candidate> {
    let mut rng = rng_for(derive_seed(cfg.seed, stream), index);
    match cfg.candidates {
        CandidateMode::Standard => standard_candidates(&mut rng, inst),
        CandidateMode::SampledPair => {
            let (divided, accumulated) = mc_estimate(&mut rng, &inst.spaces, &inst.pi_star, cfg.n_samples);
            inst.pi_star = accumulated;
            vec![Candidate {
                label: "sampled-divided".into(),
                profile: divided,
            }]
        }
    }
}

/// Instances to check, each paired with its stream tag and index.
fn instances(opts: &Options, cfg: &VerifyConfig) -> Result<Vec<(Instance, u64, u64)>> {
    let spec = cfg.generator.spec()?;
    let mut out: Vec<(Instance, u64, u64)> = (0..cfg.n_instances as u64)
        .map(|k| {
            let inst = random_instance(&mut rng_for(cfg.seed, k), &spec, format!("random-{k:03}"));
            (inst, GENERATED_STREAM, k)
        })
        .collect();
    if cfg.include_g2 {
        out.push((g2(), FIXED_STREAM, 0));
    }
    for (j, f) in cfg.instance_files.iter().enumerate() {
        let path = resolve(opts.config.as_deref(), f)?;
        let inst = load_process(&path).with_context(|| format!("loading {}", path.display()))?;
        out.push((inst, FIXED_STREAM, 1 + j as u64));
    }
    ensure!(!out.is_empty(), "config selects no instances");
    Ok(out)
}

pub fn run(opts: &Options) -> Result<Outcome> {
    let mut cfg: VerifyConfig = load(opts.config.as_deref())?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    ensure!(cfg.tol.is_finite() && cfg.tol >= 0.0, "tol must be a non-negative number");
    ensure!(
        cfg.candidates == CandidateMode::Standard || cfg.n_samples > 0,
        "n_samples must be positive"
    );
    let work = instances(opts, &cfg)?;
    let popts = Prop1Options {
        tol: cfg.tol,
        closure_depth: cfg.closure_depth,
        bot_probes: cfg.bot_probes,
        ..Default::default()
    };
    let reports = work
        .into_par_iter()
        .map(|(mut inst, stream, k)| {
            let cands = candidates(&cfg, &mut inst, stream, k);
            let p = prop1_instance(&inst, cands);
            verify_proposition1(&p, &inst.family, &inst.payoff_family(), &popts)
                .with_context(|| format!("instance {}", inst.id))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut strict = Vec::new();
    for r in &reports {
        for c in &r.candidates {
            let e = &c.report;
            rows.push(CandidateRow {
                instance: &r.id,
                candidate: &c.label,
                conditional_equal: e.conditional.equal,
                transition_equal: e.transition.equal,
                trajectory_equal: e.trajectory.equal,
                conditional_deviation: e.conditional.max_deviation,
                transition_deviation: e.transition.max_deviation,
                trajectory_deviation: e.trajectory.max_deviation,
                transition_family_size: c.transition_family_size,
                chain_holds: c.chain_holds,
            });
        }
        if let Some(s) = &r.strictness {
            strict.push(StrictnessRow {
                instance: &r.id,
                trajectory_equal: s.trajectory_equal,
                trajectory_max_deviation: s.trajectory_max_deviation,
                transition_equal: s.transition_equal,
                transition_witness_deviation: s.transition_witness_deviation,
                min_escape_mass: s.min_escape_mass,
                value_function_max_gap: s.value_function_max_gap,
                holds: s.holds,
            });
        }
    }
    let violations: usize = reports.iter().map(|r| r.chain_violations).sum();
    let strict_fail = strict.iter().filter(|s| !s.holds).count();

    out_dir(&opts.out)?;
    write_csv(&opts.out.join("prop1_candidates.csv"), &CANDIDATE_HEADER, &rows)?;
    write_csv(&opts.out.join("prop1_strictness.csv"), &STRICTNESS_HEADER, &strict)?;
    write_json(
        &opts.out.join("prop1_report.json"),
        &Report {
            config: &cfg,
            n_instances: reports.len(),
            n_candidates: rows.len(),
            chain_violations: violations,
            strictness_checked: strict.len(),
            strictness_failures: strict_fail,
            instances: &reports,
        },
    )?;

    println!(
        "{} instances, {} candidates, {} chain violations; strictness checked on {} ({} failed)",
        reports.len(),
        rows.len(),
        violations,
        strict.len(),
        strict_fail
    );
    if violations > 0 {
        return Ok(Outcome::Violation(format!("{violations} candidate(s) break the inclusion chain")));
    }
    Ok(Outcome::Ok)
}
