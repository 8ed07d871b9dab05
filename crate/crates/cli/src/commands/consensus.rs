use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use reprsim::consensus::{experiment_split, generate_dataset, run_experiment, ConsensusConfig, Metric, ModelKind};

use crate::config::{load, out_dir, write_csv, write_json};
use crate::svg::{bar_chart, Series};
use crate::{Options, Outcome};

pub const HELP: &str = "\
Config (JSON, every key optional, unknown keys rejected):
  experiment      {n_positions, group_size, n_questions, n_participants,
                   style_labels, sharpness_range, style_bias_range,
                   val_fraction, alpha, lambda, winrate_samples, seed}
  write_dataset   also write the split episodes as JSON lines, default false

Outputs in --out:
  consensus_metrics.csv        model,metric,value,std_error,n
                               model in {population, personal, uniform};
                               metric in {loglik, winrate,
                               discrepancy-single, discrepancy-all}
  consensus_report.json        config, split summary, metrics and mean
                               representativity per model and regime
  consensus_loglik.svg         held-out log-likelihood per model
  consensus_winrate.svg        win rate against ground-truth critiques
  consensus_discrepancy.svg    payoff discrepancy, single vs all substitution
  consensus_dataset.jsonl      only with write_dataset";

const HEADER: [&str; 5] = ["model", "metric", "value", "std_error", "n"];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusRun {
    pub experiment: ConsensusConfig,
    pub write_dataset: bool,
}

#[derive(Serialize)]
struct Row {
    model: &'static str,
    metric: &'static str,
    value: f64,
    std_error: f64,
    n: usize,
}

pub fn run(opts: &Options) -> Result<Outcome> {
    let mut cfg: ConsensusRun = load(opts.config.as_deref())?;
    if let Some(s) = opts.seed {
        cfg.experiment.seed = s;
    }
    let exp = &cfg.experiment;
    let report = run_experiment(exp)?;

    out_dir(&opts.out)?;
    let rows: Vec<Row> = report
        .rows
        .iter()
        .map(|r| Row {
            model: r.model.name(),
            metric: r.metric.name(),
            value: r.value,
            std_error: r.std_error,
            n: r.n,
        })
        .collect();
    write_csv(&opts.out.join("consensus_metrics.csv"), &HEADER, &rows)?;
    write_json(&opts.out.join("consensus_report.json"), &report)?;

    let models: Vec<&str> = ModelKind::ALL.iter().map(|m| m.name()).collect();
    let series = |name, metric| Series {
        name,
        values: ModelKind::ALL.iter().map(|&m| report.get(m, metric).value).collect(),
        errors: ModelKind::ALL.iter().map(|&m| report.get(m, metric).std_error).collect(),
    };
    let charts = [
        (
            "consensus_loglik.svg",
            bar_chart(
                "Held-out critique log-likelihood",
                "mean log-likelihood (nats)",
                &models,
                &[series("log-likelihood", Metric::Loglik)],
            ),
        ),
        (
            "consensus_winrate.svg",
            bar_chart(
                "Win rate against ground-truth critiques",
                "win rate",
                &models,
                &[series("win rate", Metric::Winrate)],
            ),
        ),
        (
            "consensus_discrepancy.svg",
            bar_chart(
                "Payoff discrepancy after substitution",
                "mean absolute payoff change",
                &models,
                &[
                    series("single substitution", Metric::DiscrepancySingle),
                    series("all substituted", Metric::DiscrepancyAll),
                ],
            ),
        ),
    ];
    for (name, svg) in charts {
        let path = opts.out.join(name);
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }

    if cfg.write_dataset {
        let (data, _) = generate_dataset(exp)?;
        let split = experiment_split(exp, &data)?;
        let path = opts.out.join("consensus_dataset.jsonl");
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
        split.train.write_jsonl(&mut w)?;
        split.validation.write_jsonl(&mut w)?;
        w.flush()?;
    }

    for r in &rows {
        println!("{:<10} {:<18} {:>9.4} ± {:.4} (n={})", r.model, r.metric, r.value, r.std_error, r.n);
    }
    Ok(Outcome::Ok)
}
