use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{CompareConfig, ExperimentConfig, GradientModeConfig, MethodConfig};
use crate::error::{Error, Result};
use crate::objectives::{robust_loss, weighted_loss, Baselines};
use crate::optim::{
    erm_train, format_sig9, ibr_train, primal_dual_train, write_trajectory, GradientMode,
    IbrOptions, PrimalDualOptions, TrainOutcome,
};
use crate::tasks::{generate, GroupedDataset};
use crate::weights::{temperature_distribution, training_distribution, GroupLosses, GroupWeights};

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub group_ids: Vec<String>,
    pub outcome: TrainOutcome,
    pub final_losses: GroupLosses,
    /// Size-weighted (pooled) average loss.
    pub average_loss: f64,
    pub worst_group_loss: f64,
    /// Robust loss under the method's own set (ERM: its sampling distribution).
    pub robust_loss: f64,
}

fn load_baselines(cfg: &ExperimentConfig, ds: &GroupedDataset) -> Result<Option<Baselines>> {
    cfg.method
        .baselines_path()
        .map(|path| {
            let text = fs::read_to_string(path)?;
            Baselines::parse_tsv(&text, &ds.group_ids, path.display().to_string())
        })
        .transpose()
}

/// Trains according to `cfg` and evaluates the final model. Writes nothing.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let ds = generate(&cfg.task, cfg.seed)?;
    let model = cfg.task.model();
    let sizes = ds.sizes();
    let baselines = load_baselines(cfg, &ds)?;
    let ibr_opts = IbrOptions {
        epochs: cfg.epochs.unwrap_or(0),
        ema_lambda: cfg.ema_lambda,
        seed: cfg.seed,
        target_total: cfg.target_total,
        warm_start_ema: cfg.warm_start_ema,
        solver: cfg.solver,
    };
    log::info!(
        "running {} on {} groups ({} examples)",
        cfg.method.label(),
        sizes.len(),
        ds.total()
    );

    let outcome = match &cfg.method {
        MethodConfig::Erm { tau } => {
            let weights = temperature_distribution(&sizes, *tau)?;
            erm_train(&ds, &model, &weights, &cfg.schedule, &ibr_opts)?
        }
        MethodConfig::Ibr { set, .. } => {
            let set = set.resolve(&sizes)?;
            ibr_train(
                &ds,
                &model,
                &set,
                baselines.as_ref(),
                &cfg.schedule,
                &ibr_opts,
            )?
        }
        MethodConfig::PrimalDual {
            set,
            gradient_mode,
            q_step,
            batch_size,
            record_every,
            ..
        } => {
            let set = set.resolve(&sizes)?;
            let mode = match gradient_mode {
                GradientModeConfig::SampleFromQ => GradientMode::SampleFromQ,
                GradientModeConfig::ImportanceWeight { p0: Some(p0) } => {
                    GradientMode::ImportanceWeight(GroupWeights::new(p0.clone())?)
                }
                GradientModeConfig::ImportanceWeight { p0: None } => {
                    GradientMode::ImportanceWeight(training_distribution(&sizes)?)
                }
            };
            let opts = PrimalDualOptions {
                steps: cfg.steps.unwrap_or(0),
                q_step: *q_step,
                batch_size: *batch_size,
                ema_lambda: cfg.ema_lambda,
                seed: cfg.seed,
                record_every: *record_every,
                solver: cfg.solver,
            };
            primal_dual_train(
                &ds,
                &model,
                &set,
                baselines.as_ref(),
                &cfg.schedule,
                &mode,
                &opts,
            )?
        }
    };

    let final_losses = ds.group_losses(&model, &outcome.params.theta)?;
    let p_train = training_distribution(&sizes)?;
    let eval_set = cfg.method.evaluation_set(&sizes)?;
    Ok(RunReport {
        label: cfg.method.label(),
        average_loss: weighted_loss(&final_losses, &p_train)?,
        worst_group_loss: final_losses.max(),
        robust_loss: robust_loss(&final_losses, &eval_set, None, &cfg.solver)?,
        group_ids: ds.group_ids,
        final_losses,
        outcome,
    })
}

/// Writes `trajectory.csv`, `final.csv`, `baselines.tsv`, `config.echo.json`
/// and `summary.txt` into `dir`.
pub fn write_artifacts(cfg: &ExperimentConfig, report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut traj = Vec::new();
    write_trajectory(&mut traj, &report.outcome.trajectory, &report.group_ids)?;
    fs::write(dir.join("trajectory.csv"), traj)?;

    let mut fin = String::from("group,final_loss,q_final\n");
    for (g, id) in report.group_ids.iter().enumerate() {
        writeln!(
            fin,
            "{id},{},{}",
            format_sig9(report.final_losses.as_slice()[g]),
            format_sig9(report.outcome.final_q[g])
        )
        .expect("writing to a String");
    }
    fs::write(dir.join("final.csv"), fin)?;

    let baselines = Baselines::new(
        report.final_losses.as_slice().to_vec(),
        report.label.clone(),
    )?;
    fs::write(
        dir.join("baselines.tsv"),
        baselines.to_tsv(&report.group_ids)?,
    )?;

    fs::write(dir.join("config.echo.json"), cfg.to_json() + "\n")?;

    let mut summary = String::new();
    writeln!(summary, "method: {}", report.label).unwrap();
    writeln!(
        summary,
        "average_loss: {}",
        format_sig9(report.average_loss)
    )
    .unwrap();
    writeln!(
        summary,
        "worst_group_loss: {}",
        format_sig9(report.worst_group_loss)
    )
    .unwrap();
    writeln!(summary, "robust_loss: {}", format_sig9(report.robust_loss)).unwrap();
    writeln!(summary, "steps: {}", report.outcome.steps).unwrap();
    let theta: Vec<String> = report
        .outcome
        .params
        .theta
        .iter()
        .map(|t| format_sig9(*t))
        .collect();
    writeln!(summary, "theta: [{}]", theta.join(", ")).unwrap();
    fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.output_dir.clone().ok_or_else(|| {
        Error::Config("output_dir is not set (use --output or the config field)".into())
    })
}

/// Runs `cfg` and writes its artifacts to its output directory.
pub fn run_to_disk(cfg: &ExperimentConfig) -> Result<RunReport> {
    let dir = output_dir(cfg)?;
    let report = run_experiment(cfg)?;
    write_artifacts(cfg, &report, &dir)?;
    Ok(report)
}

pub const COMPARISON_FILE: &str = "comparison.csv";

/// Runs every method of `cfg` in parallel, each into its own subdirectory,
/// and writes a joint table `comparison.csv`. Returns the table text.
pub fn compare(cfg: &CompareConfig) -> Result<String> {
    let root = output_dir(&cfg.base)?;
    let experiments: Vec<ExperimentConfig> = cfg
        .experiments()
        .into_iter()
        .enumerate()
        .map(|(i, mut e)| {
            e.output_dir = Some(root.join(format!("{i:02}_{}", e.method.label())));
            e
        })
        .collect();
    for e in &experiments {
        e.validate()?;
    }
    let reports: Vec<Result<RunReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = experiments
            .iter()
            .map(|e| scope.spawn(move || run_to_disk(e)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("comparison run panicked"))
            .collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

    let mut table = String::from("method,average_loss,worst_group_loss");
    if let Some(first) = reports.first() {
        for id in &first.group_ids {
            write!(table, ",{id}").unwrap();
        }
    }
    table.push('\n');
    for r in &reports {
        write!(
            table,
            "{},{},{}",
            r.label,
            format_sig9(r.average_loss),
            format_sig9(r.worst_group_loss)
        )
        .unwrap();
        for l in r.final_losses.as_slice() {
            write!(table, ",{}", format_sig9(*l)).unwrap();
        }
        table.push('\n');
    }
    fs::create_dir_all(&root)?;
    fs::write(root.join(COMPARISON_FILE), &table)?;
    Ok(table)
}
