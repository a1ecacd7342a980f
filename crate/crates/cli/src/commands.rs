use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rtcp::io::{read_matrix, write_matrix, TimeScale};
use rtcp::report::{
    analyze_fit, condition_csv, item_means_csv, item_recovery_table, item_table, offset_means_csv, posterior_csv,
    posterior_tables, recovery_csv, recovery_table, selection_table, structural_table, ItemParameter,
};
use rtcp::selection::select_c;
use rtcp::simulation::{grid_conditions, run_grid, simulate_replication};
use rtcp::{
    fit, fit_from, AnalysisOptions, Error, FitOptions, ModelConfig, ParamLayout, Provenance, Result, ResultBundle,
    RtMatrix, SimCondition,
};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, FitArgs, InputArgs, PlotArgs, SelectArgs, SimulateArgs, StudyArgs};

/// What `run_config.json` holds: the parsed command line and where it ran.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub provenance: Provenance,
    pub config: Cli,
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Study(args) => cmd_study(cli, args),
        Command::Select(args) => cmd_select(cli, args),
        Command::Plotdata(args) => cmd_plotdata(cli, args),
        Command::Rerun { config } => {
            let saved: RunConfig = serde_json::from_slice(&fs::read(config)?)?;
            if matches!(saved.config.command, Command::Rerun { .. }) {
                return Err(Error::Config("a saved configuration cannot itself be a rerun".into()));
            }
            info!(
                "re-running {} (config sha256:{})",
                saved.provenance.command, saved.provenance.config_hash
            );
            run(&saved.config)
        }
    }
}

fn read_input(input: &InputArgs) -> Result<RtMatrix> {
    let scale = if input.raw_seconds {
        TimeScale::Raw
    } else {
        TimeScale::Log
    };
    read_matrix(&input.input, scale)
}

struct Output {
    dir: PathBuf,
    provenance: Provenance,
}

impl Output {
    fn new(dir: &Path, command: &str, cli: &Cli, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let out = Self {
            dir: dir.to_path_buf(),
            provenance: Provenance::new(command, cli, seed)?,
        };
        out.json(
            "run_config.json",
            &RunConfig {
                provenance: out.provenance.clone(),
                config: cli.clone(),
            },
        )?;
        Ok(out)
    }

    fn text(&self, name: &str, content: &str) -> Result<()> {
        fs::write(self.dir.join(name), content)?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        fs::write(self.dir.join(name), bytes)?;
        Ok(())
    }
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let data = read_input(&args.input)?;
    let options = args.estimation.fit_options();
    let analysis = AnalysisOptions {
        alpha: args.alpha_level,
        threshold: args.threshold,
        lrt: !args.no_lrt,
    };
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {}",
            args.threshold
        )));
    }
    if !(args.alpha_level > 0.0 && args.alpha_level < 1.0) {
        return Err(Error::Config(format!(
            "alpha level must lie in (0, 1), got {}",
            args.alpha_level
        )));
    }
    let out = Output::new(&args.output_dir, "fit", cli, args.estimation.seed)?;

    let (config, result, selection) = match (args.c, &args.candidates) {
        (Some(c), _) => {
            let config = ModelConfig::new(data.n_items(), c)?;
            (config, fit(&data, &config, &options)?, None)
        }
        (None, Some(candidates)) => {
            let quick = FitOptions {
                standard_errors: false,
                ..options.clone()
            };
            let selection = select_c(&data, candidates, &quick)?;
            let c = selection.selected.icl;
            info!("ICL selects c = {c}");
            let config = ModelConfig::new(data.n_items(), c)?;
            let start = selection
                .candidate(c)
                .and_then(|cand| cand.fit.as_ref())
                .map(|f| f.theta_hat.clone())
                .ok_or_else(|| Error::Numerical(format!("no fit stored for c = {c}")))?;
            let result = fit_from(&data, &config, &options, start)?;
            out.text("selection.txt", &selection_table(&selection, &out.provenance))?;
            (config, result, Some(selection))
        }
        (None, None) => return Err(Error::Config("give --c or --candidates".into())),
    };
    let bundle = analyze_fit(
        &data,
        &config,
        &options,
        &analysis,
        result,
        selection,
        out.provenance.clone(),
    )?;

    out.json("bundle.json", &bundle)?;
    out.text("item_parameters.txt", &item_table(&bundle))?;
    out.text("structural.txt", &structural_table(&bundle))?;
    out.text("posterior_summary.txt", &posterior_tables(&bundle))?;
    out.text("posterior.csv", &posterior_csv(&bundle.posterior)?)?;
    println!(
        "c = {}, loglik = {:.4}, converged = {}, changed = {} of {}; results in {}",
        config.boundary(),
        bundle.fit.loglik,
        bundle.fit.converged,
        bundle.summary.changed,
        bundle.summary.respondents,
        out.dir.display()
    );
    Ok(())
}

/// Generating values written next to a simulated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub provenance: Provenance,
    pub condition: SimCondition,
    pub replication: usize,
    pub parameter_names: Vec<String>,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub tau: Vec<usize>,
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let condition = SimCondition {
        psi1: args.psi1,
        psi3: args.psi3,
        ..SimCondition::new(args.n_respondents, args.n_items, args.c, args.pi)
    }
    .with_replications(args.replication + 1)
    .with_seed(args.seed);
    condition.validate()?;
    let (truth, data) = simulate_replication(&condition, args.replication)?;
    let out = Output::new(&args.output_dir, "simulate", cli, args.seed)?;
    write_matrix(&out.dir.join("data.csv"), &data)?;
    out.json(
        "truth.json",
        &TruthFile {
            provenance: out.provenance.clone(),
            parameter_names: ParamLayout::new(&condition.config()?).names(),
            condition,
            replication: args.replication,
            theta: truth.theta.into_values(),
            xi: truth.xi,
            tau: truth.tau,
        },
    )?;
    println!(
        "wrote {} x {} matrix to {}",
        data.n_respondents(),
        data.n_items(),
        out.dir.display()
    );
    Ok(())
}

/// One entry of a custom condition file.
#[derive(Debug, Deserialize)]
struct ConditionSpec {
    n_respondents: usize,
    n_items: usize,
    boundary: usize,
    prevalence: f64,
    psi1: Option<f64>,
    psi3: Option<f64>,
}

fn cmd_study(cli: &Cli, args: &StudyArgs) -> Result<()> {
    let seed = args.estimation.seed;
    let conditions: Vec<SimCondition> = match (&args.grid, &args.conditions) {
        (Some(grid), _) => grid_conditions((*grid).into(), args.replications, seed),
        (None, Some(path)) => {
            let specs: Vec<ConditionSpec> = serde_json::from_slice(&fs::read(path)?)?;
            specs
                .into_iter()
                .map(|s| {
                    let base = SimCondition::new(s.n_respondents, s.n_items, s.boundary, s.prevalence);
                    SimCondition {
                        psi1: s.psi1.unwrap_or(base.psi1),
                        psi3: s.psi3.unwrap_or(base.psi3),
                        ..base
                    }
                    .with_replications(args.replications)
                    .with_seed(seed)
                })
                .collect()
        }
        (None, None) => return Err(Error::Config("give --grid or --conditions".into())),
    };
    if conditions.is_empty() {
        return Err(Error::Config("no conditions to run".into()));
    }
    for c in &conditions {
        c.validate()?;
    }
    if args.replications < 2 {
        warn!(
            "{} replication(s) per condition: Monte Carlo error is not estimable",
            args.replications
        );
    }
    let out = Output::new(&args.output_dir, "study", cli, seed)?;
    let reports = run_grid(&conditions, &args.estimation.fit_options())?;

    out.text("recovery.txt", &recovery_table(&reports, &out.provenance))?;
    out.text("recovery.csv", &recovery_csv(&reports)?)?;
    for parameter in ItemParameter::ALL {
        out.text(
            &format!("{}.txt", parameter.name()),
            &item_recovery_table(&reports, parameter, &out.provenance),
        )?;
    }
    for (k, report) in reports.iter().enumerate() {
        out.text(&format!("condition_{:02}.csv", k + 1), &condition_csv(report)?)?;
    }
    #[derive(Serialize)]
    struct Study<'a> {
        provenance: &'a Provenance,
        reports: &'a [rtcp::RecoveryReport],
    }
    out.json(
        "study.json",
        &Study {
            provenance: &out.provenance,
            reports: &reports,
        },
    )?;
    println!("{} condition reports in {}", reports.len(), out.dir.display());
    Ok(())
}

fn cmd_select(cli: &Cli, args: &SelectArgs) -> Result<()> {
    let data = read_input(&args.input)?;
    let options = FitOptions {
        standard_errors: false,
        ..args.estimation.fit_options()
    };
    let out = Output::new(&args.output_dir, "select", cli, args.estimation.seed)?;
    let selection = select_c(&data, &args.candidates, &options)?;
    out.text("selection.txt", &selection_table(&selection, &out.provenance))?;
    #[derive(Serialize)]
    struct Selection<'a> {
        provenance: &'a Provenance,
        selection: &'a rtcp::selection::SelectionResult,
    }
    out.json(
        "selection.json",
        &Selection {
            provenance: &out.provenance,
            selection: &selection,
        },
    )?;
    println!(
        "selected c: AIC {}, BIC {}, ICL {}",
        selection.selected.aic, selection.selected.bic, selection.selected.icl
    );
    Ok(())
}

fn cmd_plotdata(cli: &Cli, args: &PlotArgs) -> Result<()> {
    let bundle: ResultBundle = serde_json::from_slice(&fs::read(&args.bundle)?)?;
    let data = read_input(&args.input)?;
    let out = Output::new(&args.output_dir, "plotdata", cli, bundle.provenance.seed)?;
    out.text("item_means.csv", &item_means_csv(&data, &bundle.posterior)?)?;
    out.text("offset_means.csv", &offset_means_csv(&data, &bundle.posterior)?)?;
    println!("plot data in {}", out.dir.display());
    Ok(())
}
