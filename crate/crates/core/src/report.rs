//! Result bundles, provenance and the human-readable tables written by the
//! command-line tool.

use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{
    fit, lrt_psi, wald_gamma_tests, FitOptions, FitResult, LrtResult, NoChangeInterval, PsiCoefficient, WaldTestResult,
};
use crate::model::{ModelConfig, RtMatrix};
use crate::params::ParamLayout;
use crate::posterior::{prior_posterior_check, PosteriorSummary, PosteriorTable, PriorPosteriorCheck};
use crate::selection::SelectionResult;
use crate::simulation::RecoveryReport;
use crate::table::{fixed, p_value, stars, Align, TextTable, DASH, NA};

pub const TOOL: &str = "rtcp";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where an output came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the run configuration's JSON encoding.
    pub config_hash: String,
    pub seed: u64,
    /// RFC 3339, UTC. Taken from `SOURCE_DATE_EPOCH` when set.
    pub created: String,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: config_hash(config)?,
            seed,
            created: timestamp()?,
        })
    }

    /// One-line stamp for text outputs.
    pub fn stamp(&self) -> String {
        format!(
            "{} {} {} | config sha256:{} | seed {}",
            self.tool,
            self.version,
            self.command,
            &self.config_hash[..12.min(self.config_hash.len())],
            self.seed
        )
    }
}

pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn timestamp() -> Result<String> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse::<i64>()
            .map_err(|_| Error::config(format!("SOURCE_DATE_EPOCH is not an integer: {v:?}")))?,
        Err(_) => SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0),
    };
    let time = chrono::DateTime::from_timestamp(secs, 0)
        .ok_or_else(|| Error::config(format!("timestamp {secs} out of range")))?;
    Ok(time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Credible sets have mass at least `1 - alpha`; intervals have level
    /// `1 - alpha`.
    pub alpha: f64,
    pub threshold: f64,
    /// Run the likelihood-ratio tests for `psi1` and `psi3`.
    pub lrt: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            threshold: 0.5,
            lrt: true,
        }
    }
}

/// One row of the structural-parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    /// Two-sided Wald p-value.
    pub p: Option<f64>,
    pub lrt: Option<LrtResult>,
    /// Why the likelihood-ratio test is missing, when it was requested.
    pub lrt_error: Option<String>,
}

/// Everything one fit produces, in a form that serializes losslessly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub config: ModelConfig,
    pub n_respondents: usize,
    pub logged_at_ingest: bool,
    pub parameter_names: Vec<String>,
    pub fit: FitResult,
    pub wald: WaldTestResult,
    pub structural: Vec<StructuralRow>,
    pub no_change: Option<NoChangeInterval>,
    pub posterior: PosteriorTable,
    pub summary: PosteriorSummary,
    pub mode_distribution: Vec<(usize, usize)>,
    pub prior_posterior: PriorPosteriorCheck,
    pub selection: Option<SelectionResult>,
}

/// Fits the model and derives every reported quantity.
pub fn analyze(
    data: &RtMatrix,
    config: &ModelConfig,
    options: &FitOptions,
    analysis: &AnalysisOptions,
    provenance: Provenance,
) -> Result<ResultBundle> {
    let result = fit(data, config, options)?;
    analyze_fit(data, config, options, analysis, result, None, provenance)
}

/// Builds the bundle around an existing fit.
pub fn analyze_fit(
    data: &RtMatrix,
    config: &ModelConfig,
    options: &FitOptions,
    analysis: &AnalysisOptions,
    result: FitResult,
    selection: Option<SelectionResult>,
    provenance: Provenance,
) -> Result<ResultBundle> {
    if !(analysis.alpha > 0.0 && analysis.alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha level must lie in (0, 1), got {}",
            analysis.alpha
        )));
    }
    if !result.converged {
        warn!(
            "fit did not converge (score sup-norm {:.3e}); reporting the last iterate",
            result.gradient_norm_at_solution
        );
    }
    let layout = ParamLayout::new(config);
    let grid = result.grid()?;
    let posterior = {
        let lik = result.likelihood(data, &grid, config)?;
        PosteriorTable::compute(&lik, &result.theta_hat, analysis.alpha, analysis.threshold)?
    };
    let prior_posterior = prior_posterior_check(&posterior, &result.theta_hat, &grid, config)?;
    let wald = wald_gamma_tests(&result, config);
    let normal = Normal::standard();

    let mut structural = Vec::with_capacity(3);
    for (name, index, which) in [
        ("psi1", layout.psi1(), Some(PsiCoefficient::Psi1)),
        ("psi2", layout.psi2(), None),
        ("psi3", layout.psi3(), Some(PsiCoefficient::Psi3)),
    ] {
        let estimate = result.theta_hat.values()[index];
        let se = result.standard_error(index).filter(|s| *s > 0.0);
        let z = se.map(|s| estimate / s);
        let (lrt, lrt_error) = match which {
            Some(which) if analysis.lrt => match lrt_psi(data, config, options, which, &result) {
                Ok(t) => (Some(t), None),
                Err(e) => {
                    warn!("likelihood-ratio test for {name} unavailable: {e}");
                    (None, Some(e.to_string()))
                }
            },
            _ => (None, None),
        };
        structural.push(StructuralRow {
            name: name.into(),
            estimate,
            se,
            z,
            p: z.map(|z| 2.0 * normal.cdf(-z.abs())),
            lrt,
            lrt_error,
        });
    }
    let no_change = match result.no_change_probability_ci(config, 1.0 - analysis.alpha) {
        Ok(ci) => Some(ci),
        Err(e) => {
            warn!("no-change probability interval unavailable: {e}");
            None
        }
    };
    Ok(ResultBundle {
        provenance,
        config: *config,
        n_respondents: data.n_respondents(),
        logged_at_ingest: data.logged_at_ingest(),
        parameter_names: layout.names(),
        summary: posterior.summary(),
        mode_distribution: posterior.mode_distribution(),
        wald,
        structural,
        no_change,
        prior_posterior,
        posterior,
        selection,
        fit: result,
    })
}

fn estimate_cell(estimate: f64, se: Option<f64>) -> String {
    match se {
        Some(se) => format!("{} ({})", fixed(estimate, 3), fixed(se, 3)),
        None => format!("{} ({NA})", fixed(estimate, 3)),
    }
}

fn opt_fixed(x: Option<f64>, decimals: usize) -> String {
    x.map_or_else(|| NA.to_string(), |x| fixed(x, decimals))
}

/// Item parameters with standard errors in parentheses; post-change
/// effects carry Holm-adjusted Wald stars.
pub fn item_table(bundle: &ResultBundle) -> String {
    let config = &bundle.config;
    let layout = ParamLayout::new(config);
    let theta = bundle.fit.theta_hat.values();
    let se = |r: usize| bundle.fit.standard_error(r);
    let mut table = TextTable::new(["Item", "beta", "alpha", "gamma", "sigma"])
        .title("Item parameter estimates (standard errors in parentheses, log response-time scale)")
        .align(3, Align::Left);
    for j in 0..config.n_items() {
        let gamma = if j + 1 < config.first_gamma_item() {
            DASH.to_string()
        } else {
            let g = j + 1 - config.first_gamma_item();
            let r = layout.gamma(g);
            let test = &bundle.wald.tests[g];
            let mark = test.p_holm.map_or("", stars);
            format!("{}{mark}", estimate_cell(theta[r], se(r)))
        };
        let ls = layout.log_sigma(j);
        let sigma = theta[ls].exp();
        table.row([
            format!("RT{}", j + 1),
            estimate_cell(theta[layout.beta(j)], se(layout.beta(j))),
            estimate_cell(theta[layout.alpha(j)], se(layout.alpha(j))),
            gamma,
            estimate_cell(sigma, se(ls).map(|s| s * sigma)),
        ]);
        if j + 2 == config.first_gamma_item() {
            table.rule();
        }
    }
    let tested = bundle.wald.tests.len();
    table.note(format!(
        "Items RT1-RT{} carry no gamma ({DASH}). Stars: one-sided Wald tests of gamma < 0, Holm-adjusted over {tested} items; * p < .05, ** p < .01, *** p < .001.",
        config.first_gamma_item() - 1
    ));
    table.note(format!(
        "sigma SE by the delta method from log sigma. {NA}: standard error undefined."
    ));
    table.note(bundle.provenance.stamp());
    table.render()
}

/// Structural parameters with Wald and likelihood-ratio tests and the
/// no-change probability interval.
pub fn structural_table(bundle: &ResultBundle) -> String {
    let mut table = TextTable::new(["Parameter", "Interpretation", "Est.", "SE", "z", "p", "chi2(1)", "p"])
        .title("Change-point structural parameters")
        .groups([("", 2), ("Wald", 4), ("LRT vs. psi = 0", 2)])
        .align(1, Align::Left);
    let meaning = |name: &str| match name {
        "psi1" => "CP-location",
        "psi2" => "No-CP log-odds",
        _ => "Speed x no-CP",
    };
    for row in &bundle.structural {
        let (chi, p) = match (&row.lrt, row.name.as_str()) {
            (Some(t), _) => (fixed(t.statistic, 3), p_value(t.p_value)),
            (None, "psi2") => (DASH.to_string(), DASH.to_string()),
            (None, _) => (NA.to_string(), NA.to_string()),
        };
        table.row([
            row.name.clone(),
            meaning(&row.name).to_string(),
            fixed(row.estimate, 3),
            opt_fixed(row.se, 3),
            opt_fixed(row.z, 3),
            row.p.map_or_else(|| NA.to_string(), p_value),
            chi,
            p,
        ]);
    }
    let j = bundle.config.n_items();
    match &bundle.no_change {
        Some(ci) => table.note(format!(
            "P(no CP | xi = 0) = {}, {}% CI [{}, {}] (delta method)",
            fixed(ci.estimate, 3),
            fixed(100.0 * ci.level, 0),
            fixed(ci.lower, 3),
            fixed(ci.upper, 3)
        )),
        None => table.note(format!(
            "P(tau = {j} | xi = 0): interval unavailable (SE of psi2 undefined)"
        )),
    }
    table.note("Wald p-values are two-sided. The LRT for psi2 is not reported (psi2 = 0 means P(no CP) = 0.5).");
    table.note(bundle.provenance.stamp());
    table.render()
}

/// Classification and uncertainty metrics, the modal-change-point
/// distribution, and prior against average posterior.
pub fn posterior_tables(bundle: &ResultBundle) -> String {
    let s = &bundle.summary;
    let config = &bundle.config;
    let j = config.n_items();
    let mut t = TextTable::new(["Metric", "Value"]).title(format!(
        "Posterior summary (changed if P(tau < J | y) >= {})",
        fixed(s.threshold, 2)
    ));
    t.row(["Sample size N".to_string(), s.respondents.to_string()]);
    t.row(["Number of items J".to_string(), j.to_string()]);
    t.row(["Boundary c".to_string(), config.boundary().to_string()]);
    t.row([
        "Earliest admissible change-point".to_string(),
        format!("item {}", config.boundary() + 1),
    ]);
    t.rule();
    t.row(["Mean P(tau < J | y)".to_string(), fixed(s.mean_p_change, 3)]);
    t.row(["Median P(tau < J | y)".to_string(), fixed(s.median_p_change, 3)]);
    t.row([
        format!("Respondents with P(tau < J | y) >= {}", threshold_label(s.threshold)),
        s.changed.to_string(),
    ]);
    t.row([
        "Respondents with P(tau < J | y) >= .80".to_string(),
        s.changed_at_0_8.to_string(),
    ]);
    t.rule();
    t.row([
        "Proportion with modal tau = J (no change)".to_string(),
        fixed(s.modal_no_change_share, 3),
    ]);
    t.row([
        "Mean posterior mean E[tau | y]".to_string(),
        fixed(s.mean_posterior_mean, 2),
    ]);
    t.row([
        "Mean posterior mean among classified changers".to_string(),
        opt_fixed(s.mean_posterior_mean_changers, 2),
    ]);
    t.rule();
    t.row([
        "Mean normalised posterior entropy".to_string(),
        fixed(s.mean_entropy, 3),
    ]);
    t.row([
        "Median normalised posterior entropy".to_string(),
        fixed(s.median_entropy, 3),
    ]);
    t.rule();
    t.row(["Classified as changed".to_string(), s.changed.to_string()]);
    t.row(["Classified as no change".to_string(), s.unchanged.to_string()]);

    let mut modes = TextTable::new(["Modal tau", "Frequency"])
        .title(format!("Distribution of the modal change-point (tau = {j}: no change)"))
        .align(0, Align::Right);
    for (tau, n) in &bundle.mode_distribution {
        modes.row([tau.to_string(), n.to_string()]);
    }
    modes.rule();
    modes.row(["Total".to_string(), s.respondents.to_string()]);

    let check = &bundle.prior_posterior;
    let mut prior = TextTable::new(["tau", "Prior", "Avg. posterior"])
        .title("Model-implied prior at xi = 0 and average posterior")
        .align(0, Align::Right);
    for ((tau, p), q) in check.tau.iter().zip(&check.prior_at_zero).zip(&check.average_posterior) {
        prior.row([tau.to_string(), fixed(*p, 4), fixed(*q, 4)]);
    }
    prior.rule();
    prior.row([
        "Total".to_string(),
        fixed(check.prior_at_zero.iter().sum(), 4),
        fixed(check.average_posterior.iter().sum(), 4),
    ]);
    prior.note(bundle.provenance.stamp());

    [t.render(), modes.render(), prior.render()].join("\n")
}

fn threshold_label(threshold: f64) -> String {
    let s = format!("{threshold:.2}");
    s.strip_prefix('0').map(str::to_string).unwrap_or(s)
}

/// Per-respondent posterior rows as CSV (1-based respondent numbers,
/// credible sets separated by `;`, then `P(tau = t | y)` columns).
pub fn posterior_csv(table: &PosteriorTable) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let width = table.rows.first().map_or(0, |r| r.probs.len());
    let mut header: Vec<String> = [
        "respondent",
        "p_change",
        "classification",
        "mode",
        "mean",
        "entropy",
        "credible_set",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..width).map(|s| format!("p_tau_{}", table.first_tau + s)));
    out.write_record(&header)?;
    for (i, row) in table.rows.iter().enumerate() {
        let mut record = vec![
            (i + 1).to_string(),
            row.p_change.to_string(),
            serde_json::to_value(row.classification)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            row.mode.to_string(),
            row.mean.to_string(),
            row.entropy_normalized.to_string(),
            row.credible_set
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ];
        record.extend(row.probs.iter().map(|p| p.to_string()));
        out.write_record(&record)?;
    }
    csv_string(out)
}

fn csv_string(out: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = out
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Criterion values per candidate and the winner under each criterion.
pub fn selection_table(selection: &SelectionResult, provenance: &Provenance) -> String {
    let mut t = TextTable::new(["c", "loglik", "d", "AIC", "BIC", "ICL"])
        .title(format!("Boundary selection (N = {})", selection.n_respondents))
        .align(0, Align::Right);
    let mark = |c: usize, winner: usize| if c == winner { "*" } else { "" };
    for cand in &selection.candidates {
        let c = cand.boundary;
        t.row([
            c.to_string(),
            fixed(cand.loglik, 2),
            cand.n_params.to_string(),
            format!("{}{}", fixed(cand.criteria.aic, 2), mark(c, selection.selected.aic)),
            format!("{}{}", fixed(cand.criteria.bic, 2), mark(c, selection.selected.bic)),
            format!("{}{}", fixed(cand.criteria.icl, 2), mark(c, selection.selected.icl)),
        ]);
    }
    t.note(format!(
        "Selected: AIC c = {}, BIC c = {}, ICL c = {} (* marks the minimum; ties go to the larger c)",
        selection.selected.aic, selection.selected.bic, selection.selected.icl
    ));
    for f in &selection.failed {
        t.note(format!("c = {} failed: {}", f.boundary, f.error));
    }
    for cand in selection.candidates.iter().filter(|c| !c.converged) {
        t.note(format!("c = {} did not reach the gradient tolerance", cand.boundary));
    }
    t.note(provenance.stamp());
    t.render()
}

/// Row labels that show only what varies across the conditions; `c` is
/// left out when it follows `J`.
pub fn condition_labels(reports: &[RecoveryReport]) -> Vec<String> {
    let conds: Vec<_> = reports.iter().map(|r| &r.condition).collect();
    let varies = |f: &dyn Fn(&crate::simulation::SimCondition) -> String| conds.iter().any(|c| f(c) != f(conds[0]));
    let n = varies(&|c| c.n_respondents.to_string());
    let j = varies(&|c| c.n_items.to_string());
    let c = varies(&|c| c.boundary.to_string()) && !j;
    let pi = varies(&|c| c.prevalence.to_string());
    let all = !(n || j || c || pi);
    conds
        .iter()
        .map(|cond| {
            let mut parts = Vec::new();
            if n || all {
                parts.push(format!("N={}", cond.n_respondents));
            }
            if j || all {
                parts.push(format!("J={}", cond.n_items));
            }
            if c || all {
                parts.push(format!("c={}", cond.boundary));
            }
            if pi || all {
                parts.push(format!("pi={}", cond.prevalence));
            }
            parts.join(", ")
        })
        .collect()
}

fn recovery_cells(report: &RecoveryReport, name: &str) -> [String; 2] {
    match report.parameter(name) {
        Some(p) => [fixed(p.bias, 3), fixed(p.rmse, 3)],
        None => [DASH.to_string(), DASH.to_string()],
    }
}

/// Change-point recovery and structural parameters, one row per
/// condition.
pub fn recovery_table(reports: &[RecoveryReport], provenance: &Provenance) -> String {
    let mut t = TextTable::new([
        "Condition",
        "Mode",
        "Mean",
        "Bias",
        "RMSE",
        "Bias",
        "RMSE",
        "Bias",
        "RMSE",
        "Used",
        "Failed",
    ])
    .groups([
        ("", 1),
        ("MAE(tau)", 2),
        ("psi1", 2),
        ("psi2", 2),
        ("psi3", 2),
        ("Replications", 2),
    ]);
    for (report, label) in reports.iter().zip(condition_labels(reports)) {
        let mut row = vec![label, fixed(report.mae_mode, 3), fixed(report.mae_mean, 3)];
        for name in ["psi1", "psi2", "psi3"] {
            row.extend(recovery_cells(report, name));
        }
        row.push(report.replications_used.to_string());
        row.push(report.failures.to_string());
        t.row(row);
    }
    if let Some(first) = reports.first() {
        t.note(format!(
            "True values: psi1 = {}, psi3 = {}; psi2 = log((1 - pi)/pi) per condition.",
            first.condition.psi1, first.condition.psi3
        ));
    }
    if reports.iter().any(|r| r.replications_used < 2) {
        t.note("Warning: fewer than two usable replications; Monte Carlo error is unbounded.");
    }
    t.note(provenance.stamp());
    t.render()
}

/// Item parameters a recovery table can be built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemParameter {
    Beta,
    Alpha,
    Gamma,
    Sigma,
}

impl ItemParameter {
    pub const ALL: [Self; 4] = [Self::Beta, Self::Alpha, Self::Gamma, Self::Sigma];

    pub fn name(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Alpha => "alpha",
            Self::Gamma => "gamma",
            Self::Sigma => "sigma",
        }
    }
}

/// Per-item bias and RMSE with conditions as column pairs; dashes where
/// the parameter does not exist.
pub fn item_recovery_table(reports: &[RecoveryReport], parameter: ItemParameter, provenance: &Provenance) -> String {
    let labels = condition_labels(reports);
    let mut header = vec!["Item".to_string()];
    let mut groups = vec![(String::new(), 1)];
    for label in &labels {
        header.extend(["Bias".to_string(), "RMSE".to_string()]);
        groups.push((label.clone(), 2));
    }
    let mut t = TextTable::new(header)
        .title(format!("Recovery of {} by item", parameter.name()))
        .groups(groups)
        .align(0, Align::Right);
    let max_items = reports.iter().map(|r| r.condition.n_items).max().unwrap_or(0);
    for j in 1..=max_items {
        let mut row = vec![j.to_string()];
        for report in reports {
            row.extend(recovery_cells(report, &format!("{}[{j}]", parameter.name())));
        }
        t.row(row);
    }
    t.note(format!("{DASH}: parameter not present for the item in that condition."));
    t.note(provenance.stamp());
    t.render()
}

/// Every parameter's bias and RMSE for one condition.
pub fn condition_csv(report: &RecoveryReport) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["parameter", "bias", "rmse"])?;
    out.write_record(["mae_mode".to_string(), report.mae_mode.to_string(), String::new()])?;
    out.write_record(["mae_mean".to_string(), report.mae_mean.to_string(), String::new()])?;
    for p in &report.parameters {
        out.write_record([p.name.clone(), p.bias.to_string(), p.rmse.to_string()])?;
    }
    csv_string(out)
}

/// One summary row per condition.
pub fn recovery_csv(reports: &[RecoveryReport]) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record([
        "n_respondents",
        "n_items",
        "boundary",
        "prevalence",
        "replications",
        "used",
        "failures",
        "mae_mode",
        "mae_mean",
        "psi1_bias",
        "psi1_rmse",
        "psi2_bias",
        "psi2_rmse",
        "psi3_bias",
        "psi3_rmse",
    ])?;
    for r in reports {
        let c = &r.condition;
        let mut rec = vec![
            c.n_respondents.to_string(),
            c.n_items.to_string(),
            c.boundary.to_string(),
            c.prevalence.to_string(),
            c.replications.to_string(),
            r.replications_used.to_string(),
            r.failures.to_string(),
            r.mae_mode.to_string(),
            r.mae_mean.to_string(),
        ];
        for name in ["psi1", "psi2", "psi3"] {
            let p = r.parameter(name);
            rec.push(p.map_or(String::new(), |p| p.bias.to_string()));
            rec.push(p.map_or(String::new(), |p| p.rmse.to_string()));
        }
        out.write_record(&rec)?;
    }
    csv_string(out)
}

/// Change-point used to align a changer's responses: the most probable
/// `tau < J`, ties to the smaller location.
pub fn aligned_changepoint(probs: &[f64], first_tau: usize) -> Option<usize> {
    let changes = &probs[..probs.len().saturating_sub(1)];
    let mut best: Option<usize> = None;
    for (s, p) in changes.iter().enumerate() {
        if best.is_none_or(|b| *p > changes[b]) {
            best = Some(s);
        }
    }
    best.map(|s| first_tau + s)
}

fn check_plot_inputs(data: &RtMatrix, table: &PosteriorTable) -> Result<()> {
    if data.n_respondents() != table.len() {
        return Err(Error::data(format!(
            "data have {} respondents but the posterior table has {}",
            data.n_respondents(),
            table.len()
        )));
    }
    let j = table.last_tau();
    if data.n_items() != j {
        return Err(Error::data(format!(
            "data have {} items, the fit used {j}",
            data.n_items()
        )));
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct Mean {
    n: usize,
    log: f64,
    raw: f64,
}

impl Mean {
    fn add(&mut self, y: f64) {
        self.n += 1;
        self.log += y;
        self.raw += y.exp();
    }

    fn cells(&self) -> [String; 3] {
        if self.n == 0 {
            return [String::from("0"), String::new(), String::new()];
        }
        let n = self.n as f64;
        [
            self.n.to_string(),
            (self.log / n).to_string(),
            (self.raw / n).to_string(),
        ]
    }
}

/// Mean log and raw response time per item for unchanged and changed
/// respondents. Raw times are `exp` of the log values, averaged.
pub fn item_means_csv(data: &RtMatrix, table: &PosteriorTable) -> Result<String> {
    check_plot_inputs(data, table)?;
    let j = data.n_items();
    let mut groups = [vec![Mean::default(); j], vec![Mean::default(); j]];
    for (y, row) in data.rows().zip(&table.rows) {
        let g = usize::from(row.classification == crate::posterior::Classification::Changed);
        for (m, v) in groups[g].iter_mut().zip(y) {
            m.add(*v);
        }
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record([
        "item",
        "n_unchanged",
        "mean_log_rt_unchanged",
        "mean_rt_unchanged",
        "n_changed",
        "mean_log_rt_changed",
        "mean_rt_changed",
    ])?;
    for item in 0..j {
        let mut rec = vec![(item + 1).to_string()];
        rec.extend(groups[0][item].cells());
        rec.extend(groups[1][item].cells());
        out.write_record(&rec)?;
    }
    csv_string(out)
}

/// Mean log and raw response time of classified changers by item offset
/// from their change-point; offset 0 is the last baseline item.
pub fn offset_means_csv(data: &RtMatrix, table: &PosteriorTable) -> Result<String> {
    check_plot_inputs(data, table)?;
    let j = data.n_items() as isize;
    // Offsets run from 1 - J to J - 1.
    let mut by_offset = vec![Mean::default(); (2 * j - 1) as usize];
    for (y, row) in data.rows().zip(&table.rows) {
        if row.classification != crate::posterior::Classification::Changed {
            continue;
        }
        let Some(tau) = aligned_changepoint(&row.probs, table.first_tau) else {
            continue;
        };
        for (item, v) in y.iter().enumerate() {
            let offset = item as isize + 1 - tau as isize;
            by_offset[(offset + j - 1) as usize].add(*v);
        }
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["offset", "n", "mean_log_rt", "mean_rt"])?;
    for (k, m) in by_offset.iter().enumerate() {
        if m.n > 0 {
            let mut rec = vec![(k as isize - (j - 1)).to_string()];
            rec.extend(m.cells());
            out.write_record(&rec)?;
        }
    }
    csv_string(out)
}
