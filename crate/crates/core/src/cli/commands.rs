//! Command implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::args::*;
use super::report::Report;
use super::CliError;
use crate::data::{
    lattice_unit, load_frame, testable_window, ColumnSchema, CovariateColumn, CovariateKind, Direction, Exclusion,
    UnitFrame, WindowSpec,
};
use crate::inference::{invert_ci, test_effect, ConfidenceSet, EffectHypothesis, EffectInference, GridSpec};
use crate::models::{ModelFamily, ModelSpec, ResponseTransform};
use crate::permute::{PermutationPlan, Sidedness, StatKind, Statistic};
use crate::simlab::{run_experiment, ExperimentFile};
use crate::spectests::{
    balance_test, default_covariate_models, BalanceResult, BinGrid, CovariateModel, McCraryOptions, McCraryResult, Side,
};
use crate::windowing::{
    default_candidates, donut_exclusion, mccrary_in_window, select_bandwidth, surgical_exclusion, BandwidthSweep,
    ExclusionSearch, SweepOptions, WindowingError,
};

type CliResult<T> = Result<T, CliError>;

pub(super) fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => with_threads(a.output.threads, || analyze(&a)),
        Command::Balance(a) => with_threads(a.output.threads, || balance(&a)),
        Command::Mccrary(a) => with_threads(a.output.threads, || mccrary(&a)),
        Command::SelectWindow(a) => with_threads(a.output.threads, || select_window(&a)),
        Command::RobustnessTable(a) => with_threads(a.output.threads, || robustness_table(&a)),
        Command::Plotdata(a) => with_threads(a.output.threads, || plotdata(&a)),
        Command::Simulate(a) => with_threads(a.output.threads, || simulate(&a)),
    }
}

fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CliResult<()> + Send) -> CliResult<()> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::config("--threads must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::failure(format!("cannot start thread pool: {e}")))?
            .install(f),
    }
}

// ---- shared helpers ----

/// Shortest round-trip decimal; used by both summaries and CSV output.
pub(super) fn fmt_num(x: f64) -> String {
    x.to_string()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_num)
}

fn ci_cells(ci: &ConfidenceSet) -> (String, String) {
    match ci {
        ConfidenceSet::Interval { lower, upper } => (
            lower.map_or_else(|| "-inf".to_string(), fmt_num),
            upper.map_or_else(|| "inf".to_string(), fmt_num),
        ),
        ConfidenceSet::Empty => ("empty".to_string(), "empty".to_string()),
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "REJECTED"
    }
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::failure(format!("cannot serialize report: {e}")))
}

fn check_level(flag: &str, alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("{flag} must lie in (0, 1), got {alpha}")))
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

/// Writes the JSON report and the summary; the summary moves to standard
/// error when the report takes standard output.
fn emit(report: &Report, output: &OutputArgs, summary: &str) -> CliResult<()> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| CliError::failure(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    match &output.out {
        Some(path) => {
            write_file(path, &text)?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            print!("{text}");
        }
    }
    Ok(())
}

struct Loaded {
    frame: UnitFrame,
    models: Vec<CovariateModel>,
    warnings: Vec<String>,
}

fn load(d: &DataArgs, need_outcome: bool) -> CliResult<Loaded> {
    if !d.cutoff.is_finite() {
        return Err(CliError::config("--cutoff must be finite"));
    }
    if need_outcome && d.outcome.is_none() {
        return Err(CliError::config("--outcome is required for this command"));
    }
    let mut columns = Vec::new();
    let mut logit = Vec::new();
    for item in &d.covariates {
        let (name, suffix) = match item.split_once(':') {
            Some((n, s)) => (n.trim(), Some(s.trim())),
            None => (item.trim(), None),
        };
        if name.is_empty() {
            return Err(CliError::config(format!("empty covariate name in `{item}`")));
        }
        let kind = match suffix {
            None => None,
            Some("binary") => Some(CovariateKind::Binary),
            Some("logit") => {
                logit.push(name.to_string());
                Some(CovariateKind::Continuous)
            }
            Some(other) => {
                return Err(CliError::config(format!(
                    "unknown covariate suffix `:{other}`; expected :binary or :logit"
                )))
            }
        };
        columns.push(CovariateColumn {
            name: name.to_string(),
            kind,
        });
    }
    let schema = ColumnSchema {
        running: d.running.clone(),
        outcome: d.outcome.clone(),
        covariates: columns,
    };
    let direction = match d.treated {
        TreatedSide::Below => Direction::TreatedAtOrBelow,
        TreatedSide::Above => Direction::TreatedAbove,
    };
    let loaded = load_frame(&d.data, &schema, d.cutoff, direction, d.center)?;
    let mut models = default_covariate_models(&loaded.frame);
    for m in &mut models {
        if logit.contains(&m.name) {
            m.spec = ModelSpec::new(ModelFamily::Linear).with_transform(ResponseTransform::Logit);
        }
    }
    let mut warnings = Vec::new();
    if loaded.rows_dropped > 0 {
        warnings.push(format!(
            "dropped {} rows with missing covariate values",
            loaded.rows_dropped
        ));
    }
    Ok(Loaded {
        frame: loaded.frame,
        models,
        warnings,
    })
}

/// Window from the flags; exclusions match within a relative tolerance of
/// `1e-9` so that values typed on the command line hit centered data.
fn window_spec(w: &WindowArgs, frame: &UnitFrame) -> CliResult<WindowSpec> {
    let scale = frame.r().iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut spec = WindowSpec::new(
        w.window_left.unwrap_or(f64::INFINITY),
        w.window_right.unwrap_or(f64::INFINITY),
    )
    .with_exclusions(w.exclude.iter().map(|&value| Exclusion::Value { value }));
    spec.tolerance = 1e-9 * scale;
    spec.validate()?;
    Ok(spec)
}

/// Clips unbounded sides of `w` to the range of the data.
fn bounded(w: &WindowSpec, frame: &UnitFrame) -> WindowSpec {
    let c = frame.cutoff();
    let (lo, hi) = frame
        .r()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut out = w.clone();
    out.left = out.left.min((c - lo).max(0.0));
    out.right = out.right.min((hi - c).max(0.0));
    out
}

fn statistic(m: &ModelArgs) -> Statistic {
    let kind = match m.stat {
        StatArg::DiffMeans => StatKind::DiffMeans,
        StatArg::AbsDiffMeans => StatKind::AbsDiffMeans,
        StatArg::SumCross => StatKind::SumCross,
        StatArg::RankStudentized => StatKind::RankSumStudentized,
    };
    let sidedness = if m.upper_tail {
        Sidedness::UpperTail
    } else {
        Sidedness::TwoSided
    };
    Statistic::new(kind, sidedness)
}

fn model_spec(m: &ModelArgs) -> ModelSpec {
    ModelSpec::new(match m.model {
        ModelArg::Constant => ModelFamily::Constant,
        ModelArg::Linear => ModelFamily::Linear,
        ModelArg::Quadratic => ModelFamily::Quadratic,
    })
}

fn plan(p: &PlanArgs, stat: Statistic) -> CliResult<PermutationPlan> {
    let seed = p
        .seed
        .ok_or_else(|| CliError::config("--seed is required for this command"))?;
    if p.permutations == 0 {
        return Err(CliError::config("--permutations must be positive"));
    }
    Ok(PermutationPlan::new(seed)
        .with_draws(p.permutations)
        .with_max_exact(p.max_exact)
        .with_statistic(stat))
}

fn grid(g: &GridArgs) -> CliResult<Option<GridSpec>> {
    match (g.grid_lo, g.grid_hi, g.grid_step) {
        (None, None, None) => Ok(None),
        (Some(lo), Some(hi), Some(step)) => {
            let spec = GridSpec { lo, hi, step };
            spec.validate()?;
            Ok(Some(spec))
        }
        _ => Err(CliError::config(
            "--grid-lo, --grid-hi and --grid-step must be given together",
        )),
    }
}

fn density_options(d: &DensityArgs) -> CliResult<McCraryOptions> {
    for (flag, v) in [("--bin-width", d.bin_width), ("--bandwidth", d.bandwidth)] {
        if let Some(x) = v {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CliError::config(format!("{flag} must be positive, got {x}")));
            }
        }
    }
    Ok(McCraryOptions {
        bin_width: d.bin_width,
        bandwidth: d.bandwidth,
        ..McCraryOptions::default()
    })
}

fn candidates(given: &[f64], frame: &UnitFrame, base: &WindowSpec) -> CliResult<Vec<f64>> {
    let cands = if given.is_empty() {
        let b = base.left.min(base.right);
        default_candidates(frame, b.is_finite().then_some(b))
    } else {
        given.to_vec()
    };
    if cands.is_empty() {
        return Err(CliError::config("no candidate bandwidths"));
    }
    if cands.iter().any(|b| !(b.is_finite() && *b > 0.0)) || cands.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(CliError::config(
            "--candidates must be positive and strictly decreasing",
        ));
    }
    Ok(cands)
}

fn balance_lines(out: &mut String, b: &BalanceResult, alpha_f: f64) {
    let _ = writeln!(
        out,
        "  covariate balance (n_T = {}, n_C = {}):",
        b.n_treated, b.n_control
    );
    for c in &b.per_covariate {
        if c.dropped {
            let _ = writeln!(out, "    {:<20} dropped (no variation)", c.name);
        } else {
            let _ = writeln!(
                out,
                "    {:<20} std_diff = {}  p = {}",
                c.name,
                fmt_num(c.std_diff),
                fmt_num(c.p_value)
            );
        }
    }
    let _ = writeln!(
        out,
        "    combined: stat = {}  df = {}  p_chi2 = {}  p_perm = {}  alpha_F = {}  {}",
        fmt_num(b.combined_stat),
        b.df,
        fmt_num(b.p_combined_chi2),
        fmt_opt(b.p_combined_mc),
        fmt_num(alpha_f),
        verdict(b.p_combined_chi2 > alpha_f)
    );
}

fn mccrary_line(out: &mut String, m: &McCraryResult, alpha_g: f64) {
    let _ = writeln!(
        out,
        "  density test: theta = {}  se = {}  p = {}  bin width = {}  bandwidth = {}  alpha_G = {}  {}",
        fmt_opt(m.theta),
        fmt_opt(m.se),
        fmt_opt(m.p_value),
        fmt_num(m.bin_width),
        fmt_num(m.bandwidth),
        fmt_num(alpha_g),
        verdict(m.passes(alpha_g))
    );
}

const EFFECT_HEADER: &str = "p_null,ci_lower,ci_upper,hl,n";

fn effect_cells(e: &EffectInference) -> Vec<String> {
    let (lo, hi) = ci_cells(&e.ci);
    vec![
        fmt_num(e.p_null),
        lo,
        hi,
        fmt_num(e.hl.estimate),
        e.diagnostics.n.to_string(),
    ]
}

// ---- analyze ----

fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    check_level("--alpha", a.alpha)?;
    check_level("--alpha-f", a.alpha_f)?;
    check_level("--alpha-g", a.alpha_g)?;
    let stat = statistic(&a.model);
    let plan = plan(&a.plan, stat)?;
    let model = model_spec(&a.model);
    let grid = grid(&a.grid)?;
    let density = density_options(&a.density)?;
    let Loaded {
        frame,
        models,
        mut warnings,
    } = load(&a.data, true)?;
    let window = window_spec(&a.window, &frame)?;
    let realized = testable_window(&frame, &window)?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "window: n = {}  n_T = {}  n_C = {}",
        realized.n, realized.n_treated, realized.n_control
    );
    let _ = writeln!(
        summary,
        "specification tests (error budget alpha_F + alpha_G = {}):",
        fmt_num(a.alpha_f + a.alpha_g)
    );
    let balance = if models.is_empty() {
        let _ = writeln!(summary, "  covariate balance: no covariates given");
        None
    } else {
        match balance_test(&frame, &window, &models, Some(&plan)) {
            Ok(b) => {
                balance_lines(&mut summary, &b, a.alpha_f);
                if b.p_combined_chi2 <= a.alpha_f {
                    warnings.push(format!(
                        "covariate balance rejected in this window (p = {} <= alpha_F = {})",
                        fmt_num(b.p_combined_chi2),
                        fmt_num(a.alpha_f)
                    ));
                }
                warnings.extend(b.warnings.iter().cloned());
                Some(b)
            }
            Err(e) => {
                let _ = writeln!(summary, "  covariate balance: not computed ({e})");
                warnings.push(format!("balance test failed: {e}"));
                None
            }
        }
    };
    let mccrary = match mccrary_in_window(&frame, &window, &density) {
        Ok(m) => {
            mccrary_line(&mut summary, &m, a.alpha_g);
            if !m.passes(a.alpha_g) {
                warnings.push(format!(
                    "density test rejected continuity at the cutoff (p = {} <= alpha_G = {})",
                    fmt_opt(m.p_value),
                    fmt_num(a.alpha_g)
                ));
            }
            warnings.extend(m.diagnostics.iter().cloned());
            Some(m)
        }
        Err(e) => {
            let _ = writeln!(summary, "  density test: not computed ({e})");
            warnings.push(format!("density test failed: {e}"));
            None
        }
    };
    if warnings.iter().any(|w| w.contains("rejected")) {
        let _ = writeln!(
            summary,
            "WARNING: a specification test rejected; interpret the effect with care"
        );
    }

    let effect = invert_ci(&frame, &window, model, &plan, a.alpha, grid)?;
    warnings.extend(effect.warnings.iter().cloned());
    let tau0_test = match a.tau0 {
        Some(t) => Some(test_effect(&frame, &window, model, EffectHypothesis::new(t), &plan)?),
        None => None,
    };
    let _ = writeln!(
        summary,
        "effect ({:?} model, {:?} statistic, {}% confidence):",
        model.family,
        stat.kind,
        fmt_num(100.0 * (1.0 - a.alpha))
    );
    let _ = writeln!(summary, "  {EFFECT_HEADER}");
    let _ = writeln!(summary, "  {}", effect_cells(&effect).join(","));
    if let (Some(t), Some(res)) = (a.tau0, &tau0_test) {
        let _ = writeln!(summary, "  test of tau = {}: p = {}", fmt_num(t), fmt_num(res.p_value));
    }
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }

    let result = json!({
        "window": window,
        "n": realized.n,
        "n_treated": realized.n_treated,
        "n_control": realized.n_control,
        "error_budget": a.alpha_f + a.alpha_g,
        "balance": balance,
        "mccrary": mccrary,
        "effect": effect,
        "tau0_test": tau0_test.map(|r| json!({ "tau0": a.tau0, "result": r })),
    });
    let report = Report::new("analyze", to_value(a)?, result, warnings);
    emit(&report, &a.output, &summary)
}

// ---- balance ----

fn balance(a: &BalanceArgs) -> CliResult<()> {
    check_level("--alpha-f", a.alpha_f)?;
    let plan = plan(&a.plan, Statistic::diff_means())?;
    let Loaded {
        frame,
        models,
        mut warnings,
    } = load(&a.data, false)?;
    if models.is_empty() {
        return Err(CliError::config("--covariates is required for the balance test"));
    }
    let window = window_spec(&a.window, &frame)?;
    testable_window(&frame, &window)?;
    let b = balance_test(&frame, &window, &models, Some(&plan))?;
    warnings.extend(b.warnings.iter().cloned());
    let mut summary = String::new();
    balance_lines(&mut summary, &b, a.alpha_f);
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let result = json!({
        "window": window,
        "alpha_f": a.alpha_f,
        "passes": b.p_combined_chi2 > a.alpha_f,
        "balance": b,
    });
    let report = Report::new("balance", to_value(a)?, result, warnings);
    emit(&report, &a.output, &summary)
}

// ---- mccrary ----

fn mccrary(a: &McCraryArgs) -> CliResult<()> {
    check_level("--alpha-g", a.alpha_g)?;
    let density = density_options(&a.density)?;
    let Loaded {
        frame, mut warnings, ..
    } = load(&a.data, false)?;
    let window = window_spec(&a.window, &frame)?;
    let m = mccrary_in_window(&frame, &window, &density)?;
    warnings.extend(m.diagnostics.iter().cloned());
    if let Some(path) = &a.output.plot_out {
        write_file(path, &m.bin_table_csv())?;
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "n = {}  discrete = {}", m.n, m.discrete);
    mccrary_line(&mut summary, &m, a.alpha_g);
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let result = json!({
        "window": window,
        "alpha_g": a.alpha_g,
        "passes": m.passes(a.alpha_g),
        "mccrary": m,
    });
    let report = Report::new("mccrary", to_value(a)?, result, warnings);
    emit(&report, &a.output, &summary)
}

// ---- select-window ----

#[derive(Debug, Serialize)]
struct SelectResult {
    verdict: &'static str,
    message: String,
    base_window: WindowSpec,
    exclusion_search: Option<ExclusionSearch>,
    exclusion_steps: Vec<crate::windowing::ExclusionStep>,
    sweep: Option<BandwidthSweep>,
    window: Option<WindowSpec>,
}

fn read_hypotheses(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read hypotheses file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!(
            "hypotheses file {} must hold a JSON list of lists of numbers: {e}",
            path.display()
        ))
    })
}

fn select_window(a: &SelectArgs) -> CliResult<()> {
    check_level("--alpha-f", a.sweep.alpha_f)?;
    check_level("--alpha-g", a.sweep.alpha_g)?;
    let density = density_options(&a.density)?;
    let hypotheses = match (a.strategy, &a.hypotheses) {
        (Some(StrategyArg::Surgical), Some(p)) => Some(read_hypotheses(p)?),
        (Some(StrategyArg::Surgical), None) => {
            return Err(CliError::config("--strategy surgical needs --hypotheses"));
        }
        (_, Some(_)) => return Err(CliError::config("--hypotheses applies only to --strategy surgical")),
        _ => None,
    };
    let Loaded {
        frame,
        models,
        mut warnings,
    } = load(&a.data, false)?;
    let base = window_spec(&a.window, &frame)?;
    let alpha_g = a.sweep.alpha_g;

    let mut summary = String::new();
    let mut exhausted_steps = Vec::new();
    let search = match a.strategy {
        None => None,
        Some(strategy) => {
            let outcome = match strategy {
                StrategyArg::Donut => {
                    let clipped = bounded(&base, &frame);
                    let step = match a.donut_step {
                        Some(s) => s,
                        None => lattice_unit(frame.r()).unwrap_or((clipped.left.min(clipped.right)) / 100.0),
                    };
                    donut_exclusion(&frame, &clipped, alpha_g, step, &density, None)
                }
                StrategyArg::Surgical => surgical_exclusion(
                    &frame,
                    &base,
                    hypotheses.as_deref().unwrap_or_default(),
                    alpha_g,
                    &density,
                ),
            };
            match outcome {
                Ok(s) => Some(s),
                Err(WindowingError::ExhaustedWithoutPass { steps }) => {
                    exhausted_steps = steps;
                    None
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let steps = search.as_ref().map_or(&exhausted_steps, |s| &s.steps);
    if !steps.is_empty() {
        let _ = writeln!(summary, "exclusion search (alpha_G = {}):", fmt_num(alpha_g));
        let _ = writeln!(summary, "  step,density_p,n");
        for s in steps {
            let _ = writeln!(summary, "  {},{},{}", s.label, fmt_opt(s.p_value), s.n);
        }
    }

    let exhausted = a.strategy.is_some() && search.is_none();
    let chosen_base = search.as_ref().map_or_else(|| base.clone(), |s| s.window.clone());
    let mut sweep = None;
    let (verdict, message, window) = if exhausted {
        (
            "exhausted_without_pass",
            "no valid window: every exclusion step failed the density test".to_string(),
            None,
        )
    } else if models.is_empty() {
        warnings.push("no covariates given; bandwidth sweep skipped".into());
        let msg = format!("window chosen by the density test alone: {}", describe(&chosen_base));
        ("selected", msg, Some(chosen_base.clone()))
    } else {
        let cands = candidates(&a.sweep.candidates, &frame, &chosen_base)?;
        let options = SweepOptions {
            alpha_f: a.sweep.alpha_f,
            alpha_g,
            exhaustive: a.sweep.exhaustive,
            use_permutation_p: false,
            exclusions: chosen_base.exclusions.clone(),
            mccrary: Some(density.clone()),
        };
        let s = select_bandwidth(&frame, &cands, &models, None, &options)?;
        let out = match s.b_star {
            Some(b) => {
                let mut w = WindowSpec::symmetric(b).with_exclusions(chosen_base.exclusions.iter().copied());
                w.tolerance = chosen_base.tolerance;
                let w = w.with_label(format!("b* = {}", fmt_num(b)));
                let msg = format!("selected {}", describe(&w));
                ("selected", msg, Some(w))
            }
            None => (
                "all_rejected",
                "no valid window: covariate balance rejected at every candidate".to_string(),
                None,
            ),
        };
        if let Some(path) = &a.output.plot_out {
            write_file(path, &s.to_csv())?;
        }
        let _ = writeln!(summary, "bandwidth sweep (alpha_F = {}):", fmt_num(s.alpha_f));
        for line in s.to_csv().lines() {
            let _ = writeln!(summary, "  {line}");
        }
        sweep = Some(s);
        out
    };
    let _ = writeln!(summary, "verdict: {verdict}: {message}");
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let result = SelectResult {
        verdict,
        message,
        base_window: base,
        exclusion_steps: steps.clone(),
        exclusion_search: search,
        sweep,
        window,
    };
    let report = Report::new("select-window", to_value(a)?, to_value(&result)?, warnings);
    emit(&report, &a.output, &summary)
}

fn describe(w: &WindowSpec) -> String {
    let ex: Vec<String> = w.exclusions.iter().map(|e| e.to_string()).collect();
    format!(
        "[c - {}, c + {}] excluding {{{}}}",
        fmt_num(w.left),
        fmt_num(w.right),
        ex.join(", ")
    )
}

// ---- robustness-table ----

#[derive(Debug, Serialize)]
struct RobustnessRow {
    bandwidth: f64,
    n: usize,
    n_treated: usize,
    n_control: usize,
    balance_p: Option<f64>,
    mccrary_p: Option<f64>,
    effect: Option<EffectInference>,
    note: Option<String>,
}

const ROBUSTNESS_HEADER: &str = "b,balance_p,mccrary_p,p_null,ci_lower,ci_upper,hl,n,n_T,n_C,note";

impl RobustnessRow {
    fn cells(&self) -> Vec<String> {
        let mut out = vec![
            fmt_num(self.bandwidth),
            fmt_opt(self.balance_p),
            fmt_opt(self.mccrary_p),
        ];
        match &self.effect {
            Some(e) => out.extend(effect_cells(e).into_iter().take(4)),
            None => out.extend(std::iter::repeat_n("NA".to_string(), 4)),
        }
        out.push(self.n.to_string());
        out.push(self.n_treated.to_string());
        out.push(self.n_control.to_string());
        out.push(csv_text(self.note.as_deref().unwrap_or("")));
        out
    }
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn robustness_table(a: &RobustnessArgs) -> CliResult<()> {
    check_level("--alpha", a.alpha)?;
    check_level("--alpha-f", a.sweep.alpha_f)?;
    check_level("--alpha-g", a.sweep.alpha_g)?;
    let stat = statistic(&a.model);
    let plan = plan(&a.plan, stat)?;
    let model = model_spec(&a.model);
    let density = density_options(&a.density)?;
    let Loaded {
        frame,
        models,
        mut warnings,
    } = load(&a.data, true)?;
    let base = window_spec(&a.window, &frame)?;
    let cands = candidates(&a.sweep.candidates, &frame, &base)?;
    let sweep = if models.is_empty() {
        warnings.push("no covariates given; balance column is NA".into());
        None
    } else {
        let options = SweepOptions {
            alpha_f: a.sweep.alpha_f,
            alpha_g: a.sweep.alpha_g,
            exhaustive: true,
            use_permutation_p: false,
            exclusions: base.exclusions.clone(),
            mccrary: None,
        };
        Some(select_bandwidth(&frame, &cands, &models, None, &options)?)
    };
    let balance_by_b: BTreeMap<usize, Option<f64>> = sweep
        .as_ref()
        .map(|s| s.results.iter().enumerate().map(|(i, r)| (i, r.balance_p)).collect())
        .unwrap_or_default();
    let rows: Vec<RobustnessRow> = cands
        .par_iter()
        .enumerate()
        .map(|(i, &b)| {
            let mut window = WindowSpec::symmetric(b).with_exclusions(base.exclusions.iter().copied());
            window.tolerance = base.tolerance;
            let members = window.members(&frame);
            let n_treated = members.iter().filter(|&&j| frame.z()[j]).count();
            let mccrary_p = mccrary_in_window(&frame, &window, &density)
                .ok()
                .and_then(|m| m.p_value);
            let (effect, note) = match invert_ci(&frame, &window, model, &plan, a.alpha, None) {
                Ok(e) => {
                    let note = (!e.warnings.is_empty()).then(|| e.warnings.join("; "));
                    (Some(e), note)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            RobustnessRow {
                bandwidth: b,
                n: members.len(),
                n_treated,
                n_control: members.len() - n_treated,
                balance_p: balance_by_b.get(&i).copied().flatten(),
                mccrary_p,
                effect,
                note,
            }
        })
        .collect();
    let mut csv = String::from(ROBUSTNESS_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.cells().join(","));
        csv.push('\n');
    }
    if let Some(path) = &a.output.plot_out {
        write_file(path, &csv)?;
    }
    let mut summary = String::new();
    if let Some(s) = &sweep {
        let _ = writeln!(
            summary,
            "b* = {} (alpha_F = {}; error budget alpha_F + alpha_G = {})",
            fmt_opt(s.b_star),
            fmt_num(s.alpha_f),
            fmt_num(s.error_budget)
        );
    }
    summary.push_str(&csv);
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    let result = json!({
        "alpha": a.alpha,
        "b_star": sweep.as_ref().and_then(|s| s.b_star),
        "sweep": sweep,
        "rows": rows,
    });
    let report = Report::new("robustness-table", to_value(a)?, result, warnings);
    emit(&report, &a.output, &summary)
}

// ---- plotdata ----

#[derive(Default)]
struct BinAcc {
    count: usize,
    y_sum: f64,
    cov_sums: Vec<f64>,
}

fn plotdata(a: &PlotArgs) -> CliResult<()> {
    let dir = a
        .output
        .plot_out
        .as_ref()
        .ok_or_else(|| CliError::config("plotdata needs --plot-out DIR"))?;
    if let Some(x) = a.bin_width {
        if !(x > 0.0 && x.is_finite()) {
            return Err(CliError::config(format!("--bin-width must be positive, got {x}")));
        }
    }
    let Loaded { frame, warnings, .. } = load(&a.data, false)?;
    let window = window_spec(&a.window, &frame)?;
    let members = window.members(&frame);
    if members.is_empty() {
        return Err(CliError::degenerate("no units in the window"));
    }
    let c = frame.cutoff();
    let r: Vec<f64> = members.iter().map(|&i| frame.r()[i]).collect();
    let grid = BinGrid::new(&r, c, a.bin_width);
    let y = frame.y().ok();
    let covs = frame.covariates();

    let mut bins: BTreeMap<(i64, usize), BinAcc> = BTreeMap::new();
    for &i in &members {
        let (side, k) = grid.locate(frame.r()[i]);
        let acc = bins.entry(bin_key(side, k)).or_insert_with(|| BinAcc {
            cov_sums: vec![0.0; covs.len()],
            ..BinAcc::default()
        });
        acc.count += 1;
        if let Some(y) = y {
            acc.y_sum += y[i];
        }
        for (s, cov) in acc.cov_sums.iter_mut().zip(covs) {
            *s += cov.values[i];
        }
    }
    let (first, last) = (*bins.keys().next().unwrap(), *bins.keys().next_back().unwrap());

    let mut freq = String::from("side,lo,hi,midpoint,count\n");
    for pos in first.0..=last.0 {
        let (side, k) = key_bin(pos);
        let (lo, hi) = grid.interval(side, k);
        let count = bins.get(&(pos, 0)).map_or(0, |b| b.count);
        let _ = writeln!(
            freq,
            "{},{},{},{},{}",
            side_name(side),
            fmt_num(lo),
            fmt_num(hi),
            fmt_num(grid.midpoint(side, k)),
            count
        );
    }
    let mut files = vec!["frequency.csv".to_string()];
    fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("frequency.csv"), &freq)?;

    if y.is_some() {
        let mut out = String::from("side,lo,hi,midpoint,count,mean\n");
        for (&(pos, _), b) in &bins {
            let (side, k) = key_bin(pos);
            let (lo, hi) = grid.interval(side, k);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                side_name(side),
                fmt_num(lo),
                fmt_num(hi),
                fmt_num(grid.midpoint(side, k)),
                b.count,
                fmt_num(b.y_sum / b.count as f64)
            );
        }
        write_file(&dir.join("outcome_bins.csv"), &out)?;
        files.push("outcome_bins.csv".into());
    }
    if !covs.is_empty() {
        let mut out = String::from("covariate,side,lo,hi,midpoint,count,mean\n");
        for (j, cov) in covs.iter().enumerate() {
            for (&(pos, _), b) in &bins {
                let (side, k) = key_bin(pos);
                let (lo, hi) = grid.interval(side, k);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_text(&cov.name),
                    side_name(side),
                    fmt_num(lo),
                    fmt_num(hi),
                    fmt_num(grid.midpoint(side, k)),
                    b.count,
                    fmt_num(b.cov_sums[j] / b.count as f64)
                );
            }
        }
        write_file(&dir.join("covariate_bins.csv"), &out)?;
        files.push("covariate_bins.csv".into());
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "n = {}  bins = {}  bin width = {}  boundary = {}",
        members.len(),
        last.0 - first.0 + 1,
        fmt_num(grid.width),
        fmt_num(grid.boundary)
    );
    let _ = writeln!(summary, "wrote {} to {}", files.join(", "), dir.display());
    let result = json!({
        "window": window,
        "n": members.len(),
        "bin_grid": grid,
        "bins": last.0 - first.0 + 1,
        "files": files,
    });
    let report = Report::new("plotdata", to_value(a)?, result, warnings);
    emit(&report, &a.output, &summary)
}

/// Orders bins left to right: below-side bin `k` maps to `-(k+1)`, above-side
/// bin `k` to `k`.
fn bin_key(side: Side, k: usize) -> (i64, usize) {
    match side {
        Side::Below => (-(k as i64) - 1, 0),
        Side::Above => (k as i64, 0),
    }
}

fn key_bin(pos: i64) -> (Side, usize) {
    if pos < 0 {
        (Side::Below, (-pos - 1) as usize)
    } else {
        (Side::Above, pos as usize)
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Below => "below",
        Side::Above => "above",
    }
}

// ---- simulate ----

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", a.config.display())))?;
    let file: ExperimentFile = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("malformed experiment configuration: {e}")))?;
    let experiments = file.clone().into_list();
    if experiments.is_empty() {
        return Err(CliError::config("the configuration lists no experiments"));
    }
    let mut reports = Vec::with_capacity(experiments.len());
    let mut summary = String::new();
    for e in &experiments {
        let r = run_experiment(e)?;
        let _ = writeln!(summary, "{}", r.summary_line());
        reports.push(r);
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    let _ = writeln!(summary, "{passed} of {} checks passed", reports.len());
    let config = json!({ "config": a.config, "experiments": file });
    let result = json!({ "reports": reports, "passed": passed, "total": reports.len() });
    let report = Report::new("simulate", config, result, Vec::new());
    emit(&report, &a.output, &summary)
}
