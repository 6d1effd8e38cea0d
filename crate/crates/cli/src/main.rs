mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sirvs_core::consistency::{analyze, sweep, ConsistencyReport, HMax, WindowRule};
use sirvs_core::dynamics::{integrate_continuous, simulate_discrete, Method, Trajectory};
use sirvs_core::error::{Error, Result};
use sirvs_core::scenarios::{
    load_config, load_observed, measles_spec, run_scenario, Builtin, RunOptions, ScenarioReport, ScenarioSpec,
};
use sirvs_core::schedules::mickens_discretize;
use sirvs_core::thresholds::{
    continuous_thresholds, discrete_thresholds, recommended_burn_in, ContinuousWindow, DiscreteWindow, ThresholdReport,
    Verdict,
};

use output::{num, opt_num, Bundle};

const REFERENCE_STEP: f64 = 0.01;

#[derive(Parser, Debug)]
#[command(
    name = "sirvs",
    version,
    about = "Seasonal SIRVS model: NSFD simulation, thresholds and consistency bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one method at one step size and write the trajectory.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Step size (defaults to the scenario's first step).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_enum, default_value_t = MethodArg::Nsfd)]
        method: MethodArg,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value = "sirvs-out")]
        out: PathBuf,
    },
    /// Discrete and continuous extinction/permanence thresholds.
    Thresholds {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Step sizes, comma-separated or repeated.
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        /// Window length in model time.
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, default_value = "sirvs-out")]
        out: PathBuf,
    },
    /// Step-size bounds that guarantee discrete/continuous agreement.
    Consistency {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        lambda: Option<f64>,
        /// Check 16 log-spaced steps below the bound.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, default_value = "sirvs-out")]
        out: PathBuf,
    },
    /// NSFD and forward Euler against an RK4 reference.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value = "sirvs-out")]
        out: PathBuf,
    },
    /// Built-in scenarios and full scenario runs.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand, Debug)]
enum ScenarioCommand {
    /// List built-in scenarios.
    List,
    /// Run every analysis and write the output bundle.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Observed case counts (`t,cases`) to compare against.
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value = "sirvs-out")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct ScenarioArg {
    /// Built-in scenario name or path to a JSON configuration.
    scenario: String,
    /// Keep negative transmission values of the measles scenario.
    #[arg(long)]
    unclamped: bool,
}

#[derive(Args, Debug, Clone, Copy)]
struct WindowArgs {
    /// Discrete burn-in in steps.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Discrete scan length in steps.
    #[arg(long)]
    scan: Option<usize>,
    /// `span`: λ_D + 1 steps cover time λ; `floor`: λ_D = ⌊λ/h⌋.
    #[arg(long, value_enum, default_value_t = WindowRuleArg::Span)]
    window_rule: WindowRuleArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum WindowRuleArg {
    Span,
    Floor,
}

impl From<WindowRuleArg> for WindowRule {
    fn from(w: WindowRuleArg) -> Self {
        match w {
            WindowRuleArg::Span => WindowRule::Span,
            WindowRuleArg::Floor => WindowRule::Floor,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MethodArg {
    Nsfd,
    Euler,
    Rk4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Nsfd => Method::Nsfd,
            MethodArg::Euler => Method::Euler,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

/// Where a spec came from, echoed into manifests.
struct Loaded {
    spec: ScenarioSpec,
    source: Value,
}

impl ScenarioArg {
    fn load(&self) -> Result<Loaded> {
        let is_file = self.scenario.ends_with(".json") || Path::new(&self.scenario).is_file();
        if is_file {
            if self.unclamped {
                return Err(Error::Config {
                    field: "unclamped".into(),
                    message: "only applies to the built-in measles scenario".into(),
                });
            }
            let spec = load_config(Path::new(&self.scenario))?;
            return Ok(Loaded {
                spec,
                source: json!({ "config_path": self.scenario }),
            });
        }
        let which = Builtin::from_name(&self.scenario)?;
        let spec = match (which, self.unclamped) {
            (Builtin::MeaslesFrance, true) => measles_spec(false)?,
            (_, true) => {
                return Err(Error::Config {
                    field: "unclamped".into(),
                    message: "only applies to the built-in measles scenario".into(),
                })
            }
            (b, false) => b.spec()?,
        };
        Ok(Loaded {
            spec,
            source: json!({ "builtin": self.scenario, "unclamped": self.unclamped }),
        })
    }
}

fn warn_diagnostics(spec: &ScenarioSpec) -> Result<Vec<String>> {
    let diags = spec.diagnostics()?;
    for d in &diags {
        eprintln!("warning: {d}");
    }
    Ok(diags)
}

fn steps_for(h: f64, t_end: f64) -> usize {
    ((t_end / h).round() as usize).max(1)
}

fn simulate(spec: &ScenarioSpec, h: f64, method: Method, t_end: f64) -> Result<Trajectory> {
    let (phi, psi) = (&spec.incidence_phi, &spec.incidence_psi);
    match method {
        Method::Nsfd => {
            let dp = mickens_discretize(&spec.schedules, h, &spec.denominator)?;
            simulate_discrete(&dp, phi, psi, spec.initial_state, steps_for(h, t_end))
        }
        m => integrate_continuous(&spec.schedules, phi, psi, spec.initial_state, t_end, h, m),
    }
}

fn cmd_simulate(scenario: &ScenarioArg, h: Option<f64>, method: Method, t_end: Option<f64>, out: &Path) -> Result<()> {
    let Loaded { spec, .. } = scenario.load()?;
    warn_diagnostics(&spec)?;
    let h = h.unwrap_or(spec.h_values[0]);
    let t_end = t_end.unwrap_or(spec.t_end);
    let tr = simulate(&spec, h, method, t_end)?;
    let mut bundle = Bundle::create(out)?;
    let path = bundle.trajectory(&tr, h)?;
    if let Some(k) = tr.first_negative {
        eprintln!("warning: {} produced a negative component at step {k}", method.name());
    }
    println!("{} steps, final I = {}", tr.states.len() - 1, num(tr.last().i));
    println!("wrote {}", path.display());
    Ok(())
}

fn discrete_report(spec: &ScenarioSpec, h: f64, lambda: f64, window: WindowArgs) -> Result<ThresholdReport> {
    let dp = mickens_discretize(&spec.schedules, h, &spec.denominator)?;
    let lambda_steps = WindowRule::from(window.window_rule).steps(lambda, h);
    let period_steps = dp.step_period().unwrap_or(0);
    let w = DiscreteWindow {
        burn_in: window.burn_in.unwrap_or_else(|| recommended_burn_in(&dp)),
        scan: window.scan.unwrap_or_else(|| {
            DiscreteWindow::default()
                .scan
                .max(2 * (lambda_steps + 1) + period_steps)
        }),
        ..DiscreteWindow::default()
    };
    discrete_thresholds(&dp, &spec.incidence_phi, &spec.incidence_psi, lambda_steps, &w)
}

fn threshold_row(kind: &str, h: Option<f64>, r: &ThresholdReport) -> Vec<String> {
    let lambda = match r.mode {
        sirvs_core::thresholds::Mode::Discrete => format!("{}", r.lambda as usize),
        sirvs_core::thresholds::Mode::Continuous => num(r.lambda),
    };
    vec![
        kind.into(),
        opt_num(h),
        lambda,
        num(r.r_lower),
        num(r.r_upper),
        r.verdict.name().into(),
        r.exact_periodic.to_string(),
    ]
}

const THRESHOLD_HEADER: [&str; 7] = ["kind", "h", "lambda", "r_lower", "r_upper", "verdict", "exact_periodic"];

fn cmd_thresholds(
    scenario: &ScenarioArg,
    hs: &[f64],
    lambda: Option<f64>,
    window: WindowArgs,
    out: &Path,
) -> Result<()> {
    let Loaded { spec, .. } = scenario.load()?;
    warn_diagnostics(&spec)?;
    let hs = if hs.is_empty() {
        spec.h_values.clone()
    } else {
        hs.to_vec()
    };
    let lambda = lambda.unwrap_or(spec.lambda);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config {
            field: "lambda".into(),
            message: format!("window must be nonnegative, got {lambda}"),
        });
    }
    let mut rows = Vec::new();
    for &h in &hs {
        let r = discrete_report(&spec, h, lambda, window)?;
        println!(
            "discrete   h = {h}, window {}: [{}, {}] {}",
            r.lambda,
            num(r.r_lower),
            num(r.r_upper),
            r.verdict.name()
        );
        rows.push(threshold_row("discrete", Some(h), &r));
    }
    if lambda > 0.0 {
        let c = continuous_thresholds(
            &spec.schedules,
            &spec.incidence_phi,
            &spec.incidence_psi,
            lambda,
            &ContinuousWindow::default(),
        )?;
        println!(
            "continuous window {lambda}: [{}, {}] {}",
            num(c.r_lower),
            num(c.r_upper),
            c.verdict.name()
        );
        rows.push(threshold_row("continuous", None, &c));
    } else {
        eprintln!("warning: the continuous threshold needs a positive window; continuous row left empty");
        rows.push(vec![
            "continuous".into(),
            String::new(),
            num(lambda),
            String::new(),
            String::new(),
            "NotApplicable".into(),
            "false".into(),
        ]);
    }
    let mut bundle = Bundle::create(out)?;
    let path = bundle.csv("thresholds.csv", &THRESHOLD_HEADER, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn hmax_text(h: HMax) -> String {
    match h {
        HMax::Bounded(v) => num(v),
        HMax::Unbounded => "unbounded".into(),
        HMax::NotApplicable => "not applicable".into(),
    }
}

fn print_consistency(report: &ConsistencyReport) {
    println!(
        "R_C lower = {}, R_C upper = {} ({})",
        num(report.r_c_lower),
        num(report.r_c_upper),
        report.continuous_verdict.name()
    );
    println!(
        "sup|f'| = {} at t = {}",
        num(report.sup_abs_fprime),
        num(report.sup_argmax)
    );
    println!("h_max (extinction side)  = {}", hmax_text(report.h_max_upper));
    println!("h_max (permanence side)  = {}", hmax_text(report.h_max_lower));
    for r in &report.references {
        println!("reference: {} = {}", r.label, r.value);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn verdict_json(h: f64, r: &ThresholdReport) -> Value {
    json!({
        "h": h,
        "lambda_steps": r.lambda as usize,
        "r_lower": r.r_lower,
        "r_upper": r.r_upper,
        "verdict": r.verdict,
    })
}

fn cmd_consistency(
    scenario: &ScenarioArg,
    lambda: Option<f64>,
    with_sweep: bool,
    window: WindowArgs,
    out: &Path,
) -> Result<()> {
    let Loaded { spec, .. } = scenario.load()?;
    warn_diagnostics(&spec)?;
    let lambda = lambda.unwrap_or(spec.lambda);
    let (phi, psi) = (&spec.incidence_phi, &spec.incidence_psi);
    let mut report = analyze(&spec.schedules, phi, psi, lambda)?;
    report.references = spec.references();
    if with_sweep {
        match report.active_h_max() {
            HMax::Bounded(bound) => {
                report.sweep = Some(sweep(
                    &spec.schedules,
                    phi,
                    psi,
                    &spec.denominator,
                    lambda,
                    bound,
                    report.continuous_verdict,
                    16,
                )?)
            }
            other => eprintln!("warning: no sweep, step bound is {}", hmax_text(other)),
        }
    }
    print_consistency(&report);
    let mut discrete = Vec::new();
    let mut inconsistent = Vec::new();
    for &h in &spec.h_values {
        let r = discrete_report(&spec, h, lambda, window)?;
        if report.continuous_verdict != Verdict::Inconclusive && r.verdict != report.continuous_verdict {
            inconsistent.push(h);
            println!(
                "inconsistency: continuous {} but discrete {} at h = {h} (window product [{}, {}])",
                report.continuous_verdict.name(),
                r.verdict.name(),
                num(r.r_lower),
                num(r.r_upper)
            );
        }
        discrete.push(verdict_json(h, &r));
    }
    if let Some(rows) = &report.sweep {
        let agree = rows.iter().filter(|r| r.agrees).count();
        println!(
            "sweep: {agree}/{} steps below the bound agree with the continuous verdict",
            rows.len()
        );
    }
    let doc = json!({
        "scenario": spec.name,
        "report": report,
        "discrete": discrete,
        "inconsistency": !inconsistent.is_empty(),
        "inconsistent_steps": inconsistent,
        "notes": spec.notes,
    });
    let mut bundle = Bundle::create(out)?;
    let path = bundle.json("consistency.json", &doc)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn negative(tr: &Trajectory) -> bool {
    tr.first_negative.is_some() || tr.states.iter().any(|s| !s.is_nonnegative())
}

fn cmd_compare(scenario: &ScenarioArg, hs: &[f64], t_end: Option<f64>, out: &Path) -> Result<()> {
    let Loaded { spec, .. } = scenario.load()?;
    warn_diagnostics(&spec)?;
    let hs = if hs.is_empty() {
        spec.h_values.clone()
    } else {
        hs.to_vec()
    };
    let t_end = t_end.unwrap_or(spec.t_end);
    let mut bundle = Bundle::create(out)?;
    let mut rows = Vec::new();
    for &h in &hs {
        let h_ref = h / (h / REFERENCE_STEP - 1e-9).ceil().max(1.0);
        let reference = simulate(&spec, h_ref, Method::Rk4, t_end)?;
        for method in [Method::Nsfd, Method::Euler] {
            let tr = simulate(&spec, h, method, t_end)?;
            let dev = tr.sup_deviation_i(&reference)?;
            let flag = negative(&tr);
            println!(
                "h = {h}, {}: sup|I - I_ref| = {}, negativity {flag}",
                method.name(),
                num(dev)
            );
            rows.push(vec![num(h), method.name().into(), num(dev), flag.to_string()]);
            bundle.trajectory(&tr, h)?;
        }
        bundle.trajectory(&reference, h_ref)?;
    }
    let path = bundle.csv("compare.csv", &["h", "method", "sup_dev_I", "negativity_flag"], &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_scenario_list() {
    for b in Builtin::ALL {
        println!("{:<20} {}", b.name(), b.description());
    }
}

fn write_report(report: &ScenarioReport, bundle: &mut Bundle) -> Result<()> {
    for run in &report.per_h {
        bundle.trajectory(&run.nsfd, run.h)?;
        bundle.trajectory(&run.euler, run.h)?;
    }
    bundle.trajectory(&report.rk4, report.rk4.dt)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for run in &report.per_h {
        match &run.discrete {
            Ok(r) => rows.push(threshold_row("discrete", Some(run.h), r)),
            Err(e) => eprintln!("warning: discrete thresholds at h = {}: {e}", run.h),
        }
    }
    rows.push(threshold_row("continuous", None, &report.continuous));
    bundle.csv("thresholds.csv", &THRESHOLD_HEADER, &rows)?;

    let verdicts: Vec<Vec<String>> = report
        .verdicts
        .iter()
        .map(|c| {
            vec![
                c.method.clone(),
                opt_num(c.h),
                c.verdict.map(|v| v.name().to_string()).unwrap_or_default(),
                opt_num(c.r_lower),
                opt_num(c.r_upper),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    bundle.csv(
        "verdicts.csv",
        &["method", "h", "verdict", "r_lower", "r_upper", "error"],
        &verdicts,
    )?;

    let compare: Vec<Vec<String>> = report
        .per_h
        .iter()
        .flat_map(|run| [&run.nsfd_summary, &run.euler_summary])
        .map(|s| {
            vec![
                num(s.h),
                s.method.name().into(),
                opt_num(s.sup_dev_i),
                s.negativity_flag().to_string(),
            ]
        })
        .collect();
    bundle.csv(
        "compare.csv",
        &["h", "method", "sup_dev_I", "negativity_flag"],
        &compare,
    )?;

    if let Some(c) = &report.consistency {
        bundle.json("consistency.json", &json!(c))?;
    }
    if let Some(res) = &report.residuals {
        let rows: Vec<Vec<String>> = res
            .rows
            .iter()
            .map(|r| vec![num(r.t), num(r.model), num(r.observed), num(r.residual)])
            .collect();
        bundle.csv("residuals.csv", &["t", "model_I", "observed", "residual"], &rows)?;
    }
    bundle.json("report.json", &json!(report))?;
    Ok(())
}

fn cmd_scenario_run(
    scenario: &ScenarioArg,
    observed: Option<&Path>,
    lambda: Option<f64>,
    window: WindowArgs,
    with_sweep: bool,
    out: &Path,
) -> Result<()> {
    let Loaded { mut spec, source } = scenario.load()?;
    if let Some(path) = observed {
        spec.observed = Some(load_observed(path)?);
        spec.observed_path = Some(path.to_path_buf());
    }
    let warnings = warn_diagnostics(&spec)?;
    let options = RunOptions {
        burn_in: window.burn_in,
        scan: window.scan,
        lambda,
        reference_step: REFERENCE_STEP,
        sweep: with_sweep,
        window_rule: window.window_rule.into(),
    };
    let report = run_scenario(&spec, &options)?;
    for c in &report.verdicts {
        let what = match c.h {
            Some(h) => format!("{} h = {h}", c.method),
            None => c.method.clone(),
        };
        match (&c.verdict, &c.error) {
            (Some(v), _) => println!("{what}: {} [{}, {}]", v.name(), opt_num(c.r_lower), opt_num(c.r_upper)),
            (None, Some(e)) => println!("{what}: error: {e}"),
            (None, None) => println!("{what}: no verdict"),
        }
    }
    if let Some(c) = &report.consistency {
        print_consistency(c);
    } else if let Some(note) = &report.consistency_note {
        println!("consistency bound not applicable: {note}");
    }
    if report.inconsistency {
        println!(
            "inconsistency: discrete verdict differs from the continuous one at h = {:?}",
            report.inconsistent_steps
        );
    }
    if let Some(r) = &report.residuals {
        println!("residuals: {} points, rms {}", r.rows.len(), opt_num(r.rms));
    }

    let mut bundle = Bundle::create(out)?;
    write_report(&report, &mut bundle)?;
    let config = spec.to_config().ok().map(|c| json!(c));
    let mut files = bundle.files().to_vec();
    files.push("manifest.json".into());
    let manifest = json!({
        "tool": "sirvs",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": spec.name,
        "source": source,
        "config": config,
        "observed_path": spec.observed_path,
        "options": {
            "burn_in": options.burn_in,
            "scan": options.scan,
            "lambda": report.lambda,
            "reference_step": options.reference_step,
            "sweep": options.sweep,
            "window_rule": options.window_rule,
        },
        "inconsistency": report.inconsistency,
        "inconsistent_steps": report.inconsistent_steps,
        "warnings": warnings,
        "notes": spec.notes,
        "files": files,
    });
    bundle.json("manifest.json", &manifest)?;
    println!("wrote {} files to {}", bundle.files().len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            h,
            method,
            t_end,
            out,
        } => cmd_simulate(&scenario, h, method.into(), t_end, &out),
        Command::Thresholds {
            scenario,
            h,
            lambda,
            window,
            out,
        } => cmd_thresholds(&scenario, &h, lambda, window, &out),
        Command::Consistency {
            scenario,
            lambda,
            sweep,
            window,
            out,
        } => cmd_consistency(&scenario, lambda, sweep, window, &out),
        Command::Compare {
            scenario,
            h,
            t_end,
            out,
        } => cmd_compare(&scenario, &h, t_end, &out),
        Command::Scenario(ScenarioCommand::List) => {
            cmd_scenario_list();
            Ok(())
        }
        Command::Scenario(ScenarioCommand::Run {
            scenario,
            observed,
            lambda,
            window,
            sweep,
            out,
        }) => cmd_scenario_run(&scenario, observed.as_deref(), lambda, window, sweep, &out),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        4
    } else if e.is_configuration() || matches!(e, Error::NotApplicable(_)) {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
