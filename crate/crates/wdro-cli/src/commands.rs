//! Subcommand implementations. Each one builds the model from the config,
//! applies the validity gate where the contract demands it, and emits either
//! CSV (to stdout, or to files under `--out`) or a key=value report. All
//! floats in CSV output are printed with 17 significant digits so values
//! round-trip exactly and identical configs produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use wdro_core::analysis::{di_monotonicity_scan, sp_margin_curve, WeightingFamily};
use wdro_core::equilibrium::{build_model, EquilibriumModel};
use wdro_core::verify::laplace::{moment_theta_via_laplace, moment_tmor_via_laplace};
use wdro_core::verify::montecarlo::{simulate_candidate_payoff, Horizon, SimulationConfig};
use wdro_core::verify::residuals::{bellman_residuals, Region};

use crate::config::{RunConfig, SimulateSpec, TriggerSpec};
use crate::CliError;

fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn refusal(model: &EquilibriumModel) -> CliError {
    CliError::Refusal(format!(
        "smooth pasting fails for this weighting: the validity margin is {:.6e} and must be \
         nonnegative, so the closed-form trigger is only a candidate, not an equilibrium; \
         pass --allow-invalid to compute from the raw candidate anyway",
        model.sp_margin
    ))
}

fn io_err(what: &str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot {what} {}: {e}", path.display()))
}

/// Prints `content` to stdout, or writes it to `<dir>/<name>` when an output
/// directory was given (announcing the path so scripts can pick it up).
fn emit(out: Option<&Path>, name: &str, content: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(dir) => write_file(dir, name, content),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err("create directory", dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| io_err("write", &path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn positive_grid(values: &[f64], key: &str) -> Result<(), CliError> {
    for &v in values {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Config(format!("{key}: {v} must be positive and finite")));
        }
    }
    Ok(())
}


pub fn cmd_trigger(
    cfg: &RunConfig,
    allow_invalid: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    if !model.sp_holds && !allow_invalid {
        return Err(refusal(&model));
    }
    let default_spec = TriggerSpec::default();
    let spec = cfg.trigger.as_ref().unwrap_or(&default_spec);
    let qs = spec.q.expand("[trigger] q")?;
    positive_grid(&qs, "[trigger] q")?;

    let mut csv = String::from("q,x_star,iota,sp_margin,sp_holds\n");
    for &q in &qs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_float(q),
            csv_float(model.x_star_candidate(q)),
            csv_float(model.iota),
            csv_float(model.sp_margin),
            model.sp_holds
        );
    }
    emit(out, "trigger.csv", &csv)
}

pub fn cmd_value(
    cfg: &RunConfig,
    allow_invalid: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    if !model.sp_holds && !allow_invalid {
        return Err(refusal(&model));
    }
    let spec = cfg
        .value
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [value] section with an x grid".into()))?;
    let xs = spec.x.expand("[value] x")?;
    positive_grid(&xs, "[value] x")?;
    let qs = spec.q.expand("[value] q")?;
    positive_grid(&qs, "[value] q")?;

    let mut csv = String::from("x,q,V,V_q,region\n");
    for &x in &xs {
        for &q in &qs {
            let value = model
                .v_value_candidate(x, q)
                .map_err(|e| CliError::Config(format!("[value]: {e}")))?;
            let marginal = model
                .v_q_marginal(x, q)
                .map_err(|e| CliError::Config(format!("[value]: {e}")))?;
            let region =
                if x >= model.x_star_candidate(q) { "expansion" } else { "continuation" };
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                csv_float(x),
                csv_float(q),
                csv_float(value),
                csv_float(marginal),
                region
            );
        }
    }
    emit(out, "value.csv", &csv)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CheckStatus {
    Pass,
    Fail,
    ExpectedFail,
    Skipped,
}

impl CheckStatus {
    fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::ExpectedFail => "expected-fail",
            CheckStatus::Skipped => "skipped",
        }
    }
}

struct CheckTable {
    lines: String,
    any_fail: bool,
}

impl CheckTable {
    fn new() -> Self {
        CheckTable { lines: String::new(), any_fail: false }
    }

    fn record(&mut self, name: &str, status: CheckStatus, detail: &str) {
        self.any_fail |= status == CheckStatus::Fail;
        let _ = writeln!(self.lines, "check={name} status={} {detail}", status.as_str());
    }

    fn tol(&mut self, name: &str, observed: f64, tol: f64, label: &str) {
        let status = if observed.is_finite() && observed <= tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.record(name, status, &format!("{label}={observed:.3e} tol={tol:.1e}"));
    }
}

/// Runs the verification suite: the transform route for both rate moments,
/// pasting of the value and its capacity derivative at the trigger, the
/// variational-inequality residual grid, and (opt-in) a Monte Carlo replay.
/// On a model whose validity margin is negative the marginal-cost bound is
/// expected to break; that outcome is reported as such and does not fail the
/// suite, because it is the documented property of an invalid candidate.
pub fn cmd_check(cfg: &RunConfig, allow_invalid: bool, out: Option<&Path>) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    if !model.sp_holds && !allow_invalid {
        return Err(refusal(&model));
    }
    let invalid = !model.sp_holds;
    let sigma = model.market.sigma;
    let k = model.market.k;
    let mut table = CheckTable::new();

    // Rate moments recomputed from integral transforms of the discount curve,
    // never touching the rate density the model was built from.
    let theta_dual = moment_theta_via_laplace(&model.weighting, sigma)
        .map_err(|e| CliError::Config(format!("moment transform failed: {e}")))?;
    table.tol(
        "moment-theta",
        (theta_dual - model.m_theta).abs() / model.m_theta.abs(),
        1e-6,
        "rel_err",
    );
    let tmor_dual = moment_tmor_via_laplace(&model.weighting, sigma)
        .map_err(|e| CliError::Config(format!("moment transform failed: {e}")))?;
    table.tol(
        "moment-delay",
        (tmor_dual - model.m_tmor).abs() / model.m_tmor.abs(),
        1e-6,
        "rel_err",
    );

    // Validity margin itself: informational for a valid model, the expected
    // point of failure for an invalid one.
    table.record(
        "sp-margin",
        if model.sp_holds { CheckStatus::Pass } else { CheckStatus::ExpectedFail },
        &format!("margin={:.6e}", model.sp_margin),
    );

    // Pasting at the trigger: the value is continuous and its capacity
    // derivative meets the marginal cost from below.
    let x_hat = model.x_star_candidate(1.0);
    let probe = |x: f64| model.v_value_candidate(x, 1.0);
    let (below, above) = (probe(x_hat * (1.0 - 1e-9)), probe(x_hat * (1.0 + 1e-9)));
    match (below, above) {
        (Ok(b), Ok(a)) => {
            let scale = b.abs().max(a.abs()).max(1.0);
            table.tol("value-paste", (a - b).abs() / scale, 1e-6, "scaled_jump");
        }
        (Err(e), _) | (_, Err(e)) => {
            return Err(CliError::Config(format!("value evaluation failed: {e}")))
        }
    }
    let marginal_below = model
        .v_q_marginal(x_hat * (1.0 - 1e-9), 1.0)
        .map_err(|e| CliError::Config(format!("marginal evaluation failed: {e}")))?;
    table.tol("marginal-paste", (marginal_below - k).abs() / k, 1e-6, "scaled_gap");

    // Variational-inequality residuals on a band around the trigger. Below
    // the trigger the candidate solves its differential equation exactly, so
    // the scaled residual must vanish up to stencil error whether or not the
    // model is valid. Above the trigger the inequality side must stay
    // nonpositive; an invalid candidate breaks it there, which is expected.
    let x_grid: Vec<f64> =
        (0..120).map(|i| x_hat * (0.1 + 1.9 * i as f64 / 119.0)).collect();
    let q_grid = [0.8, 1.0, 1.25];
    let report = bellman_residuals(&model, &x_grid, &q_grid, allow_invalid)
        .map_err(|e| CliError::Config(format!("residual grid failed: {e}")))?;
    let kappa_hold = report.max_abs_scaled_kappa(Region::Continuation).unwrap_or(f64::NAN);
    let kappa_jump = report.max_scaled_kappa(Region::Expansion).unwrap_or(f64::NAN);
    let hold_ok = kappa_hold.is_finite() && kappa_hold <= 1e-4;
    table.record(
        "residual-pde",
        if hold_ok && kappa_jump <= 1e-8 {
            CheckStatus::Pass
        } else if hold_ok && invalid {
            CheckStatus::ExpectedFail
        } else {
            CheckStatus::Fail
        },
        &format!("hold_abs_kappa={kappa_hold:.3e} jump_kappa={kappa_jump:.3e} tol=1.0e-4"),
    );

    // Marginal value against marginal cost below the trigger. A valid model
    // keeps V_q <= K everywhere; an invalid candidate overshoots K there,
    // which is precisely why it fails to be an equilibrium.
    let gap = report.max_marginal_gap(Region::Continuation).unwrap_or(f64::NAN);
    if invalid {
        let overshoot = report
            .nodes
            .iter()
            .filter(|n| n.region == Region::Continuation && n.marginal_gap > 0.0)
            .count();
        table.record(
            "marginal-cost-bound",
            if overshoot > 0 { CheckStatus::ExpectedFail } else { CheckStatus::Fail },
            &format!("vq_above_k_nodes={overshoot} max_gap={gap:.3e}"),
        );
    } else {
        table.tol("marginal-cost-bound", gap / k, 1e-10, "max_scaled_gap");
    }

    // Monte Carlo replay of the trigger policy, opt-in because it costs
    // seconds rather than milliseconds.
    let run_mc = cfg.check.as_ref().map(|c| c.monte_carlo).unwrap_or(false);
    if run_mc {
        let (x0, q0, dt, horizon, n_paths, seed, antithetic) = match cfg.simulate.as_ref() {
            Some(s) => (s.x0, s.q0, s.dt, sim_horizon(s), s.n_paths, s.seed, s.antithetic),
            None => (0.5 * x_hat, 1.0, 5e-3, Horizon::TailRule, 10_000, 17, true),
        };
        let sim = SimulationConfig::build(&model, x0, q0, dt, horizon, n_paths, seed, antithetic)
            .map_err(|e| CliError::Config(format!("simulation setup failed: {e}")))?;
        let est = simulate_candidate_payoff(&model, &sim)
            .map_err(|e| CliError::Config(format!("simulation failed: {e}")))?;
        let v = model
            .v_value_candidate(x0, q0)
            .map_err(|e| CliError::Config(format!("value evaluation failed: {e}")))?;
        let z = (est.mean - v) / est.std_error;
        table.record(
            "monte-carlo",
            if z.is_finite() && z.abs() <= 3.0 { CheckStatus::Pass } else { CheckStatus::Fail },
            &format!("z={z:.2} n_samples={} horizon={:.1}", est.n_samples, sim.horizon),
        );
    } else {
        table.record("monte-carlo", CheckStatus::Skipped, "enable with [check] monte_carlo=true");
    }

    let summary = if table.any_fail {
        "suite=fail"
    } else if invalid {
        "suite=expected-fail (invalid model)"
    } else {
        "suite=pass"
    };
    let text = format!("{}{summary}\n", table.lines);
    print!("{text}");
    if let Some(dir) = out {
        write_file(dir, "check.txt", &text)?;
    }
    if table.any_fail {
        return Err(CliError::CheckFailed("one or more checks exceeded tolerance".into()));
    }
    Ok(())
}

fn sim_horizon(spec: &SimulateSpec) -> Horizon {
    match spec.horizon {
        Some(t) => Horizon::Fixed(t),
        None => Horizon::TailRule,
    }
}

/// Emits the three figure data sets: the marginal value of capacity across
/// the shock level for a small and a large rate gap, the trigger across the
/// impatience parameter, and the validity margin across the impatience
/// parameter for several long-run rates.
pub fn cmd_figures(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let default_figs;
    let figs = match cfg.figures.as_ref() {
        Some(f) => f,
        None => {
            default_figs = Default::default();
            &default_figs
        }
    };
    let market = cfg.market.build()?;
    let default_dir = PathBuf::from(".");
    let dir = out.unwrap_or(&default_dir);

    let f1 = &figs.fig1;
    let xs = f1.x.expand("[figures.fig1] x")?;
    positive_grid(&xs, "[figures.fig1] x")?;
    if !(f1.q.is_finite() && f1.q > 0.0) {
        return Err(CliError::Config(format!(
            "[figures.fig1] q: {} must be positive and finite",
            f1.q
        )));
    }
    let mut csv = String::from("lambda,x,v_q\n");
    for &lambda in &f1.lambda {
        let weighting =
            wdro_core::discounting::WeightingDistribution::two_point(f1.r, lambda, f1.delta)
                .map_err(|e| CliError::Config(format!("[figures.fig1]: {e}")))?;
        let model = build_model(weighting, market)
            .map_err(|e| CliError::Config(format!("[figures.fig1]: {e}")))?;
        for &x in &xs {
            let vq = model
                .v_q_marginal(x, f1.q)
                .map_err(|e| CliError::Config(format!("[figures.fig1]: {e}")))?;
            let _ = writeln!(csv, "{},{},{}", csv_float(lambda), csv_float(x), csv_float(vq));
        }
    }
    write_file(dir, "fig1.csv", &csv)?;

    let f2 = &figs.fig2;
    let alphas = f2.alpha.expand("[figures.fig2] alpha")?;
    let curve = di_monotonicity_scan(&alphas, f2.phi, f2.beta, market, f2.q)
        .map_err(|e| CliError::Config(format!("[figures.fig2]: {e}")))?;
    let mut csv = String::from("alpha,x_star,sp_margin,sp_holds\n");
    for rec in &curve.records {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            csv_float(rec.param),
            csv_float(rec.x_star),
            csv_float(rec.sp_margin),
            rec.sp_holds
        );
    }
    write_file(dir, "fig2.csv", &csv)?;

    let f3 = &figs.fig3;
    let alphas = f3.alpha.expand("[figures.fig3] alpha")?;
    let mut csv = String::from("phi,alpha,sp_margin,sp_holds\n");
    for &phi in &f3.phi {
        let family = WeightingFamily::gamma_alpha(phi, f3.beta);
        let curve = sp_margin_curve(&family, &alphas, market)
            .map_err(|e| CliError::Config(format!("[figures.fig3]: {e}")))?;
        for rec in &curve.records {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                csv_float(phi),
                csv_float(rec.param),
                csv_float(rec.sp_margin),
                rec.sp_holds
            );
        }
    }
    write_file(dir, "fig3.csv", &csv)
}

/// Replays the trigger policy on simulated paths and compares the sampled
/// payoff against the closed form. A gap beyond four standard errors is a
/// hard verification failure.
pub fn cmd_simulate(
    cfg: &RunConfig,
    allow_invalid: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    if !model.sp_holds && !allow_invalid {
        return Err(refusal(&model));
    }
    let spec = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [simulate] section".into()))?;
    let sim = SimulationConfig::build(
        &model,
        spec.x0,
        spec.q0,
        spec.dt,
        sim_horizon(spec),
        spec.n_paths,
        spec.seed,
        spec.antithetic,
    )
    .map_err(|e| CliError::Config(format!("[simulate]: {e}")))?;
    let est = simulate_candidate_payoff(&model, &sim)
        .map_err(|e| CliError::Config(format!("[simulate]: {e}")))?;
    let v = model
        .v_value_candidate(spec.x0, spec.q0)
        .map_err(|e| CliError::Config(format!("[simulate]: {e}")))?;
    let z = (est.mean - v) / est.std_error;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "n_samples={} horizon={} tail_bound={} seed={}",
        est.n_samples,
        csv_float(sim.horizon),
        csv_float(sim.tail_bound),
        spec.seed
    );
    let _ = writeln!(
        text,
        "j_mean={} j_se={} v_analytic={} z={}",
        csv_float(est.mean),
        csv_float(est.std_error),
        csv_float(v),
        csv_float(z)
    );
    print!("{text}");
    if let Some(dir) = out {
        write_file(dir, "simulate.txt", &text)?;
    }
    if !(z.is_finite() && z.abs() <= 4.0) {
        return Err(CliError::CheckFailed(format!(
            "simulated payoff sits {z:.2} standard errors from the closed form (limit 4)"
        )));
    }
    Ok(())
}
