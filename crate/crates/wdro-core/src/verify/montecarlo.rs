//! Monte Carlo replay of the trigger policy against the closed-form value.
//!
//! The simulator never touches the analytic value function while running:
//! it steps the shock exactly (geometric Brownian motion has an exact
//! one-step law, so the only discretization is in when the policy may act
//! and how the time integrals are accumulated), applies the running-max
//! trigger policy, and adds up discounted profits and expansion costs. The
//! sample mean of that payoff is then compared, by the caller, against the
//! closed form it is supposed to equal. [`deviation_test`] reuses the same
//! machinery to price finite local deviations from the policy, which is the
//! defining inequality of the equilibrium rather than a consequence of it.
//!
//! Determinism is a design requirement, not an accident: every path draws
//! from its own counter-derived stream of a seeded ChaCha generator, and
//! reductions run in path order, so a configuration reproduces bit-identical
//! estimates across runs and thread counts.

use crate::equilibrium::{EquilibriumError, EquilibriumModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::parallel::run_blocks;

/// Paths used to estimate the tail of the objective before a real run.
const PILOT_PATHS: usize = 1_000;
/// The pilot runs at a coarser step; it only needs the scale of `sup Pi`.
const PILOT_DT_FACTOR: f64 = 10.0;
/// Truncated tail mass must stay below this fraction of the value.
const TAIL_BUDGET_FRACTION: f64 = 1e-3;
/// The automatic horizon search gives up past this time.
const HORIZON_CAP: f64 = 600.0;
/// Spacing of candidate horizons in the automatic search.
const CHECKPOINT_SPACING: f64 = 20.0;
/// Paths per reduction block; fixed so the reduction tree never depends on
/// thread count.
const BLOCK: usize = 1_024;
/// Separates the pilot's randomness from the paths the estimate uses.
const PILOT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// A simulation could not be configured or run.
#[derive(Debug, Error)]
pub enum SimError {
    /// An argument was rejected before anything was simulated.
    #[error("parameter {name} = {value} is outside its admissible range")]
    BadParameter { name: &'static str, value: f64 },
    /// The requested horizon leaves too much discounted payoff beyond it.
    #[error(
        "horizon {horizon} leaves a truncated tail of about {bound:.3e}, over \
         the budget {budget:.3e} (0.1% of the value scale); extend the horizon"
    )]
    TailBound { horizon: f64, bound: f64, budget: f64 },
    /// No horizon up to the cap satisfies the tail bound.
    #[error(
        "no horizon up to {cap} meets the tail budget; the discount curve \
         decays too slowly for this starting state"
    )]
    HorizonSearch { cap: f64 },
    /// Evaluating the model failed (bad state, or a gated operation).
    #[error(transparent)]
    Model(#[from] EquilibriumError),
}

/// How the simulation horizon is chosen.
#[derive(Debug, Clone, Copy)]
pub enum Horizon {
    /// Simulate to exactly this time. Still vetted against the tail budget.
    Fixed(f64),
    /// Shortest checkpoint time whose truncated tail fits the budget.
    TailRule,
}

/// A vetted simulation setup. Construction runs a pilot, so holding one of
/// these means the horizon decision has already been paid for and audited.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub x0: f64,
    pub q0: f64,
    pub dt: f64,
    /// Resolved horizon (a concrete time, even under [`Horizon::TailRule`]).
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Pilot estimate of the discounted mass beyond the horizon:
    /// `h(T) * E[sup Pi]`.
    pub tail_bound: f64,
    /// `|V(x0, q0)|` (candidate form), the scale the bound is measured
    /// against.
    pub value_scale: f64,
}

impl SimulationConfig {
    /// Validates parameters, runs the pilot, and resolves the horizon.
    ///
    /// `n_paths` counts simulated paths, so with `antithetic` it must be
    /// even; each antithetic pair contributes one independent sample.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        model: &EquilibriumModel,
        x0: f64,
        q0: f64,
        dt: f64,
        horizon: Horizon,
        n_paths: usize,
        seed: u64,
        antithetic: bool,
    ) -> Result<Self, SimError> {
        for (name, value, ok) in [
            ("x0", x0, x0 > 0.0),
            ("q0", q0, q0 > 0.0),
            ("dt", dt, dt > 0.0),
        ] {
            if !(ok && value.is_finite()) {
                return Err(SimError::BadParameter { name, value });
            }
        }
        if n_paths < 2 || (antithetic && n_paths % 2 != 0) {
            return Err(SimError::BadParameter { name: "n_paths", value: n_paths as f64 });
        }
        if let Horizon::Fixed(t) = horizon {
            if !(t.is_finite() && t >= dt) {
                return Err(SimError::BadParameter { name: "horizon", value: t });
            }
        }
        let (resolved, tail_bound, value_scale) = pilot_horizon(model, x0, q0, dt, horizon, seed)?;
        Ok(SimulationConfig {
            x0,
            q0,
            dt,
            horizon: resolved,
            n_paths,
            seed,
            antithetic,
            tail_bound,
            value_scale,
        })
    }
}

/// Closed-form pieces of the trigger policy, flattened out of the model so
/// the inner loop carries a few floats instead of a model reference.
#[derive(Debug, Clone, Copy)]
struct TriggerPolicy {
    gamma: f64,
    /// Exponent of the profit factor `q^(1 - 1/gamma)`.
    pif_exp: f64,
    /// Numerator and denominator of the trigger inverse, kept separate so
    /// the policy computes `(x * num / den)^gamma` with the exact operation
    /// order of [`EquilibriumModel::q_tilde`] and reproduces its bits.
    tilde_num: f64,
    tilde_den: f64,
    k: f64,
}

impl TriggerPolicy {
    fn from_model(model: &EquilibriumModel) -> Self {
        let gamma = model.market.gamma;
        TriggerPolicy {
            gamma,
            pif_exp: 1.0 - 1.0 / gamma,
            tilde_num: gamma - 1.0,
            tilde_den: gamma * model.iota * model.market.k,
            k: model.market.k,
        }
    }

    #[inline(always)]
    fn q_tilde(&self, x: f64) -> f64 {
        (x * self.tilde_num / self.tilde_den).powf(self.gamma)
    }
}

/// Running state of one simulated leg: capacity bookkeeping plus the two
/// discounted accumulators. `x_next` is the trigger; past the first jump it
/// equals the running maximum of the shock, which is what makes the policy
/// a running-max policy.
#[derive(Debug, Clone, Copy)]
struct Leg {
    q: f64,
    pi_f: f64,
    x_next: f64,
    /// Accumulates `h(t_n) * Pi(x_n, q_n)`; multiplied by `dt` at the end.
    profit: f64,
    cost: f64,
}

impl Leg {
    fn new(q0: f64, trigger: f64, policy: &TriggerPolicy) -> Self {
        Leg { q: q0, pi_f: q0.powf(policy.pif_exp), x_next: trigger, profit: 0.0, cost: 0.0 }
    }

    /// One policy step at shock level `x` with discount weight `h_n`:
    /// expand first if the trigger is crossed, then accrue the profit flow
    /// at the post-jump capacity (the expanded output earns immediately).
    #[inline(always)]
    fn step(&mut self, policy: &TriggerPolicy, x: f64, h_n: f64) {
        if x > self.x_next {
            // max() guards the one-ulp case where the rebuilt q_tilde of a
            // barely-crossed trigger rounds below the current capacity.
            let q_new = policy.q_tilde(x).max(self.q);
            self.cost += h_n * policy.k * (q_new - self.q);
            self.q = q_new;
            self.pi_f = q_new.powf(policy.pif_exp);
            self.x_next = x;
        }
        self.profit += h_n * x * self.pi_f;
    }

    fn payoff(&self, dt: f64) -> f64 {
        self.profit * dt - self.cost
    }
}

/// Precomputed per-step tables shared by every path of a run.
struct StepTables {
    n_steps: usize,
    dt: f64,
    drift: f64,
    vol: f64,
    /// `h(t_n)` for `n = 0..n_steps`.
    h_at: Vec<f64>,
    /// Antithetic pivot `x0^2 * exp(-sigma^2 t_n)` for `n = 0..=n_steps`;
    /// empty when mirroring is off.
    pivot: Vec<f64>,
}

impl StepTables {
    fn build(model: &EquilibriumModel, config: &SimulationConfig) -> StepTables {
        let sigma = model.market.sigma;
        let dt = config.dt;
        let n_steps = ((config.horizon / dt).round() as usize).max(1);
        let h_at: Vec<f64> =
            (0..n_steps).map(|n| model.weighting.h_raw(n as f64 * dt)).collect();
        let pivot = if config.antithetic {
            (0..=n_steps)
                .map(|n| config.x0 * config.x0 * (-sigma * sigma * (n as f64 * dt)).exp())
                .collect()
        } else {
            Vec::new()
        };
        StepTables {
            n_steps,
            dt,
            drift: -0.5 * sigma * sigma * dt,
            vol: sigma * dt.sqrt(),
            h_at,
            pivot,
        }
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Raw per-path output of a simulation run, in path-index order. With
/// antithetic mirroring, paths `2p` and `2p + 1` form pair `p`.
#[derive(Debug, Clone)]
pub struct PathBatch {
    /// Discounted profit integral per path.
    pub profits: Vec<f64>,
    /// Discounted expansion cost per path.
    pub costs: Vec<f64>,
    /// `(X_T, Q_T)` per path.
    pub terminal: Vec<(f64, f64)>,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.profits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profits.is_empty()
    }

    /// Discounted profit minus discounted cost for one path.
    pub fn payoff(&self, path: usize) -> f64 {
        self.profits[path] - self.costs[path]
    }
}

/// Simulates every configured path and returns the per-path accumulators.
///
/// This is the diagnostic face of the simulator: estimates come from
/// [`simulate_equilibrium_payoff`], which reduces this batch.
pub fn simulate_path_batch(
    model: &EquilibriumModel,
    config: &SimulationConfig,
) -> Result<PathBatch, SimError> {
    let tables = StepTables::build(model, config);
    let policy = TriggerPolicy::from_model(model);
    let trigger = model.x_star_candidate(config.q0);

    let units = if config.antithetic { config.n_paths / 2 } else { config.n_paths };
    let n_blocks = units.div_ceil(BLOCK);
    let blocks: Vec<PathBatch> = run_blocks(n_blocks, |b| {
        let lo = b * BLOCK;
        let hi = ((b + 1) * BLOCK).min(units);
        let mut out = PathBatch {
            profits: Vec::with_capacity(2 * (hi - lo)),
            costs: Vec::with_capacity(2 * (hi - lo)),
            terminal: Vec::with_capacity(2 * (hi - lo)),
        };
        for unit in lo..hi {
            let mut rng = path_rng(config.seed, unit as u64);
            if config.antithetic {
                let mut x = config.x0;
                let mut plus = Leg::new(config.q0, trigger, &policy);
                let mut minus = plus;
                for n in 0..tables.n_steps {
                    let x_m = tables.pivot[n] / x;
                    let h_n = tables.h_at[n];
                    plus.step(&policy, x, h_n);
                    minus.step(&policy, x_m, h_n);
                    let z: f64 = rng.sample(StandardNormal);
                    x *= (tables.drift + tables.vol * z).exp();
                }
                for (leg, x_t) in [(plus, x), (minus, tables.pivot[tables.n_steps] / x)] {
                    out.profits.push(leg.profit * tables.dt);
                    out.costs.push(leg.cost);
                    out.terminal.push((x_t, leg.q));
                }
            } else {
                let mut x = config.x0;
                let mut leg = Leg::new(config.q0, trigger, &policy);
                for n in 0..tables.n_steps {
                    leg.step(&policy, x, tables.h_at[n]);
                    let z: f64 = rng.sample(StandardNormal);
                    x *= (tables.drift + tables.vol * z).exp();
                }
                out.profits.push(leg.profit * tables.dt);
                out.costs.push(leg.cost);
                out.terminal.push((x, leg.q));
            }
        }
        out
    });

    let mut batch =
        PathBatch { profits: Vec::new(), costs: Vec::new(), terminal: Vec::new() };
    for mut b in blocks {
        batch.profits.append(&mut b.profits);
        batch.costs.append(&mut b.costs);
        batch.terminal.append(&mut b.terminal);
    }
    Ok(batch)
}

/// A Monte Carlo estimate with its sampling uncertainty.
#[derive(Debug, Clone, Copy)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Independent samples behind the estimate: antithetic pairs count once.
    pub n_samples: usize,
}

/// Mean discounted payoff of the equilibrium policy from `(x0, q0)`.
///
/// Refuses models whose candidate fails smooth pasting, because then the
/// replayed policy is not an equilibrium and the closed form it would be
/// compared against is gated too; [`simulate_candidate_payoff`] drops the
/// gate for diagnosing exactly those models.
pub fn simulate_equilibrium_payoff(
    model: &EquilibriumModel,
    config: &SimulationConfig,
) -> Result<SimEstimate, SimError> {
    if !model.sp_holds {
        return Err(EquilibriumError::NotEquilibrium { sp_margin: model.sp_margin }.into());
    }
    simulate_candidate_payoff(model, config)
}

/// [`simulate_equilibrium_payoff`] without the smooth-pasting gate.
pub fn simulate_candidate_payoff(
    model: &EquilibriumModel,
    config: &SimulationConfig,
) -> Result<SimEstimate, SimError> {
    let batch = simulate_path_batch(model, config)?;
    let samples: Vec<f64> = if config.antithetic {
        (0..batch.len() / 2)
            .map(|p| 0.5 * (batch.payoff(2 * p) + batch.payoff(2 * p + 1)))
            .collect()
    } else {
        (0..batch.len()).map(|p| batch.payoff(p)).collect()
    };
    let (mean, std_error) = mean_and_se(&samples);
    Ok(SimEstimate { mean, std_error, n_samples: samples.len() })
}

/// One recorded state along a simulated path.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub q: f64,
}

/// Replays a single path of the configuration and records `(t, X_t, Q_t)`
/// at every grid time, including the horizon.
///
/// `path` uses the same indexing as [`PathBatch`], so traces line up with
/// batch entries; the final point matches the batch terminal state.
pub fn trace_path(
    model: &EquilibriumModel,
    config: &SimulationConfig,
    path: usize,
) -> Result<Vec<PathPoint>, SimError> {
    if path >= config.n_paths {
        return Err(SimError::BadParameter { name: "path", value: path as f64 });
    }
    let tables = StepTables::build(model, config);
    let policy = TriggerPolicy::from_model(model);
    let trigger = model.x_star_candidate(config.q0);
    let (unit, minus_leg) =
        if config.antithetic { (path / 2, path % 2 == 1) } else { (path, false) };

    let mut rng = path_rng(config.seed, unit as u64);
    let mut x = config.x0;
    let mut leg = Leg::new(config.q0, trigger, &policy);
    let mut points = Vec::with_capacity(tables.n_steps + 1);
    for n in 0..tables.n_steps {
        let x_here = if minus_leg { tables.pivot[n] / x } else { x };
        leg.step(&policy, x_here, tables.h_at[n]);
        points.push(PathPoint { t: n as f64 * tables.dt, x: x_here, q: leg.q });
        let z: f64 = rng.sample(StandardNormal);
        x *= (tables.drift + tables.vol * z).exp();
    }
    let x_final = if minus_leg { tables.pivot[tables.n_steps] / x } else { x };
    points.push(PathPoint {
        t: tables.n_steps as f64 * tables.dt,
        x: x_final,
        q: leg.q,
    });
    Ok(points)
}

/// Finite-deviation gain estimate at one window size.
#[derive(Debug, Clone, Copy)]
pub struct DeviationEstimate {
    pub epsilon: f64,
    /// Estimate of `[J(eq) - (J(deviated) - K (a - q))] / epsilon`;
    /// nonnegative means the deviation does not pay.
    pub gain: f64,
    pub std_error: f64,
}

/// Deviation gains across a grid of window sizes.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub estimates: Vec<DeviationEstimate>,
    pub n_samples: usize,
}

/// Prices the local deviation "hold output `a` on `[0, epsilon)`, then
/// rejoin the trigger policy" against staying on the policy throughout,
/// from the state `(config.x0, config.q0)`.
///
/// Both policies run on common random numbers: the deviated payoff is
/// computed on the same shock path as the equilibrium payoff, pathwise, so
/// the enormous shared noise of the two objectives cancels in the
/// difference. The initial lump `K (a - q)` is charged analytically rather
/// than simulated, matching how the gain is defined.
///
/// Like the residual checker, this refuses a candidate that fails smooth
/// pasting unless `allow_invalid` is set; set it to demonstrate that such a
/// candidate really is beaten by some deviation.
pub fn deviation_test(
    model: &EquilibriumModel,
    a: f64,
    epsilon_grid: &[f64],
    config: &SimulationConfig,
    allow_invalid: bool,
) -> Result<DeviationReport, SimError> {
    if !allow_invalid && !model.sp_holds {
        return Err(EquilibriumError::NotEquilibrium { sp_margin: model.sp_margin }.into());
    }
    if !(a.is_finite() && a >= config.q0) {
        return Err(SimError::BadParameter { name: "a", value: a });
    }
    if epsilon_grid.is_empty() {
        return Err(SimError::BadParameter { name: "epsilon_grid", value: 0.0 });
    }
    for &eps in epsilon_grid {
        if !(eps.is_finite() && eps > 0.0 && eps < config.horizon) {
            return Err(SimError::BadParameter { name: "epsilon", value: eps });
        }
    }

    let tables = StepTables::build(model, config);
    let policy = TriggerPolicy::from_model(model);
    let trigger_q0 = model.x_star_candidate(config.q0);
    let trigger_a = model.x_star_candidate(a);
    let pif_a = a.powf(policy.pif_exp);
    // First grid step at or past each epsilon: the deviated leg holds `a`
    // strictly before it and rejoins the trigger rule from it on.
    let arm_step: Vec<usize> =
        epsilon_grid.iter().map(|eps| (eps / tables.dt).ceil() as usize).collect();
    let n_eps = epsilon_grid.len();
    let lump = policy.k * (a - config.q0);

    let units = if config.antithetic { config.n_paths / 2 } else { config.n_paths };
    let n_blocks = units.div_ceil(BLOCK);
    // samples[e] holds the per-unit gain samples for epsilon_grid[e].
    let block_samples: Vec<Vec<Vec<f64>>> = run_blocks(n_blocks, |b| {
        let lo = b * BLOCK;
        let hi = ((b + 1) * BLOCK).min(units);
        let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(hi - lo); n_eps];
        let hold = Leg {
            q: a,
            pi_f: pif_a,
            x_next: f64::INFINITY,
            profit: 0.0,
            cost: 0.0,
        };
        for unit in lo..hi {
            let mut rng = path_rng(config.seed, unit as u64);
            let mut x = config.x0;
            let mut eq_p = Leg::new(config.q0, trigger_q0, &policy);
            let mut eq_m = eq_p;
            let mut dev_p = vec![hold; n_eps];
            let mut dev_m = vec![hold; n_eps];
            for n in 0..tables.n_steps {
                let h_n = tables.h_at[n];
                let x_m = if config.antithetic { tables.pivot[n] / x } else { 0.0 };
                eq_p.step(&policy, x, h_n);
                if config.antithetic {
                    eq_m.step(&policy, x_m, h_n);
                }
                for e in 0..n_eps {
                    if n == arm_step[e] {
                        dev_p[e].x_next = trigger_a;
                        dev_m[e].x_next = trigger_a;
                    }
                    dev_p[e].step(&policy, x, h_n);
                    if config.antithetic {
                        dev_m[e].step(&policy, x_m, h_n);
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                x *= (tables.drift + tables.vol * z).exp();
            }
            for e in 0..n_eps {
                let gain = if config.antithetic {
                    let j_eq = 0.5 * (eq_p.payoff(tables.dt) + eq_m.payoff(tables.dt));
                    let j_dev =
                        0.5 * (dev_p[e].payoff(tables.dt) + dev_m[e].payoff(tables.dt));
                    (j_eq - j_dev + lump) / epsilon_grid[e]
                } else {
                    (eq_p.payoff(tables.dt) - dev_p[e].payoff(tables.dt) + lump)
                        / epsilon_grid[e]
                };
                samples[e].push(gain);
            }
        }
        samples
    });

    let mut estimates = Vec::with_capacity(n_eps);
    let mut n_samples = 0;
    for (e, &epsilon) in epsilon_grid.iter().enumerate() {
        let merged: Vec<f64> =
            block_samples.iter().flat_map(|b| b[e].iter().copied()).collect();
        let (gain, std_error) = mean_and_se(&merged);
        n_samples = merged.len();
        estimates.push(DeviationEstimate { epsilon, gain, std_error });
    }
    Ok(DeviationReport { estimates, n_samples })
}

/// Paired comparison of one configuration against its half-step refinement.
#[derive(Debug, Clone, Copy)]
pub struct RefinementReport {
    /// Estimate at the configured step.
    pub coarse: SimEstimate,
    /// Estimate at half the configured step, on the same Brownian paths.
    pub fine: SimEstimate,
    /// Mean and standard error of the per-sample difference coarse - fine.
    pub gap: SimEstimate,
}

/// Measures the discretization effect of the time step by simulating at
/// `config.dt / 2` and evaluating the policy a second time on the
/// even-index subsamples of the very same paths.
///
/// Subsampling an exactly-stepped geometric Brownian path at every other
/// grid point has precisely the law of simulating at the doubled step, so
/// the two estimates differ only in discretization, on common random
/// numbers. The paired gap therefore isolates the step-size effect from
/// sampling noise, which an independent rerun at the finer step could
/// never do: there the difference would be dominated by two independent
/// draws of the Monte Carlo error itself.
pub fn refinement_probe(
    model: &EquilibriumModel,
    config: &SimulationConfig,
) -> Result<RefinementReport, SimError> {
    let fine_config = SimulationConfig { dt: 0.5 * config.dt, ..config.clone() };
    let tables = StepTables::build(model, &fine_config);
    let policy = TriggerPolicy::from_model(model);
    let trigger = model.x_star_candidate(config.q0);
    let dt_c = 2.0 * tables.dt;

    let units = if config.antithetic { config.n_paths / 2 } else { config.n_paths };
    let n_blocks = units.div_ceil(BLOCK);
    // Per unit: (coarse payoff, fine payoff).
    let blocks: Vec<Vec<(f64, f64)>> = run_blocks(n_blocks, |b| {
        let lo = b * BLOCK;
        let hi = ((b + 1) * BLOCK).min(units);
        let mut out = Vec::with_capacity(hi - lo);
        for unit in lo..hi {
            let mut rng = path_rng(config.seed, unit as u64);
            let mut x = config.x0;
            let mut fine_p = Leg::new(config.q0, trigger, &policy);
            let mut fine_m = fine_p;
            let mut coarse_p = fine_p;
            let mut coarse_m = fine_p;
            for n in 0..tables.n_steps {
                let h_n = tables.h_at[n];
                let x_m = if config.antithetic { tables.pivot[n] / x } else { 0.0 };
                fine_p.step(&policy, x, h_n);
                if n % 2 == 0 {
                    coarse_p.step(&policy, x, h_n);
                }
                if config.antithetic {
                    fine_m.step(&policy, x_m, h_n);
                    if n % 2 == 0 {
                        coarse_m.step(&policy, x_m, h_n);
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                x *= (tables.drift + tables.vol * z).exp();
            }
            let (coarse, fine) = if config.antithetic {
                (
                    0.5 * (coarse_p.payoff(dt_c) + coarse_m.payoff(dt_c)),
                    0.5 * (fine_p.payoff(tables.dt) + fine_m.payoff(tables.dt)),
                )
            } else {
                (coarse_p.payoff(dt_c), fine_p.payoff(tables.dt))
            };
            out.push((coarse, fine));
        }
        out
    });

    let samples: Vec<(f64, f64)> = blocks.into_iter().flatten().collect();
    let coarse: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let fine: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let diffs: Vec<f64> = samples.iter().map(|s| s.0 - s.1).collect();
    let reduce = |v: &[f64]| {
        let (mean, std_error) = mean_and_se(v);
        SimEstimate { mean, std_error, n_samples: v.len() }
    };
    Ok(RefinementReport { coarse: reduce(&coarse), fine: reduce(&fine), gap: reduce(&diffs) })
}

/// Resolves the horizon and checks the tail budget with a coarse pilot run.
///
/// Returns `(horizon, tail bound at that horizon, value scale)`. The bound
/// is `h(T) * E[sup_{t <= T} Pi(X_t, Q_t)]`, a proxy for the discounted
/// payoff the truncation throws away, estimated from [`PILOT_PATHS`] paths
/// at ten times the production step.
fn pilot_horizon(
    model: &EquilibriumModel,
    x0: f64,
    q0: f64,
    dt: f64,
    horizon: Horizon,
    seed: u64,
) -> Result<(f64, f64, f64), SimError> {
    let value_scale = model.v_value_candidate(x0, q0)?.abs();
    let budget = TAIL_BUDGET_FRACTION * value_scale;
    let dt_p = dt * PILOT_DT_FACTOR;
    let (cap_steps, stride) = match horizon {
        Horizon::Fixed(t) => {
            let cap = ((t / dt_p).ceil() as usize).max(1);
            (cap, cap)
        }
        Horizon::TailRule => {
            let cap = ((HORIZON_CAP / dt_p).ceil() as usize).max(1);
            let stride = ((CHECKPOINT_SPACING / dt_p).ceil() as usize).max(1);
            (cap, stride)
        }
    };
    let n_checkpoints = cap_steps / stride;
    if n_checkpoints == 0 {
        return Err(SimError::BadParameter { name: "horizon", value: 0.0 });
    }

    let policy = TriggerPolicy::from_model(model);
    let trigger = model.x_star_candidate(q0);
    let drift = -0.5 * model.market.sigma * model.market.sigma * dt_p;
    let vol = model.market.sigma * dt_p.sqrt();
    let pilot_seed = seed ^ PILOT_SEED_SALT;

    let mut sup_sums = vec![0.0f64; n_checkpoints];
    for path in 0..PILOT_PATHS {
        let mut rng = path_rng(pilot_seed, path as u64);
        let mut x = x0;
        let mut leg = Leg::new(q0, trigger, &policy);
        let mut sup = 0.0f64;
        for n in 0..=cap_steps {
            leg.step(&policy, x, 0.0);
            sup = sup.max(x * leg.pi_f);
            if n > 0 && n % stride == 0 {
                sup_sums[n / stride - 1] += sup;
            }
            if n < cap_steps {
                let z: f64 = rng.sample(StandardNormal);
                x *= (drift + vol * z).exp();
            }
        }
    }

    match horizon {
        Horizon::Fixed(t) => {
            let t_eval = cap_steps as f64 * dt_p;
            let bound =
                model.weighting.h_raw(t_eval) * sup_sums[n_checkpoints - 1] / PILOT_PATHS as f64;
            if bound < budget {
                Ok((t, bound, value_scale))
            } else {
                Err(SimError::TailBound { horizon: t, bound, budget })
            }
        }
        Horizon::TailRule => {
            for k in 0..n_checkpoints {
                let t_k = ((k + 1) * stride) as f64 * dt_p;
                let bound = model.weighting.h_raw(t_k) * sup_sums[k] / PILOT_PATHS as f64;
                if bound < budget {
                    return Ok((t_k, bound, value_scale));
                }
            }
            Err(SimError::HorizonSearch { cap: HORIZON_CAP })
        }
    }
}

/// Pairwise (tree) summation: deterministic and far more accurate than a
/// running sum over long vectors.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mean = pairwise_sum(samples) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
