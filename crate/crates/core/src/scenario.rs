//! Regime comparisons, loss metrics, and parameter sweeps.
//!
//! [`run_scenario`] dispatches one network to the requested regime and
//! reduces the outcome to [`Metrics`]. [`run_sweep`] evaluates a scenario
//! across a parameter grid and a set of regimes, in parallel, with a
//! deterministic row order and a fixed csv schema:
//!
//! ```text
//! param,regime,price,realized_loss,mtm_loss,interest_cost,defaults,outer_iters,converged
//! ```
//!
//! Failed points become rows with empty metric cells and `converged=false`;
//! the sweep itself keeps going.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baseline::{clear, ClearingOutcome};
use crate::demand::{DemandError, DemandKind, InverseDemand};
use crate::network::{CaseLabel, FinancialNetwork, Mode};
use crate::solver::{solve, BankRegime, EquilibriumResult, SolverConfig, SolverError};
use crate::symmetric::{SymmetricError, SymmetricScenario};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    #[error("parameter `{parameter}` cannot be swept on this base: {reason}")]
    UnsupportedParameter {
        parameter: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Symmetric(#[from] SymmetricError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// Which clearing model to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FireSale,
    Uncollateralized,
    Collateralized,
}

impl Regime {
    pub const ALL: [Regime; 3] = [
        Regime::FireSale,
        Regime::Uncollateralized,
        Regime::Collateralized,
    ];

    fn rank(self) -> u8 {
        match self {
            Regime::FireSale => 0,
            Regime::Uncollateralized => 1,
            Regime::Collateralized => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::FireSale => "fire_sale",
            Regime::Uncollateralized => "uncollateralized",
            Regime::Collateralized => "collateralized",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fire_sale" | "fire-sale" | "firesale" => Ok(Regime::FireSale),
            "uncollateralized" | "uncoll" => Ok(Regime::Uncollateralized),
            "collateralized" | "coll" => Ok(Regime::Collateralized),
            other => Err(format!(
                "unknown regime `{other}`; use fire_sale, uncollateralized or collateralized"
            )),
        }
    }
}

/// Aggregate losses and defaults at a clearing point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Metrics {
    pub price: f64,
    /// Markdown actually paid on executed sales: `sum s_i (1 - q)`.
    pub realized_loss: f64,
    /// Markdown on all holdings at the clearing price: `sum a_i (1 - q)`.
    pub mark_to_market_loss: f64,
    /// Interest on the borrowing taken: `sum r_i ell_i`.
    pub interest_cost: f64,
    pub default_count: usize,
}

/// Outcome of one regime run.
#[derive(Debug, Clone)]
pub enum ScenarioOutcome {
    Equilibrium(EquilibriumResult),
    Clearing(ClearingOutcome),
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub outcome: ScenarioOutcome,
    pub metrics: Metrics,
}

fn metrics_from_equilibrium(network: &FinancialNetwork, res: &EquilibriumResult) -> Metrics {
    let q = res.price;
    let realized_loss: f64 = res.liquidations.iter().map(|s| s * (1.0 - q)).sum();
    let mark_to_market_loss: f64 = network.illiquid().iter().map(|a| a * (1.0 - q)).sum();
    let interest_cost: f64 = res
        .borrowing
        .iter()
        .zip(network.rates().iter())
        .map(|(ell, r)| ell * r)
        .sum();
    let default_count = res
        .cases
        .iter()
        .filter(|&&c| c == CaseLabel::I)
        .count();
    Metrics {
        price: q,
        realized_loss,
        mark_to_market_loss,
        interest_cost,
        default_count,
    }
}

fn metrics_from_clearing(network: &FinancialNetwork, out: &ClearingOutcome) -> Metrics {
    let q = out.price;
    Metrics {
        price: q,
        realized_loss: out.liquidations.iter().map(|s| s * (1.0 - q)).sum(),
        mark_to_market_loss: network.illiquid().iter().map(|a| a * (1.0 - q)).sum(),
        interest_cost: 0.0,
        default_count: out.defaults.len(),
    }
}

/// Runs one network through the requested regime and computes its metrics.
pub fn run_scenario(
    network: &FinancialNetwork,
    demand: &InverseDemand,
    regime: Regime,
    haircut: Option<f64>,
    config: &SolverConfig,
) -> Result<ScenarioRun, SolverError> {
    match regime {
        Regime::FireSale => {
            let outcome = clear(network, demand, config)?;
            let metrics = metrics_from_clearing(network, &outcome);
            Ok(ScenarioRun {
                outcome: ScenarioOutcome::Clearing(outcome),
                metrics,
            })
        }
        Regime::Uncollateralized => {
            let res = solve(network, demand, Mode::Uncollateralized, None, config)?;
            let metrics = metrics_from_equilibrium(network, &res);
            Ok(ScenarioRun {
                outcome: ScenarioOutcome::Equilibrium(res),
                metrics,
            })
        }
        Regime::Collateralized => {
            let res = solve(network, demand, Mode::Collateralized, haircut, config)?;
            let metrics = metrics_from_equilibrium(network, &res);
            Ok(ScenarioRun {
                outcome: ScenarioOutcome::Equilibrium(res),
                metrics,
            })
        }
    }
}

/// Uniform result document for the CLI `solve` output, shared by all three
/// regimes.
#[derive(Debug, Clone, Serialize)]
pub struct ResultDoc {
    pub mode: String,
    pub price: f64,
    pub liquidations: Vec<f64>,
    pub borrowing: Vec<f64>,
    pub payments: Vec<f64>,
    pub cases: Vec<CaseLabel>,
    pub regimes: Vec<String>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub kkt_residual: f64,
    pub price_residual: f64,
    pub conditions_violated: bool,
    pub defaults: Vec<usize>,
    pub fallback_steps: usize,
    pub negative_equity: Vec<usize>,
    pub metrics: Metrics,
}

impl ResultDoc {
    pub fn from_run(run: &ScenarioRun) -> Self {
        match &run.outcome {
            ScenarioOutcome::Equilibrium(res) => {
                let defaults = res
                    .cases
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &c)| (c == CaseLabel::I).then_some(i))
                    .collect();
                ResultDoc {
                    mode: match res.mode {
                        Mode::Uncollateralized => "uncollateralized".to_string(),
                        Mode::Collateralized => "collateralized".to_string(),
                    },
                    price: res.price,
                    liquidations: res.liquidations.clone(),
                    borrowing: res.borrowing.clone(),
                    payments: res.payments.clone(),
                    cases: res.cases.clone(),
                    regimes: res.regimes.iter().map(|r| r.to_string()).collect(),
                    outer_iters: res.outer_iters,
                    inner_iters: res.inner_iters_total,
                    kkt_residual: res.kkt_residual,
                    price_residual: res.price_residual,
                    conditions_violated: res.conditions_violated,
                    defaults,
                    fallback_steps: res.fallback_steps,
                    negative_equity: res.negative_equity.clone(),
                    metrics: run.metrics,
                }
            }
            ScenarioOutcome::Clearing(out) => ResultDoc {
                mode: "fire_sale".to_string(),
                price: out.price,
                liquidations: out.liquidations.clone(),
                borrowing: vec![0.0; out.liquidations.len()],
                payments: out.payments.clone(),
                cases: Vec::new(),
                regimes: (0..out.liquidations.len())
                    .map(|i| {
                        if out.defaults.contains(&i) {
                            BankRegime::Insolvent
                        } else if out.liquidations[i] > 0.0 {
                            BankRegime::LiquidateOnly
                        } else {
                            BankRegime::NoAction
                        }
                        .to_string()
                    })
                    .collect(),
                outer_iters: out.iterations,
                inner_iters: 0,
                kkt_residual: out.payment_residual.max(out.liquidation_residual),
                price_residual: out.price_residual,
                conditions_violated: false,
                defaults: out.defaults.clone(),
                fallback_steps: 0,
                negative_equity: Vec::new(),
                metrics: run.metrics,
            },
        }
    }
}

/// Which scalar a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    Rate,
    Shortfall,
    Impact,
}

impl SweptParameter {
    fn name(self) -> &'static str {
        match self {
            SweptParameter::Rate => "r",
            SweptParameter::Shortfall => "h",
            SweptParameter::Impact => "alpha",
        }
    }
}

impl FromStr for SweptParameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "r" | "rate" => Ok(SweptParameter::Rate),
            "h" | "shortfall" => Ok(SweptParameter::Shortfall),
            "alpha" | "impact" | "eps" => Ok(SweptParameter::Impact),
            other => Err(format!("unknown sweep parameter `{other}`; use r, h or alpha")),
        }
    }
}

/// The system a sweep perturbs.
#[derive(Debug, Clone)]
pub enum SweepBase {
    Symmetric(SymmetricScenario),
    Network {
        network: FinancialNetwork,
        demand: InverseDemand,
        haircut: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub varied: SweptParameter,
    pub lo: f64,
    pub hi: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
    pub regimes: Vec<Regime>,
    pub base: SweepBase,
    /// Permit impact ranges outside the admissible region of the demand
    /// family.
    pub allow_violations: bool,
}

/// One evaluated grid point; `metrics` is empty when the point failed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub regime: Regime,
    pub metrics: Option<Metrics>,
    pub outer_iters: Option<usize>,
    pub converged: bool,
}

impl SweepSpec {
    fn validate(&self) -> Result<(), SweepError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(SweepError::InvalidSpec(format!(
                "range [{}, {}] must be finite with lo < hi",
                self.lo, self.hi
            )));
        }
        if self.steps < 2 {
            return Err(SweepError::InvalidSpec(format!(
                "steps must be at least 2, got {}",
                self.steps
            )));
        }
        if self.regimes.is_empty() {
            return Err(SweepError::InvalidSpec("no regimes requested".to_string()));
        }
        if self.regimes.contains(&Regime::Collateralized) {
            let haircut = match &self.base {
                SweepBase::Symmetric(s) => s.haircut,
                SweepBase::Network { haircut, .. } => *haircut,
            };
            if haircut.is_none() {
                return Err(SweepError::InvalidSpec(
                    "collateralized regime requires a haircut".to_string(),
                ));
            }
        }
        if self.varied == SweptParameter::Impact && !self.allow_violations {
            let (kind, m) = match &self.base {
                SweepBase::Symmetric(s) => {
                    (DemandKind::Linear { alpha: s.alpha }, s.market_cap())
                }
                SweepBase::Network { demand, .. } => {
                    (demand.kind().clone(), demand.market_cap())
                }
            };
            let bound = match kind {
                DemandKind::Linear { .. } => Some(1.0 / (2.0 * m)),
                DemandKind::Exponential { .. } => Some(1.0 / m),
                DemandKind::Hyperbolic { .. } | DemandKind::Custom(_) => None,
            };
            if let Some(bound) = bound
                && (self.lo <= 0.0 || self.hi >= bound)
            {
                return Err(SweepError::InvalidSpec(format!(
                    "impact range [{}, {}] leaves the admissible region (0, {bound}); pass allow_violations to sweep it anyway",
                    self.lo, self.hi
                )));
            }
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

fn evaluate_point(
    spec: &SweepSpec,
    value: f64,
    regime: Regime,
    config: &SolverConfig,
) -> Result<ScenarioRun, SweepError> {
    match &spec.base {
        SweepBase::Symmetric(base) => {
            let mut scenario = *base;
            match spec.varied {
                SweptParameter::Rate => scenario.rate = value,
                SweptParameter::Shortfall => scenario.shortfall = value,
                SweptParameter::Impact => scenario.alpha = value,
            }
            if regime == Regime::Collateralized && spec.varied == SweptParameter::Shortfall {
                // keep the banks inside the stress test as the shortfall
                // approaches the holdings, shrinking the haircut if needed
                let cap = 1.0 - scenario.shortfall / scenario.holdings;
                if cap <= 0.0 {
                    return Err(SweepError::Symmetric(
                        SymmetricError::FundamentallyInsolvent {
                            shortfall: scenario.shortfall,
                            holdings: scenario.holdings,
                        },
                    ));
                }
                scenario.haircut = Some(scenario.haircut.expect("validated").min(cap));
            }
            let network = scenario.to_network()?;
            let demand = scenario.demand()?;
            Ok(run_scenario(
                &network,
                &demand,
                regime,
                scenario.haircut,
                config,
            )?)
        }
        SweepBase::Network {
            network,
            demand,
            haircut,
        } => {
            let (network, demand) = match spec.varied {
                SweptParameter::Rate => (network.with_uniform_rate(value).map_err(SolverError::from)?, demand.clone()),
                SweptParameter::Impact => (network.clone(), demand.with_impact(value)?),
                SweptParameter::Shortfall => {
                    return Err(SweepError::UnsupportedParameter {
                        parameter: "h",
                        reason: "shortfalls are derived quantities on a network base; sweep a symmetric base instead"
                            .to_string(),
                    });
                }
            };
            Ok(run_scenario(&network, &demand, regime, *haircut, config)?)
        }
    }
}

/// Evaluates every `(grid point, regime)` pair; point failures become error
/// rows, spec-level problems abort the sweep.
pub fn run_sweep(spec: &SweepSpec, config: &SolverConfig) -> Result<Vec<SweepRow>, SweepError> {
    spec.validate()?;
    // surface structural problems (like sweeping h on a network base)
    // before burning through the grid
    if matches!(&spec.base, SweepBase::Network { .. })
        && spec.varied == SweptParameter::Shortfall
    {
        return Err(SweepError::UnsupportedParameter {
            parameter: spec.varied.name(),
            reason: "shortfalls are derived quantities on a network base; sweep a symmetric base instead"
                .to_string(),
        });
    }

    let grid = spec.grid();
    let mut jobs: Vec<(f64, Regime)> = Vec::with_capacity(grid.len() * spec.regimes.len());
    for &value in &grid {
        for &regime in &spec.regimes {
            jobs.push((value, regime));
        }
    }

    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(value, regime)| match evaluate_point(spec, value, regime, config) {
            Ok(run) => {
                let outer_iters = match &run.outcome {
                    ScenarioOutcome::Equilibrium(res) => res.outer_iters,
                    ScenarioOutcome::Clearing(out) => out.iterations,
                };
                SweepRow {
                    param: value,
                    regime,
                    metrics: Some(run.metrics),
                    outer_iters: Some(outer_iters),
                    converged: true,
                }
            }
            Err(_) => SweepRow {
                param: value,
                regime,
                metrics: None,
                outer_iters: None,
                converged: false,
            },
        })
        .collect();

    rows.sort_by(|a, b| {
        a.param
            .partial_cmp(&b.param)
            .unwrap()
            .then(a.regime.rank().cmp(&b.regime.rank()))
    });
    Ok(rows)
}

/// Writes rows in the fixed csv schema; failed points leave their metric
/// cells empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "param",
        "regime",
        "price",
        "realized_loss",
        "mtm_loss",
        "interest_cost",
        "defaults",
        "outer_iters",
        "converged",
    ])?;
    for row in rows {
        let (price, realized, mtm, interest, defaults) = match &row.metrics {
            Some(m) => (
                m.price.to_string(),
                m.realized_loss.to_string(),
                m.mark_to_market_loss.to_string(),
                m.interest_cost.to_string(),
                m.default_count.to_string(),
            ),
            None => Default::default(),
        };
        let outer = row.outer_iters.map(|i| i.to_string()).unwrap_or_default();
        w.write_record(&[
            row.param.to_string(),
            row.regime.to_string(),
            price,
            realized,
            mtm,
            interest,
            defaults,
            outer,
            row.converged.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
