//! Joint liquidation-price equilibrium via nested fixed-point iteration.
//!
//! The outer loop runs the price update `q <- f(sum of sales)` to its fixed
//! point. For each price the inner loop finds the unique fixed-price Nash
//! equilibrium of the participants' liquidation game by simultaneous
//! gradient projection: every bank moves along its (projected, rate-weighted)
//! marginal cost, with a step length chosen from the Jacobian of the joint
//! gradient field, and is clamped back into its admissible sale box
//! `[0, min(a, h/q)]` (collateralized mode adds `(a - h)/(1 - q)`).
//!
//! Under the uniqueness conditions checked by
//! [`validate_uniqueness`](crate::demand::validate_uniqueness) the outer map
//! is a contraction and the inner game is diagonally strictly convex, so
//! both loops converge to the unique joint equilibrium. When the conditions
//! fail the solver still runs and flags the result.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::demand::{validate_uniqueness, DemandError, InverseDemand};
use crate::network::{
    classify, CaseLabel, ClassifiedSystem, FinancialNetwork, Mode, NetworkError,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("price loop did not converge in {iterations} iterations (last step {residual:e})")]
    OuterNonConvergence { iterations: usize, residual: f64 },
    #[error(
        "gradient projection did not converge in {iterations} iterations at outer step {outer_iter} (residual {residual:e})"
    )]
    InnerNonConvergence {
        outer_iter: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("clearing iteration lost monotonicity at step {iteration}")]
    MonotonicityViolation { iteration: usize },
    #[error("initial liquidations have length {got}, expected {expected}")]
    BadInitial { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    /// Absolute tolerance on successive outer price iterates.
    pub outer_tol: f64,
    /// Sup-norm tolerance on the projected gradient in the inner loop.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-10,
            inner_tol: 1e-10,
            max_outer: 10_000,
            max_inner: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.outer_tol > 0.0 && self.outer_tol.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "outer_tol must be positive, got {}",
                self.outer_tol
            )));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "inner_tol must be positive, got {}",
                self.inner_tol
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(SolverError::InvalidConfig(
                "iteration caps must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// How each bank ended up funding itself at the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BankRegime {
    NoAction,
    LiquidateOnly,
    Mixed,
    PureBorrow,
    TakenOver,
    Insolvent,
}

impl BankRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            BankRegime::NoAction => "no_action",
            BankRegime::LiquidateOnly => "liquidate_only",
            BankRegime::Mixed => "mixed",
            BankRegime::PureBorrow => "pure_borrow",
            BankRegime::TakenOver => "taken_over",
            BankRegime::Insolvent => "insolvent",
        }
    }
}

impl std::fmt::Display for BankRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Clearing liquidations, price, and borrowing, with solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    pub mode: Mode,
    /// Clearing price `f(total sales)`.
    pub price: f64,
    pub liquidations: Vec<f64>,
    /// Borrowed amounts `h - s q` for participants, zero otherwise.
    pub borrowing: Vec<f64>,
    pub payments: Vec<f64>,
    pub cases: Vec<CaseLabel>,
    pub regimes: Vec<BankRegime>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// Sup-norm of the projected gradient at the returned point.
    pub kkt_residual: f64,
    /// Last outer price step.
    pub price_residual: f64,
    /// Set when the uniqueness conditions fail for the supplied demand
    /// curve; the result is then a converged fixed point without the
    /// uniqueness certificate.
    pub conditions_violated: bool,
    /// Inner steps that fell back to the fixed step size.
    pub fallback_steps: usize,
    /// Outer iterations where the price update was damped to restore
    /// contraction (only happens when the uniqueness conditions fail).
    pub damped_steps: usize,
    /// Banks whose borrowing exceeds the book value of their remaining
    /// holdings (possible under uncollateralized borrowing only).
    pub negative_equity: Vec<usize>,
    /// Outer price iterates, starting at the initial price.
    pub outer_prices: Vec<f64>,
}

/// Per-bank sale bounds at price `q`: `min(a, h/q)` for participants, plus
/// `(a - h)/(1 - q)` in collateralized mode when `q < 1`; zero otherwise.
pub fn liquidation_bounds(system: &ClassifiedSystem, q: f64) -> DVector<f64> {
    let n = system.n();
    let mut upper = DVector::zeros(n);
    for &i in system.participants() {
        let a = system.holdings()[i];
        let h = system.shortfalls()[i];
        let mut bound = a.min(h / q);
        if system.mode() == Mode::Collateralized && q < 1.0 {
            bound = bound.min((a - h) / (1.0 - q));
        }
        upper[i] = bound.max(0.0);
    }
    upper
}

/// Projected rate-weighted marginal costs: the direction field of the inner
/// loop and the KKT residual at its fixed point. Non-participants are zeroed;
/// at an active box face the infeasible component of the raw gradient is
/// removed.
pub fn g_map(
    s: &DVector<f64>,
    q: f64,
    system: &ClassifiedSystem,
    demand: &InverseDemand,
) -> DVector<f64> {
    let upper = liquidation_bounds(system, q);
    g_with_bounds(s, &upper, system, demand)
}

fn g_with_bounds(
    s: &DVector<f64>,
    upper: &DVector<f64>,
    system: &ClassifiedSystem,
    demand: &InverseDemand,
) -> DVector<f64> {
    let total: f64 = system.participants().iter().map(|&i| s[i]).sum();
    let price = demand.price_raw(total);
    let slope = demand.slope_raw(total);
    let mut g = DVector::zeros(s.len());
    for &i in system.participants() {
        let r = system.rates()[i];
        let raw = (1.0 - (1.0 + r) * (price + s[i] * slope)) / (1.0 + r);
        let mut v = raw;
        if s[i] <= 0.0 {
            v -= raw.max(0.0);
        }
        if s[i] >= upper[i] {
            v += (-raw).max(0.0);
        }
        g[i] = v;
    }
    g
}

/// Jacobian of the raw (unprojected) direction field, restricted to
/// participants:
/// `G = -diag(1_part) ((I + 1) f'(S) + diag(s) 1 f''(S))` with `S` the total
/// sale.
pub fn jacobian(
    s: &DVector<f64>,
    system: &ClassifiedSystem,
    demand: &InverseDemand,
) -> DMatrix<f64> {
    let n = system.n();
    let total: f64 = system.participants().iter().map(|&i| s[i]).sum();
    let slope = demand.slope_raw(total);
    let curvature = demand.curvature_raw(total);
    let mut g = DMatrix::zeros(n, n);
    for &i in system.participants() {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            g[(i, j)] = -((1.0 + delta) * slope + s[i] * curvature);
        }
    }
    g
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub liquidations: DVector<f64>,
    pub iterations: usize,
    /// Sup-norm of the projected gradient at exit.
    pub residual: f64,
    pub fallback_steps: usize,
}

/// Fixed-price equilibrium of the liquidation game at price `q`, starting
/// from zero sales.
pub fn inner_equilibrium(
    q: f64,
    system: &ClassifiedSystem,
    demand: &InverseDemand,
    config: &SolverConfig,
) -> Result<InnerSolution, SolverError> {
    let start = DVector::zeros(system.n());
    inner_equilibrium_from(&start, q, system, demand, config)
}

/// Fixed-price equilibrium from a warm start (clamped into the sale box).
pub fn inner_equilibrium_from(
    start: &DVector<f64>,
    q: f64,
    system: &ClassifiedSystem,
    demand: &InverseDemand,
    config: &SolverConfig,
) -> Result<InnerSolution, SolverError> {
    config.validate()?;
    if start.len() != system.n() {
        return Err(SolverError::BadInitial {
            got: start.len(),
            expected: system.n(),
        });
    }
    let upper = liquidation_bounds(system, q);
    let mut s = DVector::zeros(system.n());
    for &i in system.participants() {
        s[i] = start[i].clamp(0.0, upper[i]);
    }
    let mut fallback_steps = 0usize;
    let mut residual = f64::INFINITY;

    for iter in 0..config.max_inner {
        let v = g_with_bounds(&s, &upper, system, demand);
        residual = v.amax();
        if residual <= config.inner_tol {
            return Ok(InnerSolution {
                liquidations: s,
                iterations: iter,
                residual,
                fallback_steps,
            });
        }

        // G v in closed form: (Gv)_i = -(f' (v_i + V) + f'' s_i V), V = sum v
        let total: f64 = system.participants().iter().map(|&i| s[i]).sum();
        let (slope, curvature) = (demand.slope_raw(total), demand.curvature_raw(total));
        let v_sum: f64 = system.participants().iter().map(|&i| v[i]).sum();
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in system.participants() {
            let gv = -(slope * (v[i] + v_sum) + curvature * s[i] * v_sum);
            num += v[i] * gv;
            den += gv * gv;
        }
        let t = if num > 0.0 && den > f64::MIN_POSITIVE {
            -num / den
        } else {
            fallback_steps += 1;
            -1e-3 * demand.market_cap()
        };
        for &i in system.participants() {
            s[i] = (s[i] + t * v[i]).clamp(0.0, upper[i]);
        }
    }

    Err(SolverError::InnerNonConvergence {
        outer_iter: 0,
        iterations: config.max_inner,
        residual,
    })
}

/// Solves for the joint liquidation-price equilibrium starting from zero
/// sales at price 1.
pub fn solve(
    network: &FinancialNetwork,
    demand: &InverseDemand,
    mode: Mode,
    haircut: Option<f64>,
    config: &SolverConfig,
) -> Result<EquilibriumResult, SolverError> {
    let start = DVector::zeros(network.n());
    solve_impl(network, demand, mode, haircut, config, start, None)
}

/// Solves from explicit initial liquidations; the initial price is the one
/// those sales imply. Useful for multi-start uniqueness checks.
pub fn solve_from(
    network: &FinancialNetwork,
    demand: &InverseDemand,
    mode: Mode,
    haircut: Option<f64>,
    config: &SolverConfig,
    initial: &[f64],
) -> Result<EquilibriumResult, SolverError> {
    if initial.len() != network.n() {
        return Err(SolverError::BadInitial {
            got: initial.len(),
            expected: network.n(),
        });
    }
    let start = DVector::from_row_slice(initial);
    let q0 = demand.price(initial.iter().sum())?;
    solve_impl(network, demand, mode, haircut, config, start, Some(q0))
}

fn solve_impl(
    network: &FinancialNetwork,
    demand: &InverseDemand,
    mode: Mode,
    haircut: Option<f64>,
    config: &SolverConfig,
    mut s: DVector<f64>,
    initial_price: Option<f64>,
) -> Result<EquilibriumResult, SolverError> {
    config.validate()?;
    let system = classify(network, mode, haircut)?;
    let conditions_violated = !validate_uniqueness(
        demand,
        match mode {
            Mode::Collateralized => system.haircut(),
            Mode::Uncollateralized => None,
        },
    )
    .passed();

    let mut q = initial_price.unwrap_or_else(|| demand.price_raw(0.0));
    let mut outer_prices = vec![q];
    let mut outer_iters = 0usize;
    let mut inner_iters_total = 0usize;
    let mut fallback_steps = 0usize;
    let mut damped_steps = 0usize;
    let mut price_residual = 0.0;

    if system.participants().is_empty() {
        s.fill(0.0);
        q = demand.price_raw(0.0);
        outer_prices.push(q);
    } else {
        // Plain fixed-point iteration while it contracts (always, under the
        // uniqueness conditions). When an iterate stops improving — possible
        // with a tiny haircut, where the collateral bound reacts steeply to
        // the price — damp the update; the fixed point is unchanged.
        let price_floor = demand.price_raw(demand.market_cap()).max(f64::MIN_POSITIVE);
        let mut damping = 1.0f64;
        let mut prev_residual = f64::INFINITY;
        let mut converged = false;
        for k in 1..=config.max_outer {
            outer_iters = k;
            let inner = inner_equilibrium_from(&s, q, &system, demand, config).map_err(|e| {
                match e {
                    SolverError::InnerNonConvergence {
                        iterations,
                        residual,
                        ..
                    } => SolverError::InnerNonConvergence {
                        outer_iter: k,
                        iterations,
                        residual,
                    },
                    other => other,
                }
            })?;
            inner_iters_total += inner.iterations;
            fallback_steps += inner.fallback_steps;
            s = inner.liquidations;
            let implied = demand.price_raw(s.sum());
            price_residual = (implied - q).abs();
            outer_prices.push(implied);
            if price_residual <= config.outer_tol {
                q = implied;
                converged = true;
                break;
            }
            if price_residual >= prev_residual {
                damping = (damping * 0.5).max(1e-3);
                damped_steps += 1;
            }
            prev_residual = price_residual;
            q = (q + damping * (implied - q)).clamp(price_floor, 1.0);
        }
        if !converged {
            return Err(SolverError::OuterNonConvergence {
                iterations: config.max_outer,
                residual: price_residual,
            });
        }
    }

    // assemble the result at (s, q)
    let n = network.n();
    let mut borrowing = vec![0.0; n];
    let mut regimes = vec![BankRegime::NoAction; n];
    let mut negative_equity = Vec::new();
    let tiny = 1e-12 * demand.market_cap().max(1.0);
    for i in 0..n {
        match system.cases()[i] {
            CaseLabel::I => regimes[i] = BankRegime::Insolvent,
            CaseLabel::II => regimes[i] = BankRegime::NoAction,
            CaseLabel::III if mode == Mode::Collateralized => {
                regimes[i] = BankRegime::TakenOver;
            }
            _ => {
                let h = system.shortfalls()[i];
                let ell = (h - s[i] * q).max(0.0);
                borrowing[i] = ell;
                regimes[i] = if s[i] <= tiny {
                    BankRegime::PureBorrow
                } else if ell <= 1e-9 * h.max(1.0) {
                    BankRegime::LiquidateOnly
                } else {
                    BankRegime::Mixed
                };
                if ell > system.holdings()[i] - s[i] + tiny {
                    negative_equity.push(i);
                }
            }
        }
    }
    let kkt = g_map(&s, q, &system, demand).amax();

    Ok(EquilibriumResult {
        mode,
        price: q,
        liquidations: s.iter().copied().collect(),
        borrowing,
        payments: system.payments().iter().copied().collect(),
        cases: system.cases().to_vec(),
        regimes,
        outer_iters,
        inner_iters_total,
        kkt_residual: kkt,
        price_residual,
        conditions_violated,
        fallback_steps,
        damped_steps,
        negative_equity,
        outer_prices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn single_column_network(
        external: &[f64],
        liquid: &[f64],
        illiquid: &[f64],
        rates: &[f64],
    ) -> FinancialNetwork {
        let n = external.len();
        let mut liabilities = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            liabilities[(i, 0)] = external[i];
        }
        FinancialNetwork::new(
            liabilities,
            DVector::from_row_slice(liquid),
            DVector::from_row_slice(illiquid),
            DVector::from_row_slice(rates),
        )
        .unwrap()
    }

    /// Two stressed banks, shortfalls 4 and 2, holdings 5 each, rates 12%
    /// and 8%, linear impact 1/21.
    fn two_bank() -> (FinancialNetwork, InverseDemand) {
        let net = single_column_network(
            &[4.0, 2.0],
            &[0.0, 0.0],
            &[5.0, 5.0],
            &[0.12, 0.08],
        );
        let f = InverseDemand::linear(1.0 / 21.0, 10.0).unwrap();
        (net, f)
    }

    #[test]
    fn g_map_at_zero_sales() {
        let (net, f) = two_bank();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let g = g_map(&DVector::zeros(2), 1.0, &sys, &f);
        assert_relative_eq!(g[0], -0.12 / 1.12, epsilon = 1e-15);
        assert_relative_eq!(g[1], -0.08 / 1.08, epsilon = 1e-15);
    }

    #[test]
    fn g_map_zeroes_non_participants() {
        let net = single_column_network(
            &[4.0, 0.0],
            &[0.0, 5.0],
            &[5.0, 5.0],
            &[0.1, 0.1],
        );
        let f = InverseDemand::linear(1.0 / 21.0, 10.0).unwrap();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let g = g_map(&DVector::zeros(2), 1.0, &sys, &f);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn g_map_vanishes_at_stationary_point() {
        let (net, f) = two_bank();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let s = DVector::from_row_slice(&[53.0 / 54.0, 31.0 / 108.0]);
        let g = g_map(&s, 1.0, &sys, &f);
        assert!(g.amax() < 1e-14);
    }

    #[test]
    fn jacobian_linear_two_participants() {
        let (net, f) = two_bank();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let g = jacobian(&DVector::from_row_slice(&[1.0, 1.0]), &sys, &f);
        let alpha = 1.0 / 21.0;
        assert_relative_eq!(g[(0, 0)], 2.0 * alpha, epsilon = 1e-15);
        assert_relative_eq!(g[(0, 1)], alpha, epsilon = 1e-15);
        assert_relative_eq!(g[(1, 0)], alpha, epsilon = 1e-15);
        assert_relative_eq!(g[(1, 1)], 2.0 * alpha, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_zero_without_participants() {
        let net = single_column_network(&[1.0], &[5.0], &[2.0], &[0.1]);
        let f = InverseDemand::linear(0.01, 10.0).unwrap();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let g = jacobian(&DVector::zeros(1), &sys, &f);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inner_equilibrium_interior_point() {
        let (net, f) = two_bank();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let sol = inner_equilibrium(1.0, &sys, &f, &SolverConfig::default()).unwrap();
        // simultaneous stationarity under linear impact is a 2x2 linear
        // system: S + s_i = 21 r_i/(1+r_i) with S = s_1 + s_2, giving
        // 3S = 9/4 + 14/9 and the components below
        assert_relative_eq!(sol.liquidations[0], 53.0 / 54.0, epsilon = 1e-8);
        assert_relative_eq!(sol.liquidations[1], 31.0 / 108.0, epsilon = 1e-8);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn inner_equilibrium_no_participants() {
        let net = single_column_network(&[1.0], &[5.0], &[2.0], &[0.1]);
        let f = InverseDemand::linear(0.01, 10.0).unwrap();
        let sys = classify(&net, Mode::Uncollateralized, None).unwrap();
        let sol = inner_equilibrium(1.0, &sys, &f, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.liquidations.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn solve_two_bank_joint_equilibrium() {
        let (net, f) = two_bank();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        assert_relative_eq!(res.liquidations[0], 53.0 / 54.0, epsilon = 1e-8);
        assert_relative_eq!(res.liquidations[1], 31.0 / 108.0, epsilon = 1e-8);
        assert_relative_eq!(res.price, 2131.0 / 2268.0, epsilon = 1e-8);
        assert_relative_eq!(res.borrowing[0], 3.0778055392252925, epsilon = 1e-7);
        assert_relative_eq!(res.borrowing[1], 1.7303016199621137, epsilon = 1e-7);
        assert_eq!(res.regimes, vec![BankRegime::Mixed, BankRegime::Mixed]);
        assert!(!res.conditions_violated);
        assert!(res.kkt_residual <= 1e-9);
        // budget identity: s q + borrowing = shortfall for participants
        for (i, h) in [4.0, 2.0].iter().enumerate() {
            assert_relative_eq!(
                res.liquidations[i] * res.price + res.borrowing[i],
                *h,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn solve_all_case_two_short_circuits() {
        let net = single_column_network(
            &[1.0, 2.0],
            &[5.0, 5.0],
            &[2.0, 2.0],
            &[0.1, 0.1],
        );
        let f = InverseDemand::linear(0.01, 10.0).unwrap();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        assert_eq!(res.price, 1.0);
        assert!(res.liquidations.iter().all(|&s| s == 0.0));
        assert!(res.borrowing.iter().all(|&b| b == 0.0));
        assert_eq!(res.outer_iters, 0);
    }

    #[test]
    fn solve_from_warm_starts_agree() {
        let (net, f) = two_bank();
        let config = SolverConfig::default();
        let reference =
            solve(&net, &f, Mode::Uncollateralized, None, &config).unwrap();
        for s1 in [0.0, 2.5, 5.0] {
            for s2 in [0.0, 2.5, 5.0] {
                let res =
                    solve_from(&net, &f, Mode::Uncollateralized, None, &config, &[s1, s2]).unwrap();
                assert_relative_eq!(res.price, reference.price, epsilon = 1e-8);
                assert_relative_eq!(
                    res.liquidations[0],
                    reference.liquidations[0],
                    epsilon = 1e-7
                );
                assert_relative_eq!(
                    res.liquidations[1],
                    reference.liquidations[1],
                    epsilon = 1e-7
                );
            }
        }
    }

    #[test]
    fn solve_flags_condition_violations() {
        let net = single_column_network(&[2.0], &[0.0], &[5.0], &[0.05]);
        // alpha beyond 1/(2M): uniqueness bound fails but the point solves
        let f = InverseDemand::linear(0.08, 10.0).unwrap();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        assert!(res.conditions_violated);
        assert!(res.price > 0.0 && res.price <= 1.0);
    }

    #[test]
    fn solve_collateralized_caps_sales() {
        // one bank nearly at the solvency boundary: the collateral cap binds
        let net = single_column_network(&[4.9], &[0.0], &[5.0], &[0.5]);
        let f = InverseDemand::linear(1.0 / 21.0, 10.0).unwrap();
        let config = SolverConfig::default();
        let uncoll = solve(&net, &f, Mode::Uncollateralized, None, &config).unwrap();
        let coll = solve(&net, &f, Mode::Collateralized, Some(0.01), &config).unwrap();
        assert!(coll.liquidations[0] < uncoll.liquidations[0]);
        assert!(coll.price >= uncoll.price - 1e-9);
        // collateral feasibility at the clearing price
        let (a, h) = (5.0, 4.9);
        assert!(coll.liquidations[0] * (1.0 - coll.price) <= a - h + config.inner_tol);
    }

    #[test]
    fn solve_collateralized_takeover_excluded() {
        // fails the stress test: taken over, nothing sold, price stays 1
        let net = single_column_network(&[1.99], &[0.0], &[2.0], &[0.05]);
        let f = InverseDemand::linear(0.01, 10.0).unwrap();
        let res = solve(&net, &f, Mode::Collateralized, Some(0.01), &SolverConfig::default())
            .unwrap();
        assert_eq!(res.cases[0], CaseLabel::III);
        assert_eq!(res.regimes[0], BankRegime::TakenOver);
        assert_eq!(res.liquidations[0], 0.0);
        assert_eq!(res.price, 1.0);
        assert_eq!(res.payments[0], 1.99);
    }

    #[test]
    fn solve_case_one_pays_nothing_and_sells_nothing() {
        let net = single_column_network(&[10.0, 1.0], &[1.0, 5.0], &[2.0, 2.0], &[0.1, 0.1]);
        let f = InverseDemand::linear(0.01, 10.0).unwrap();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        assert_eq!(res.cases[0], CaseLabel::I);
        assert_eq!(res.regimes[0], BankRegime::Insolvent);
        assert_eq!(res.payments[0], 0.0);
        assert_eq!(res.liquidations[0], 0.0);
    }

    #[test]
    fn solve_flags_negative_equity() {
        // a rate-averse bank sells out entirely and still borrows: book
        // equity after the trade is negative, which the result flags
        let net = single_column_network(&[0.95], &[0.0], &[1.0], &[2.0]);
        let f = InverseDemand::linear(0.2, 1.0).unwrap();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        assert_relative_eq!(res.liquidations[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(res.price, 0.8, epsilon = 1e-9);
        assert_relative_eq!(res.borrowing[0], 0.15, epsilon = 1e-9);
        assert_eq!(res.negative_equity, vec![0]);
    }

    #[test]
    fn pure_borrowing_regime_label() {
        // high rate pushes the stationary point interior; a *low* rate with a
        // depressed price from other sellers makes borrowing strictly better
        let net = single_column_network(
            &[6.0, 3.0],
            &[0.0, 0.0],
            &[8.0, 4.0],
            &[0.02, 0.9],
        );
        let f = InverseDemand::linear(0.09, 12.0).unwrap();
        let res = solve(&net, &f, Mode::Uncollateralized, None, &SolverConfig::default()).unwrap();
        // bank 0 faces rate 2%: once the price falls below 1/1.02 it stops selling
        assert_eq!(res.regimes[0], BankRegime::PureBorrow);
        assert_relative_eq!(res.borrowing[0], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let (net, f) = two_bank();
        let bad = SolverConfig {
            outer_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&net, &f, Mode::Uncollateralized, None, &bad),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn bad_initial_length_rejected() {
        let (net, f) = two_bank();
        assert!(matches!(
            solve_from(
                &net,
                &f,
                Mode::Uncollateralized,
                None,
                &SolverConfig::default(),
                &[0.0]
            ),
            Err(SolverError::BadInitial { .. })
        ));
    }
}
