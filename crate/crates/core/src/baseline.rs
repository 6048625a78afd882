//! Pure fire-sale clearing: no borrowing, every stressed bank sells.
//!
//! The joint fixed point of three maps — payments
//! `p = pbar ∧ (c + s q + Pi^T p)`, the liquidation rule
//! `s = a ∧ (pbar - c - Pi^T p)^+ / q`, and the price `q = f(sum s)` — is
//! reached by Picard iteration from the unstressed point `(pbar, 1)`. The
//! iteration is monotone: payments and price only fall, sales only rise,
//! which is asserted at every step. Banks ending below their obligations are
//! reported as defaults.

use nalgebra::DVector;
use serde::Serialize;

use crate::demand::InverseDemand;
use crate::network::{relative_liabilities, FinancialNetwork};
use crate::solver::{SolverConfig, SolverError};

/// Tolerance for the monotonicity assertion, relative to the largest
/// obligation.
const MONOTONE_SLACK: f64 = 1e-12;

/// Clearing payments, price, and liquidations of the no-borrowing regime.
#[derive(Debug, Clone, Serialize)]
pub struct ClearingOutcome {
    pub payments: Vec<f64>,
    pub price: f64,
    pub liquidations: Vec<f64>,
    /// Banks paying strictly less than their total obligations.
    pub defaults: Vec<usize>,
    pub iterations: usize,
    /// Fixed-point residuals of the three defining maps at the returned
    /// point.
    pub payment_residual: f64,
    pub liquidation_residual: f64,
    pub price_residual: f64,
}

/// Runs the clearing iteration; `config.outer_tol` is the joint fixed-point
/// tolerance and `config.max_outer` the iteration cap.
pub fn clear(
    network: &FinancialNetwork,
    demand: &InverseDemand,
    config: &SolverConfig,
) -> Result<ClearingOutcome, SolverError> {
    config.validate()?;
    let n = network.n();
    let pbar = network.total_liabilities();
    let cash = network.liquid();
    let holdings = network.illiquid();
    let pi = relative_liabilities(network);

    let scale = pbar.amax().max(1.0);
    let slack = MONOTONE_SLACK * scale;

    let mut payments = pbar.clone();
    let mut sales: DVector<f64> = DVector::zeros(n);
    let mut price = demand.price_raw(0.0);

    for iteration in 1..=config.max_outer {
        let incoming = pi.incoming(&payments);

        // all three maps evaluated at the current point, with the sale and
        // payment maps sharing the same price
        let mut sales_next = DVector::zeros(n);
        for i in 0..n {
            let shortfall = (pbar[i] - cash[i] - incoming[i]).max(0.0);
            sales_next[i] = holdings[i].min(shortfall / price);
        }
        let mut payments_next = DVector::zeros(n);
        for i in 0..n {
            payments_next[i] = pbar[i].min(cash[i] + sales_next[i] * price + incoming[i]);
        }
        let price_next = demand.price_raw(sales_next.sum());

        let payment_residual = (&payments_next - &payments).amax();
        let liquidation_residual = (&sales_next - &sales).amax();
        let price_residual = (price_next - price).abs();

        for i in 0..n {
            if payments_next[i] > payments[i] + slack || sales_next[i] < sales[i] - slack {
                return Err(SolverError::MonotonicityViolation { iteration });
            }
        }
        if price_next > price + slack {
            return Err(SolverError::MonotonicityViolation { iteration });
        }

        let converged = payment_residual <= config.outer_tol
            && liquidation_residual <= config.outer_tol
            && price_residual <= config.outer_tol;

        payments = payments_next;
        sales = sales_next;
        price = price_next;

        if converged {
            let default_tol = 1e-9 * scale;
            let defaults = (0..n)
                .filter(|&i| payments[i] < pbar[i] - default_tol)
                .collect();
            return Ok(ClearingOutcome {
                payments: payments.iter().copied().collect(),
                price,
                liquidations: sales.iter().copied().collect(),
                defaults,
                iterations: iteration,
                payment_residual,
                liquidation_residual,
                price_residual,
            });
        }
    }

    Err(SolverError::OuterNonConvergence {
        iterations: config.max_outer,
        residual: f64::NAN,
    })
}
