//! Shared oracles and generators for the integration suites.
//!
//! Everything here is deliberately independent of the solver internals:
//! brute-force grid minimization, alternating best responses, and seeded
//! random instances.

use firesale::demand::InverseDemand;
use firesale::network::FinancialNetwork;
use firesale::{BalanceSheetRow, SymmetricScenario, Mode};
use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

/// Argmin of `cost` over an inclusive uniform grid on `[lo, hi]`.
pub fn grid_argmin(lo: f64, hi: f64, points: usize, cost: impl Fn(f64) -> f64) -> f64 {
    let mut best_s = lo;
    let mut best_cost = f64::INFINITY;
    for k in 0..=points {
        let s = lo + (hi - lo) * k as f64 / points as f64;
        let c = cost(s);
        if c < best_cost {
            best_cost = c;
            best_s = s;
        }
    }
    best_s
}

/// Raw funding cost of one bank: sale markdown plus interest on whatever
/// part of the shortfall the sale does not cover.
pub fn funding_cost(s: f64, others: f64, shortfall: f64, rate: f64, demand: &InverseDemand) -> f64 {
    let price = demand.price(others + s).expect("cost evaluated inside the tradable range");
    s * (1.0 - price) + rate * (shortfall - s * price).max(0.0)
}

/// Joint equilibrium by alternating brute-force best responses on a grid
/// over `[0, a_i]` per bank. Runs until no bank moves its grid point, or
/// `max_rounds`.
pub fn alternating_best_response(
    holdings: &[f64],
    shortfalls: &[f64],
    rates: &[f64],
    demand: &InverseDemand,
    points: usize,
    max_rounds: usize,
) -> Vec<f64> {
    let n = holdings.len();
    let mut s = vec![0.0; n];
    for _ in 0..max_rounds {
        let mut moved = false;
        for i in 0..n {
            let others: f64 = s.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
            let next = grid_argmin(0.0, holdings[i], points, |cand| {
                funding_cost(cand, others, shortfalls[i], rates[i], demand)
            });
            if (next - s[i]).abs() > 1e-12 {
                moved = true;
            }
            s[i] = next;
        }
        if !moved {
            break;
        }
    }
    s
}

pub struct RandomInstance {
    pub network: FinancialNetwork,
    pub demand: InverseDemand,
    pub haircut: f64,
}

/// A stressed interbank network with linear impact inside the uniqueness
/// region for both borrowing regimes.
///
/// Every bank is kept book-solvent: a fundamentally insolvent bank pays
/// partially in the fire-sale model but nothing under the borrowing
/// regimes, which makes the regimes incomparable. Holdings are topped up
/// to rule that out.
pub fn random_network(rng: &mut ChaCha8Rng) -> RandomInstance {
    let n = rng.random_range(2..=20usize);
    let mut liabilities = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        liabilities[(i, 0)] = rng.random_range(0.5..6.0);
        for j in 0..n {
            if j != i && rng.random_bool(0.35) {
                liabilities[(i, j + 1)] = rng.random_range(0.1..2.5);
            }
        }
    }
    let liquid = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
    let mut illiquid = DVector::from_fn(n, |_, _| rng.random_range(1.0..6.0));
    let rates = DVector::from_fn(n, |_, _| rng.random_range(0.02..0.3));
    for i in 0..n {
        let total: f64 = liabilities.row(i).sum();
        let incoming: f64 = (0..n).map(|j| liabilities[(j, i + 1)]).sum();
        let shortfall = total - liquid[i] - incoming;
        if shortfall > illiquid[i] {
            illiquid[i] = shortfall + 0.25;
        }
    }
    let market_cap = illiquid.sum();
    let alpha = rng.random_range(0.05..0.35) / (2.0 * market_cap);
    let haircut = rng.random_range(market_cap * alpha + 0.08..0.9);
    let network = FinancialNetwork::new(liabilities, liquid, illiquid, rates).unwrap();
    let demand = InverseDemand::linear(alpha, market_cap).unwrap();
    RandomInstance {
        network,
        demand,
        haircut,
    }
}

/// A valid symmetric scenario with every bank participating.
pub fn random_symmetric(rng: &mut ChaCha8Rng, mode: Mode) -> SymmetricScenario {
    let n = rng.random_range(2..=100usize);
    let holdings = rng.random_range(0.5..2.0);
    let shortfall = match mode {
        Mode::Uncollateralized => holdings * rng.random_range(0.05..0.98),
        Mode::Collateralized => holdings * rng.random_range(0.05..0.9),
    };
    let market_cap = n as f64 * holdings;
    let alpha = rng.random_range(0.1..0.95) / (2.0 * market_cap);
    let haircut = match mode {
        Mode::Collateralized => {
            let cap = 1.0 - shortfall / holdings;
            Some(rng.random_range(0.2 * cap..0.95 * cap))
        }
        Mode::Uncollateralized => None,
    };
    SymmetricScenario {
        n,
        shortfall,
        holdings,
        rate: rng.random_range(0.0..1.0),
        alpha,
        haircut,
        mode,
    }
}

/// EBA-style aggregate rows: thin capital, mostly illiquid external assets,
/// interbank books around a fifth of the balance sheet.
pub fn synthetic_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<BalanceSheetRow> {
    (0..n)
        .map(|i| {
            let total_assets = rng.random_range(30.0..2000.0);
            let interbank = total_assets * rng.random_range(0.15..0.25);
            let capital = total_assets * rng.random_range(0.02..0.05);
            let tier1 = rng.random_range(0.02..0.08);
            BalanceSheetRow {
                bank_id: format!("B{i:03}"),
                total_assets,
                capital,
                interbank_liabilities: interbank,
                tier1_ratio: tier1,
            }
        })
        .collect()
}
