//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the report.

mod common;

use std::time::Instant;

use common::{
    alternating_best_response, funding_cost, random_network, random_symmetric, synthetic_rows,
};
use firesale::baseline::clear;
use firesale::calibration::network_from_rows;
use firesale::demand::{validate_uniqueness, InverseDemand};
use firesale::network::{classify, FinancialNetwork, Mode};
use firesale::scenario::{run_sweep, Regime, SweepBase, SweepSpec, SweptParameter};
use firesale::solver::{jacobian, solve, solve_from, SolverConfig};
use firesale::symmetric::SymmetricScenario;
use firesale::CaseLabel;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, ok: bool) {
    println!("criterion {criterion}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed");
}

fn tight_config() -> SolverConfig {
    SolverConfig {
        outer_tol: 1e-12,
        inner_tol: 1e-13,
        max_outer: 10_000,
        max_inner: 200_000,
    }
}

fn two_bank_network() -> (FinancialNetwork, InverseDemand) {
    let mut liabilities = DMatrix::zeros(2, 3);
    liabilities[(0, 0)] = 4.0;
    liabilities[(1, 0)] = 2.0;
    let network = FinancialNetwork::new(
        liabilities,
        DVector::zeros(2),
        DVector::from_row_slice(&[5.0, 5.0]),
        DVector::from_row_slice(&[0.12, 0.08]),
    )
    .unwrap();
    let demand = InverseDemand::linear(1.0 / 21.0, 10.0).unwrap();
    (network, demand)
}

/// 1. Solver agrees with the symmetric closed forms to 1e-8 on 200 random
///    scenarios, within 30 seconds.
#[test]
fn criterion_1_symmetric_oracle_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let config = tight_config();
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let mode = if k % 2 == 0 {
            Mode::Uncollateralized
        } else {
            Mode::Collateralized
        };
        let scenario = random_symmetric(&mut rng, mode);
        let oracle = scenario.closed_form().unwrap();
        let network = scenario.to_network().unwrap();
        let demand = scenario.demand().unwrap();
        let res = solve(&network, &demand, mode, scenario.haircut, &config).unwrap();
        worst = worst.max((res.price - oracle.price).abs());
        for &s in &res.liquidations {
            worst = worst.max((s - oracle.liquidation).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-8 && elapsed.as_secs_f64() < 30.0;
    println!("  worst deviation {worst:.3e}, elapsed {:.2?}", elapsed);
    report("1 (symmetric oracle agreement)", ok);
}

/// 2. The 90-bank symmetric benchmark lands on the published point.
#[test]
fn criterion_2_symmetric_benchmark_point() {
    let scenario = SymmetricScenario {
        n: 90,
        shortfall: 1.0,
        holdings: 10.0 / 9.0,
        rate: 0.05,
        alpha: 1.0 / 210.0,
        haircut: None,
        mode: Mode::Uncollateralized,
    };
    let network = scenario.to_network().unwrap();
    let demand = scenario.demand().unwrap();
    assert_eq!(demand.market_cap(), 100.0);
    let res = solve(
        &network,
        &demand,
        Mode::Uncollateralized,
        None,
        &tight_config(),
    )
    .unwrap();
    let price_ok = (res.price - 0.9529043).abs() <= 1e-6;
    let sales_ok = res
        .liquidations
        .iter()
        .all(|&s| (s - 0.109890).abs() <= 1e-6);
    println!(
        "  price {:.9} (target 0.9529043), first sale {:.9} (target 0.109890)",
        res.price, res.liquidations[0]
    );
    report("2 (90-bank symmetric point)", price_ok && sales_ok);
}

/// 3. Two-bank system: 25 warm starts agree pairwise to 1e-6 and match the
///    brute-force alternating best-response oracle to 1e-4.
#[test]
fn criterion_3_two_bank_multistart() {
    let (network, demand) = two_bank_network();
    let config = tight_config();
    let mut points = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let start = [5.0 * i as f64 / 4.0, 5.0 * j as f64 / 4.0];
            let res = solve_from(
                &network,
                &demand,
                Mode::Uncollateralized,
                None,
                &config,
                &start,
            )
            .unwrap();
            points.push((res.liquidations[0], res.liquidations[1], res.price));
        }
    }
    let mut spread: f64 = 0.0;
    for a in &points {
        for b in &points {
            spread = spread
                .max((a.0 - b.0).abs())
                .max((a.1 - b.1).abs())
                .max((a.2 - b.2).abs());
        }
    }
    let oracle = alternating_best_response(
        &[5.0, 5.0],
        &[4.0, 2.0],
        &[0.12, 0.08],
        &demand,
        100_000,
        200,
    );
    let gap = (points[0].0 - oracle[0]).abs().max((points[0].1 - oracle[1]).abs());
    println!("  pairwise spread {spread:.3e}, oracle gap {gap:.3e}");
    report(
        "3 (two-bank multistart + oracle)",
        spread < 1e-6 && gap <= 1e-4,
    );
}

/// 4. No bank can improve its funding cost by more than 1e-7 over a
///    10^4-point deviation grid, on 50 random networks, in both regimes.
#[test]
fn criterion_4_epsilon_nash_certification() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let config = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let instance = random_network(&mut rng);
        assert!(validate_uniqueness(&instance.demand, None).passed());
        assert!(validate_uniqueness(&instance.demand, Some(instance.haircut)).passed());
        for mode in [Mode::Uncollateralized, Mode::Collateralized] {
            let haircut = (mode == Mode::Collateralized).then_some(instance.haircut);
            let res = solve(&instance.network, &instance.demand, mode, haircut, &config).unwrap();
            let system = classify(&instance.network, mode, haircut).unwrap();
            let total: f64 = res.liquidations.iter().sum();
            for &i in system.participants() {
                let own = res.liquidations[i];
                let others = total - own;
                let (a, h, r) = (
                    system.holdings()[i],
                    system.shortfalls()[i],
                    system.rates()[i],
                );
                let upper = a.min(instance.demand.market_cap() - others);
                let collateral_ok = |s: f64| {
                    mode == Mode::Uncollateralized
                        || s * (1.0 - instance.demand.price(others + s).unwrap())
                            <= a - h + 1e-12
                };
                let equilibrium_cost = funding_cost(own, others, h, r, &instance.demand);
                let mut best = equilibrium_cost;
                for k in 0..=10_000 {
                    let s = upper * k as f64 / 10_000.0;
                    if !collateral_ok(s) {
                        continue;
                    }
                    best = best.min(funding_cost(s, others, h, r, &instance.demand));
                }
                worst = worst.max(equilibrium_cost - best);
            }
        }
    }
    println!("  worst grid improvement {worst:.3e}");
    report("4 (epsilon-Nash certification)", worst <= 1e-7);
}

/// 5. Prices order collateralized >= uncollateralized >= fire sale, realized
///    losses the other way around, on the same 50 networks.
#[test]
fn criterion_5_regime_orderings() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let config = tight_config();
    let mut worst_price: f64 = 0.0;
    let mut worst_loss: f64 = 0.0;
    for _ in 0..50 {
        let instance = random_network(&mut rng);
        let uncoll = solve(
            &instance.network,
            &instance.demand,
            Mode::Uncollateralized,
            None,
            &config,
        )
        .unwrap();
        let coll = solve(
            &instance.network,
            &instance.demand,
            Mode::Collateralized,
            Some(instance.haircut),
            &config,
        )
        .unwrap();
        let fire = clear(&instance.network, &instance.demand, &config).unwrap();
        let realized = |sales: &[f64], q: f64| -> f64 { sales.iter().map(|s| s * (1.0 - q)).sum() };
        worst_price = worst_price
            .max(uncoll.price - coll.price)
            .max(fire.price - uncoll.price);
        worst_loss = worst_loss
            .max(realized(&coll.liquidations, coll.price) - realized(&uncoll.liquidations, uncoll.price))
            .max(realized(&uncoll.liquidations, uncoll.price) - realized(&fire.liquidations, fire.price));
    }
    println!("  worst price inversion {worst_price:.3e}, worst loss inversion {worst_loss:.3e}");
    report(
        "5 (regime price and loss ordering)",
        worst_price <= 1e-9 && worst_loss <= 1e-9,
    );
}

/// 6. Synthetic 87-bank study: an impact sweep produces no defaults under
///    either borrowing regime, while fire-sale defaults rise to all banks.
#[test]
fn criterion_6_default_counts_87_banks() {
    let mut rng = ChaCha8Rng::seed_from_u64(87);
    let rows = synthetic_rows(87, &mut rng);
    let (network, sheets) = network_from_rows(&rows, 0.05).unwrap();
    let market_cap: f64 = sheets.illiquid.iter().sum();
    let demand = InverseDemand::linear(0.02 / (2.0 * market_cap), market_cap).unwrap();
    let spec = SweepSpec {
        varied: SweptParameter::Impact,
        lo: 0.02 / (2.0 * market_cap),
        hi: 0.98 / (2.0 * market_cap),
        steps: 20,
        regimes: vec![
            Regime::FireSale,
            Regime::Uncollateralized,
            Regime::Collateralized,
        ],
        base: SweepBase::Network {
            network,
            demand,
            haircut: Some(0.01),
        },
        allow_violations: false,
    };
    let rows = run_sweep(&spec, &SolverConfig::default()).unwrap();
    let mut ok = rows.iter().all(|r| r.converged);
    let mut fire_defaults = Vec::new();
    for row in &rows {
        let metrics = row.metrics.unwrap();
        match row.regime {
            Regime::FireSale => fire_defaults.push(metrics.default_count),
            _ => ok &= metrics.default_count == 0,
        }
    }
    ok &= fire_defaults.windows(2).all(|w| w[1] >= w[0]);
    ok &= *fire_defaults.last().unwrap() == 87;
    println!("  fire-sale default path: {fire_defaults:?}");
    report("6 (87-bank default counts)", ok);
}

/// 7. Numerical analysis checks: finite differences, positive definiteness
///    of the symmetrized Jacobian, outer contraction, and the stationary
///    point's slope bound.
#[test]
fn criterion_7_numerical_checks() {
    let m = 100.0;
    let families = [
        InverseDemand::linear(0.9 / (2.0 * m), m).unwrap(),
        InverseDemand::exponential(0.5 / m, m).unwrap(),
        InverseDemand::hyperbolic(1.7 * m, m).unwrap(),
    ];

    // finite-difference agreement of the analytic derivatives
    let delta = 1e-5 * m;
    let mut fd_ok = true;
    for f in &families {
        for k in 1..=100 {
            let s = m * (k as f64) / 102.0;
            let fd_slope = (f.price(s + delta).unwrap() - f.price(s - delta).unwrap()) / (2.0 * delta);
            let fd_curv = (f.slope(s + delta).unwrap() - f.slope(s - delta).unwrap()) / (2.0 * delta);
            fd_ok &= (fd_slope - f.slope(s).unwrap()).abs() <= 1e-6;
            fd_ok &= (fd_curv - f.curvature(s).unwrap()).abs() <= 1e-6;
        }
    }
    report("7a (finite-difference derivatives)", fd_ok);

    // positive definiteness of G + G^T at random interior points
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut pd_ok = true;
    for f in &families {
        for _ in 0..100 {
            let n = rng.random_range(2..=12usize);
            let mut liabilities = DMatrix::zeros(n, n + 1);
            let mut holdings = DVector::zeros(n);
            for i in 0..n {
                holdings[i] = rng.random_range(2.0..6.0);
                // keep the shortfall inside the holdings so every bank
                // participates
                liabilities[(i, 0)] = holdings[i] * rng.random_range(0.2..0.9);
            }
            let network = FinancialNetwork::new(
                liabilities,
                DVector::zeros(n),
                holdings.clone(),
                DVector::from_fn(n, |_, _| rng.random_range(0.01..0.4)),
            )
            .unwrap();
            let system = classify(&network, Mode::Uncollateralized, None).unwrap();
            assert_eq!(system.participants().len(), n);
            let s = DVector::from_fn(n, |i, _| {
                rng.random_range(0.0..holdings[i].min(m / n as f64) * 0.9)
            });
            let g = jacobian(&s, &system, f);
            let sym = &g + g.transpose();
            let eig = sym.symmetric_eigenvalues();
            pd_ok &= eig.iter().all(|&e| e > 0.0);
        }
    }
    report("7b (positive definite G + G^T)", pd_ok);

    // empirical contraction of the outer price loop under the uniqueness
    // conditions
    let mut rng = ChaCha8Rng::seed_from_u64(778);
    let mut contraction_ok = true;
    let config = SolverConfig::default();
    for _ in 0..30 {
        let instance = random_network(&mut rng);
        assert!(validate_uniqueness(&instance.demand, None).passed());
        let res = solve(
            &instance.network,
            &instance.demand,
            Mode::Uncollateralized,
            None,
            &config,
        )
        .unwrap();
        let deltas: Vec<f64> = res
            .outer_prices
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .collect();
        for w in deltas.windows(2) {
            if w[0] > 1e-13 {
                contraction_ok &= w[1] / w[0] < 1.0;
            }
        }
        contraction_ok &= res.damped_steps == 0;
    }
    report("7c (outer loop contracts)", contraction_ok);

    // finite-difference slope of the interior stationary point in (-1, 0]
    let mut slope_ok = true;
    let mut checked = 0usize;
    let rate = 0.12;
    let delta = 1e-4 * m;
    'outer: for f in &families {
        for k in 1..200 {
            let x = 60.0 * k as f64 / 200.0;
            let lo = firesale::best_response::interior_stationary(x - delta, rate, f).unwrap();
            let hi = firesale::best_response::interior_stationary(x + delta, rate, f).unwrap();
            if lo.is_infinite() || hi.is_infinite() {
                continue;
            }
            let slope = (hi.value() - lo.value()) / (2.0 * delta);
            slope_ok &= slope > -1.0 && slope <= 1e-9;
            checked += 1;
            if checked >= 100 {
                break 'outer;
            }
        }
    }
    assert!(checked >= 100, "not enough interior samples: {checked}");
    report("7d (stationary point slope in (-1, 0])", slope_ok);
}

/// 8. Fire-sale clearing reaches residuals below 1e-8 with monotone
///    iterates on every test network.
#[test]
fn criterion_8_baseline_fixed_points() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(888);
    let mut ok = true;
    // random instances; monotonicity is asserted inside `clear`, a
    // violation surfaces as an error
    for _ in 0..30 {
        let instance = random_network(&mut rng);
        let out = clear(&instance.network, &instance.demand, &config).unwrap();
        ok &= out.payment_residual <= 1e-8
            && out.liquidation_residual <= 1e-8
            && out.price_residual <= 1e-8;
    }
    // symmetric instances
    for _ in 0..20 {
        let scenario = random_symmetric(&mut rng, Mode::Uncollateralized);
        let out = clear(
            &scenario.to_network().unwrap(),
            &scenario.demand().unwrap(),
            &config,
        )
        .unwrap();
        ok &= out.payment_residual <= 1e-8
            && out.liquidation_residual <= 1e-8
            && out.price_residual <= 1e-8;
    }
    // the calibrated 87-bank study at a harsh impact level
    let rows = synthetic_rows(87, &mut rng);
    let (network, sheets) = network_from_rows(&rows, 0.05).unwrap();
    let market_cap: f64 = sheets.illiquid.iter().sum();
    let demand = InverseDemand::linear(0.9 / (2.0 * market_cap), market_cap).unwrap();
    let out = clear(&network, &demand, &config).unwrap();
    ok &= out.payment_residual <= 1e-8
        && out.liquidation_residual <= 1e-8
        && out.price_residual <= 1e-8;
    // everyone under water at this impact: all banks default
    ok &= out.defaults.len() == 87;
    report("8 (baseline fixed-point residuals)", ok);
}

/// Regression guard for the row ordering of results: cases and regimes are
/// reported per bank in input order.
#[test]
fn result_vectors_follow_input_order() {
    let (network, demand) = two_bank_network();
    let res = solve(
        &network,
        &demand,
        Mode::Uncollateralized,
        None,
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(res.cases, vec![CaseLabel::III, CaseLabel::III]);
    assert_eq!(res.liquidations.len(), 2);
}
