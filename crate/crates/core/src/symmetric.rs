//! Closed-form equilibria for fully symmetric systems under linear impact.
//!
//! When all banks share the same shortfall, holdings, and rate, the
//! equilibrium liquidation solves one of three scalar equations, picked by
//! comparing the candidate quantities:
//!
//! * `sL` — the smaller root of `s (1 - alpha n s) = h`, covering the
//!   shortfall from sales alone;
//! * `s0 = r / (alpha (n+1)(1+r))` — the stationary mix of selling and
//!   borrowing;
//! * `sb = sqrt((a - h)/(alpha n))` — the collateral cap.
//!
//! These closed forms are the independent oracle used to validate the
//! general solver, and they back the `symmetric` CLI verb.

use serde::Serialize;
use thiserror::Error;

use crate::demand::{DemandError, InverseDemand};
use crate::network::{FinancialNetwork, Mode, NetworkError};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Error)]
pub enum SymmetricError {
    #[error("parameter `{name}` invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("collateralized mode requires a haircut in (0, 1), got {0:?}")]
    InvalidHaircut(Option<f64>),
    #[error(
        "banks are fundamentally insolvent: shortfall {shortfall} exceeds holdings {holdings}"
    )]
    FundamentallyInsolvent { shortfall: f64, holdings: f64 },
    #[error("banks need no action: shortfall {shortfall} is not positive")]
    NoActionRequired { shortfall: f64 },
    #[error(
        "banks fail the stress test: holdings {holdings} at haircut {haircut} cannot cover shortfall {shortfall}"
    )]
    StressTestFailed {
        holdings: f64,
        shortfall: f64,
        haircut: f64,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// A system of `n` identical banks under linear price impact.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymmetricScenario {
    pub n: usize,
    /// Common liquid shortfall `h`.
    pub shortfall: f64,
    /// Common illiquid holding `a`.
    pub holdings: f64,
    /// Common borrowing rate `r`.
    pub rate: f64,
    /// Linear impact `alpha`.
    pub alpha: f64,
    pub haircut: Option<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricRegime {
    LiquidateOnly,
    Mixed,
    CollateralCapped,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymmetricSolution {
    /// Liquidation per bank.
    pub liquidation: f64,
    /// Clearing price `1 - alpha n s`.
    pub price: f64,
    pub regime: SymmetricRegime,
}

/// Shortfall levels where the selected regime switches.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SymmetricThresholds {
    /// Below this shortfall, sales alone beat the sell-and-borrow mix.
    pub liquidate_to_mixed: f64,
    /// Above this shortfall, the collateral cap binds before the mix.
    pub mixed_to_cap: f64,
    /// Shortfall where sales alone hit the collateral cap (`a (1 - alpha n a)`).
    pub liquidate_to_cap: f64,
    /// False when `alpha n a >= 1`, where the cap threshold turns negative
    /// and the full liquidation price would not stay positive.
    pub cap_threshold_valid: bool,
}

impl SymmetricScenario {
    pub fn validate(&self) -> Result<(), SymmetricError> {
        let checks: [(&'static str, f64, bool); 4] = [
            ("n", self.n as f64, self.n >= 1),
            ("holdings", self.holdings, self.holdings > 0.0 && self.holdings.is_finite()),
            ("rate", self.rate, self.rate >= 0.0 && self.rate.is_finite()),
            ("alpha", self.alpha, self.alpha > 0.0 && self.alpha.is_finite()),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(SymmetricError::InvalidParameter { name, value });
            }
        }
        if !self.shortfall.is_finite() {
            return Err(SymmetricError::InvalidParameter {
                name: "shortfall",
                value: self.shortfall,
            });
        }
        if self.mode == Mode::Collateralized {
            match self.haircut {
                Some(nu) if nu > 0.0 && nu < 1.0 => {}
                other => return Err(SymmetricError::InvalidHaircut(other)),
            }
        }
        Ok(())
    }

    /// Total shares outstanding, the default market capitalization `n a`.
    pub fn market_cap(&self) -> f64 {
        self.n as f64 * self.holdings
    }

    /// The linear demand curve implied by the scenario.
    pub fn demand(&self) -> Result<InverseDemand, SymmetricError> {
        Ok(InverseDemand::linear(self.alpha, self.market_cap())?)
    }

    /// A network realizing the scenario: each bank owes `h` externally, has
    /// no cash, no interbank links, and holds `a` shares.
    pub fn to_network(&self) -> Result<FinancialNetwork, SymmetricError> {
        self.validate()?;
        let n = self.n;
        let mut liabilities = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            liabilities[(i, 0)] = self.shortfall.max(0.0);
        }
        Ok(FinancialNetwork::new(
            liabilities,
            DVector::zeros(n),
            DVector::from_element(n, self.holdings),
            DVector::from_element(n, self.rate),
        )?)
    }

    /// Checks that every bank lands in the participating case: a positive
    /// shortfall within holdings, passing the stress test in collateralized
    /// mode.
    fn require_participants(&self) -> Result<(), SymmetricError> {
        if self.shortfall > self.holdings {
            return Err(SymmetricError::FundamentallyInsolvent {
                shortfall: self.shortfall,
                holdings: self.holdings,
            });
        }
        if self.shortfall <= 0.0 {
            return Err(SymmetricError::NoActionRequired {
                shortfall: self.shortfall,
            });
        }
        if self.mode == Mode::Collateralized {
            let nu = self.haircut.expect("validated");
            if self.holdings * (1.0 - nu) < self.shortfall {
                return Err(SymmetricError::StressTestFailed {
                    holdings: self.holdings,
                    shortfall: self.shortfall,
                    haircut: nu,
                });
            }
        }
        Ok(())
    }

    /// Per-bank equilibrium liquidation, price, and the selected regime.
    pub fn closed_form(&self) -> Result<SymmetricSolution, SymmetricError> {
        self.validate()?;
        self.require_participants()?;
        let n = self.n as f64;
        let an = self.alpha * n;
        let h = self.shortfall;

        let disc = 1.0 - 4.0 * an * h;
        let s_liq = if disc >= 0.0 {
            (1.0 - disc.sqrt()) / (2.0 * an)
        } else {
            f64::INFINITY
        };
        let s_mix = self.rate / (self.alpha * (n + 1.0) * (1.0 + self.rate));
        let s_cap = match self.mode {
            Mode::Collateralized => ((self.holdings - h) / an).sqrt(),
            Mode::Uncollateralized => f64::INFINITY,
        };

        let s = s_liq.min(s_mix).min(s_cap).min(self.holdings);
        // tie order: sales-only beats the mix beats the cap
        let regime = if s == s_liq {
            SymmetricRegime::LiquidateOnly
        } else if s == s_mix || s == self.holdings {
            SymmetricRegime::Mixed
        } else {
            SymmetricRegime::CollateralCapped
        };
        Ok(SymmetricSolution {
            liquidation: s,
            price: 1.0 - an * s,
            regime,
        })
    }

    /// Regime boundaries as functions of the scenario parameters.
    pub fn thresholds(&self) -> Result<SymmetricThresholds, SymmetricError> {
        self.validate()?;
        let n = self.n as f64;
        let an = self.alpha * n;
        let ratio = 2.0 * n * self.rate / ((1.0 + self.rate) * (n + 1.0));
        let liquidate_to_mixed = (1.0 - (1.0 - ratio) * (1.0 - ratio)) / (4.0 * an);
        let s_mix = self.rate / (self.alpha * (n + 1.0) * (1.0 + self.rate));
        let mixed_to_cap = self.holdings - an * s_mix * s_mix;
        let liquidate_to_cap = self.holdings * (1.0 - an * self.holdings);
        Ok(SymmetricThresholds {
            liquidate_to_mixed,
            mixed_to_cap,
            liquidate_to_cap,
            cap_threshold_valid: an * self.holdings < 1.0,
        })
    }
}
