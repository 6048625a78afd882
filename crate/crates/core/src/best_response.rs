//! A single bank's optimal liquidation given aggregate sales by the others.
//!
//! A stressed bank holding `a` shares with liquid shortfall `h` and borrowing
//! rate `r` minimizes
//!
//! ```text
//! cost(s) = s (1 - f(x + s)) + r (h - s f(x + s))^+
//! ```
//!
//! over `s in [0, a]`, where `x` is everyone else's aggregate sale. The
//! minimizer is assembled from three scalar roots:
//!
//! * `liquidation_only_root` — smallest `s` raising the full shortfall from
//!   sales alone;
//! * `interior_stationary` — the sale quantity where the marginal loss from
//!   selling equals the marginal interest saved;
//! * `collateral_cap` — the largest sale compatible with keeping the loan
//!   covered by the remaining holdings at book value.
//!
//! Each root may fail to exist on the tradable range, encoded as an infinite
//! [`ExtendedShares`].

use serde::Serialize;
use thiserror::Error;

use crate::demand::{DemandError, DemandKind, InverseDemand};
use crate::network::Mode;
use crate::roots;

/// Absolute root tolerance in shares, relative to the market cap.
const ROOT_TOL_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BestResponseError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("sale quantity {quantity} outside [0, {upper}]")]
    Domain { quantity: f64, upper: f64 },
    #[error("shortfall must be positive, got {0}")]
    NonPositiveShortfall(f64),
    #[error("collateral cap needs holdings >= shortfall, got a = {holdings}, h = {shortfall}")]
    CollateralShortfall { holdings: f64, shortfall: f64 },
    #[error("bank is not a participant: {reason}")]
    NotParticipant { reason: String },
    #[error("price cap must lie in (0, 1], got {0}")]
    InvalidPriceCap(f64),
    #[error("collateralized best response requires a haircut in (0, 1), got {0:?}")]
    InvalidHaircut(Option<f64>),
}

/// A nonnegative share quantity where infinity encodes "no solution exists".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtendedShares(f64);

impl ExtendedShares {
    pub const INFINITE: ExtendedShares = ExtendedShares(f64::INFINITY);

    /// Wraps a finite nonnegative quantity.
    ///
    /// Panics on negative, NaN, or infinite input; use [`INFINITE`] for the
    /// no-solution sentinel.
    ///
    /// [`INFINITE`]: ExtendedShares::INFINITE
    pub fn finite(value: f64) -> Self {
        assert!(
            value.is_finite() && value >= 0.0,
            "extended shares must be finite and nonnegative, got {value}"
        );
        ExtendedShares(value)
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Underlying value; `f64::INFINITY` for the sentinel.
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn min(self, other: ExtendedShares) -> ExtendedShares {
        if self.0 <= other.0 { self } else { other }
    }
}

impl std::fmt::Display for ExtendedShares {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for ExtendedShares {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(self.0)
        }
    }
}

/// Funding cost of selling `s` shares: sale markdown plus interest on the
/// borrowed remainder of the shortfall.
pub fn objective(
    sold: f64,
    others_sold: f64,
    shortfall: f64,
    rate: f64,
    demand: &InverseDemand,
) -> Result<f64, BestResponseError> {
    let m = demand.market_cap();
    let slack = 1e-9 * m;
    if !(sold.is_finite() && sold >= -slack) {
        return Err(BestResponseError::Domain {
            quantity: sold,
            upper: m,
        });
    }
    if !(others_sold.is_finite() && others_sold >= -slack) {
        return Err(BestResponseError::Domain {
            quantity: others_sold,
            upper: m,
        });
    }
    let price = demand.price(others_sold + sold)?;
    Ok(sold * (1.0 - price) + rate * (shortfall - sold * price).max(0.0))
}

/// Smallest `s >= 0` with `s f(x + s) = h`: covering the whole shortfall by
/// liquidation alone. Infinite when even selling out to the market cap
/// raises less than `h`.
pub fn liquidation_only_root(
    others_sold: f64,
    shortfall: f64,
    demand: &InverseDemand,
) -> Result<ExtendedShares, BestResponseError> {
    if !shortfall.is_finite() || shortfall <= 0.0 {
        return Err(BestResponseError::NonPositiveShortfall(shortfall));
    }
    let m = demand.market_cap();
    check_offset(others_sold, m)?;
    let x = others_sold.clamp(0.0, m);
    let room = m - x;
    let tol = ROOT_TOL_REL * m;

    if let DemandKind::Linear { alpha } = *demand.kind() {
        // alpha s^2 - (1 - alpha x) s + h = 0, smaller root
        let b = 1.0 - alpha * x;
        let disc = b * b - 4.0 * alpha * shortfall;
        if disc < 0.0 {
            return Ok(ExtendedShares::INFINITE);
        }
        let root = (b - disc.sqrt()) / (2.0 * alpha);
        return Ok(if root <= room + tol {
            ExtendedShares::finite(root.clamp(0.0, room))
        } else {
            ExtendedShares::INFINITE
        });
    }

    let revenue = |s: f64| s * demand.price_raw(x + s) - shortfall;
    if revenue(room) < 0.0 {
        return Ok(ExtendedShares::INFINITE);
    }
    Ok(ExtendedShares::finite(roots::bisect(revenue, 0.0, room, tol)))
}

/// Sale quantity equating the marginal sale loss with the marginal interest
/// saved: the root of `1 - (1 + r)(f(x + s) + s f'(x + s))`. Infinite when
/// no such point exists on the tradable range.
pub fn interior_stationary(
    others_sold: f64,
    rate: f64,
    demand: &InverseDemand,
) -> Result<ExtendedShares, BestResponseError> {
    let m = demand.market_cap();
    check_offset(others_sold, m)?;
    let x = others_sold.clamp(0.0, m);
    let room = m - x;

    if let DemandKind::Linear { alpha } = *demand.kind() {
        let root = (rate / (1.0 + rate) - alpha * x) / (2.0 * alpha);
        return Ok(if root >= 0.0 && root <= room {
            ExtendedShares::finite(root)
        } else {
            ExtendedShares::INFINITE
        });
    }

    // marginal revenue f + s f' falls strictly, so the residual is increasing
    let residual = |s: f64| {
        1.0 - (1.0 + rate) * (demand.price_raw(x + s) + s * demand.slope_raw(x + s))
    };
    if residual(0.0) > 0.0 || residual(room) < 0.0 {
        return Ok(ExtendedShares::INFINITE);
    }
    let derivative = |s: f64| {
        -(1.0 + rate) * (2.0 * demand.slope_raw(x + s) + s * demand.curvature_raw(x + s))
    };
    Ok(ExtendedShares::finite(roots::newton_bisect(
        residual, derivative, 0.0, room, 1e-13,
    )))
}

/// Largest sale keeping the loan collateralized: the root of
/// `s (1 - f(x + s)) = a - h`. Requires `a >= h`; infinite when the markdown
/// never reaches `a - h` on the tradable range.
pub fn collateral_cap(
    others_sold: f64,
    holdings: f64,
    shortfall: f64,
    demand: &InverseDemand,
) -> Result<ExtendedShares, BestResponseError> {
    if holdings < shortfall {
        return Err(BestResponseError::CollateralShortfall {
            holdings,
            shortfall,
        });
    }
    let m = demand.market_cap();
    check_offset(others_sold, m)?;
    let x = others_sold.clamp(0.0, m);
    let room = m - x;
    let headroom = holdings - shortfall;
    let tol = ROOT_TOL_REL * m;
    if headroom == 0.0 {
        return Ok(ExtendedShares::finite(0.0));
    }

    if let DemandKind::Linear { alpha } = *demand.kind() {
        // alpha s^2 + alpha x s - headroom = 0, positive root
        let disc = x * x + 4.0 * headroom / alpha;
        let root = 0.5 * (-x + disc.sqrt());
        return Ok(if root <= room + tol {
            ExtendedShares::finite(root.clamp(0.0, room))
        } else {
            ExtendedShares::INFINITE
        });
    }

    let markdown = |s: f64| s * (1.0 - demand.price_raw(x + s)) - headroom;
    if markdown(room) < 0.0 {
        return Ok(ExtendedShares::INFINITE);
    }
    Ok(ExtendedShares::finite(roots::bisect(markdown, 0.0, room, tol)))
}

/// The bank's optimal sale quantity.
///
/// Pure borrowing (zero sales) whenever the prevailing price is already
/// below `1 / (1 + r)`. Otherwise the interior stationary point clipped by
/// the liquidation-only root and the holdings, plus the collateral cap in
/// collateralized mode.
///
/// With `price_cap = Some(q)` the selector solves the price-parameterized
/// problem used inside the equilibrium solver: the shortfall constraint
/// becomes `s <= h / q` and the collateral constraint `s <= (a - h)/(1 - q)`
/// (inactive at `q = 1`).
#[allow(clippy::too_many_arguments)]
pub fn best_response(
    others_sold: f64,
    holdings: f64,
    shortfall: f64,
    rate: f64,
    demand: &InverseDemand,
    mode: Mode,
    price_cap: Option<f64>,
    haircut: Option<f64>,
) -> Result<f64, BestResponseError> {
    if !shortfall.is_finite() || shortfall <= 0.0 {
        return Err(BestResponseError::NotParticipant {
            reason: format!("shortfall {shortfall} is not positive"),
        });
    }
    if mode == Mode::Collateralized {
        let nu = match haircut {
            Some(nu) if nu > 0.0 && nu < 1.0 => nu,
            other => return Err(BestResponseError::InvalidHaircut(other)),
        };
        if holdings * (1.0 - nu) < shortfall {
            return Err(BestResponseError::NotParticipant {
                reason: format!(
                    "fails the stress test: holdings {holdings} at haircut {nu} cannot cover shortfall {shortfall}"
                ),
            });
        }
    }
    if let Some(q) = price_cap
        && !(q.is_finite() && q > 0.0 && q <= 1.0)
    {
        return Err(BestResponseError::InvalidPriceCap(q));
    }

    if demand.price(others_sold)? < 1.0 / (1.0 + rate) {
        return Ok(0.0);
    }

    let stationary = interior_stationary(others_sold, rate, demand)?;
    let upper = match price_cap {
        Some(q) => {
            let mut bound = ExtendedShares::finite(holdings.min(shortfall / q));
            if mode == Mode::Collateralized && q < 1.0 {
                bound = bound.min(ExtendedShares::finite((holdings - shortfall) / (1.0 - q)));
            }
            bound
        }
        None => {
            let mut bound =
                liquidation_only_root(others_sold, shortfall, demand)?.min(ExtendedShares::finite(holdings));
            if mode == Mode::Collateralized {
                bound = bound.min(collateral_cap(others_sold, holdings, shortfall, demand)?);
            }
            bound
        }
    };
    let chosen = stationary.min(upper);
    debug_assert!(chosen.is_finite(), "upper bound always finite");
    Ok(chosen.value())
}

fn check_offset(others_sold: f64, market_cap: f64) -> Result<(), BestResponseError> {
    let slack = 1e-9 * market_cap;
    if !(others_sold.is_finite() && others_sold >= -slack && others_sold <= market_cap + slack) {
        return Err(BestResponseError::Domain {
            quantity: others_sold,
            upper: market_cap,
        });
    }
    Ok(())
}
