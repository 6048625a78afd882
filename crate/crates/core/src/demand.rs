//! Inverse demand curves for the illiquid asset.
//!
//! An [`InverseDemand`] maps the aggregate quantity sold to the market
//! clearing price, normalized so that selling nothing leaves the price at 1.
//! Three families are built in (linear, exponential, hyperbolic); arbitrary
//! curves can be plugged in through [`PriceCurve`]. The validators check the
//! structural properties the equilibrium theory relies on: a decreasing
//! price, increasing and strictly concave sale revenue `s·f(s)`, and the
//! contraction bound that certifies a unique joint equilibrium.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Grid size used by the validators when no explicit size is given.
pub const DEFAULT_VALIDATION_GRID: usize = 10_001;

/// Relative slack allowed when checking quantities against `[0, M]`.
const DOMAIN_SLACK: f64 = 1e-9;

/// A price curve supplied by the caller; must provide analytic first and
/// second derivatives.
pub trait PriceCurve: Send + Sync {
    fn price(&self, sold: f64) -> f64;
    fn slope(&self, sold: f64) -> f64;
    fn curvature(&self, sold: f64) -> f64;
}

#[derive(Clone)]
pub enum DemandKind {
    /// `f(s) = 1 - alpha * s`
    Linear { alpha: f64 },
    /// `f(s) = exp(-alpha * s)`
    Exponential { alpha: f64 },
    /// `f(s) = epsilon / (epsilon + s)`
    Hyperbolic { epsilon: f64 },
    Custom(Arc<dyn PriceCurve>),
}

impl fmt::Debug for DemandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemandKind::Linear { alpha } => write!(f, "Linear {{ alpha: {alpha} }}"),
            DemandKind::Exponential { alpha } => write!(f, "Exponential {{ alpha: {alpha} }}"),
            DemandKind::Hyperbolic { epsilon } => write!(f, "Hyperbolic {{ epsilon: {epsilon} }}"),
            DemandKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("market capitalization must be positive and finite, got {0}")]
    InvalidMarketCap(f64),
    #[error("demand parameter `{name}` must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("quantity {sold} outside the tradable range [0, {market_cap}]")]
    OutOfDomain { sold: f64, market_cap: f64 },
    #[error("cannot parse demand spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
    #[error("operation not supported for custom demand curves")]
    CustomUnsupported,
}

/// Inverse demand function together with the market capitalization `M` that
/// bounds the total quantity ever brought to market.
#[derive(Clone, Debug)]
pub struct InverseDemand {
    kind: DemandKind,
    market_cap: f64,
}

impl InverseDemand {
    pub fn new(kind: DemandKind, market_cap: f64) -> Result<Self, DemandError> {
        if !(market_cap.is_finite() && market_cap > 0.0) {
            return Err(DemandError::InvalidMarketCap(market_cap));
        }
        match kind {
            DemandKind::Linear { alpha } | DemandKind::Exponential { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(DemandError::InvalidParameter {
                        name: "alpha",
                        value: alpha,
                    });
                }
            }
            DemandKind::Hyperbolic { epsilon } => {
                if !(epsilon.is_finite() && epsilon > 0.0) {
                    return Err(DemandError::InvalidParameter {
                        name: "eps",
                        value: epsilon,
                    });
                }
            }
            DemandKind::Custom(_) => {}
        }
        Ok(Self { kind, market_cap })
    }

    pub fn linear(alpha: f64, market_cap: f64) -> Result<Self, DemandError> {
        Self::new(DemandKind::Linear { alpha }, market_cap)
    }

    pub fn exponential(alpha: f64, market_cap: f64) -> Result<Self, DemandError> {
        Self::new(DemandKind::Exponential { alpha }, market_cap)
    }

    pub fn hyperbolic(epsilon: f64, market_cap: f64) -> Result<Self, DemandError> {
        Self::new(DemandKind::Hyperbolic { epsilon }, market_cap)
    }

    pub fn custom(curve: Arc<dyn PriceCurve>, market_cap: f64) -> Result<Self, DemandError> {
        Self::new(DemandKind::Custom(curve), market_cap)
    }

    /// Parses the CLI spec syntax: `linear:alpha=0.004`, `exp:alpha=0.005`,
    /// `hyp:eps=170`.
    pub fn parse(spec: &str, market_cap: f64) -> Result<Self, DemandError> {
        let err = |reason: &str| DemandError::Parse {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (family, rest) = spec
            .split_once(':')
            .ok_or_else(|| err("expected `family:key=value`"))?;
        let (key, value) = rest
            .split_once('=')
            .ok_or_else(|| err("expected `key=value` after the family name"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| err("parameter value is not a number"))?;
        match (family.trim(), key.trim()) {
            ("linear" | "lin", "alpha") => Self::linear(value, market_cap),
            ("exp" | "exponential", "alpha") => Self::exponential(value, market_cap),
            ("hyp" | "hyperbolic", "eps") => Self::hyperbolic(value, market_cap),
            ("linear" | "lin" | "exp" | "exponential", _) => Err(err("expected key `alpha`")),
            ("hyp" | "hyperbolic", _) => Err(err("expected key `eps`")),
            _ => Err(err("unknown family; use `linear`, `exp` or `hyp`")),
        }
    }

    pub fn kind(&self) -> &DemandKind {
        &self.kind
    }

    pub fn market_cap(&self) -> f64 {
        self.market_cap
    }

    /// Same family and market cap with the impact parameter replaced; used by
    /// parameter sweeps.
    pub fn with_impact(&self, value: f64) -> Result<Self, DemandError> {
        match self.kind {
            DemandKind::Linear { .. } => Self::linear(value, self.market_cap),
            DemandKind::Exponential { .. } => Self::exponential(value, self.market_cap),
            DemandKind::Hyperbolic { .. } => Self::hyperbolic(value, self.market_cap),
            DemandKind::Custom(_) => Err(DemandError::CustomUnsupported),
        }
    }

    fn check_domain(&self, sold: f64) -> Result<f64, DemandError> {
        let slack = DOMAIN_SLACK * self.market_cap;
        if !sold.is_finite() || sold < -slack || sold > self.market_cap + slack {
            return Err(DemandError::OutOfDomain {
                sold,
                market_cap: self.market_cap,
            });
        }
        Ok(sold.clamp(0.0, self.market_cap))
    }

    /// Price after `sold` shares hit the market. Errors if `sold` lies
    /// outside `[0, M]` beyond a small numerical slack.
    pub fn price(&self, sold: f64) -> Result<f64, DemandError> {
        Ok(self.price_raw(self.check_domain(sold)?))
    }

    /// First derivative of the price at `sold`.
    pub fn slope(&self, sold: f64) -> Result<f64, DemandError> {
        Ok(self.slope_raw(self.check_domain(sold)?))
    }

    /// Second derivative of the price at `sold`.
    pub fn curvature(&self, sold: f64) -> Result<f64, DemandError> {
        Ok(self.curvature_raw(self.check_domain(sold)?))
    }

    pub(crate) fn price_raw(&self, s: f64) -> f64 {
        match &self.kind {
            DemandKind::Linear { alpha } => 1.0 - alpha * s,
            DemandKind::Exponential { alpha } => (-alpha * s).exp(),
            DemandKind::Hyperbolic { epsilon } => epsilon / (epsilon + s),
            DemandKind::Custom(c) => c.price(s),
        }
    }

    pub(crate) fn slope_raw(&self, s: f64) -> f64 {
        match &self.kind {
            DemandKind::Linear { alpha } => -alpha,
            DemandKind::Exponential { alpha } => -alpha * (-alpha * s).exp(),
            DemandKind::Hyperbolic { epsilon } => {
                let d = epsilon + s;
                -epsilon / (d * d)
            }
            DemandKind::Custom(c) => c.slope(s),
        }
    }

    pub(crate) fn curvature_raw(&self, s: f64) -> f64 {
        match &self.kind {
            DemandKind::Linear { .. } => 0.0,
            DemandKind::Exponential { alpha } => alpha * alpha * (-alpha * s).exp(),
            DemandKind::Hyperbolic { epsilon } => {
                let d = epsilon + s;
                2.0 * epsilon / (d * d * d)
            }
            DemandKind::Custom(c) => c.curvature(s),
        }
    }
}

/// Result of checking one structural clause: the sign of the margin decides,
/// `worst_s` locates the tightest (or violating) point on the grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClauseCheck {
    pub passed: bool,
    pub margin: f64,
    pub worst_s: f64,
}

/// Per-clause report for the structural requirements on an inverse demand
/// curve. For the built-in families the verdicts come from the closed-form
/// parameter thresholds; the grid supplies margins and violation locations,
/// and is the sole evidence for custom curves.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// `f(0) = 1`
    pub unit_price_at_zero: ClauseCheck,
    /// `f` strictly decreasing on `[0, M]`
    pub strictly_decreasing: ClauseCheck,
    /// `f(M) > 0`
    pub positive_at_market_cap: ClauseCheck,
    /// `f'` nondecreasing on `[0, M]`
    pub slope_nondecreasing: ClauseCheck,
    /// `s·f(s)` strictly increasing on `[0, M]`
    pub revenue_increasing: ClauseCheck,
    /// `2 f'(s) + s f''(s) < 0` on `[0, M]`
    pub revenue_strictly_concave: ClauseCheck,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.clauses().iter().all(|(_, c)| c.passed)
    }

    pub fn clauses(&self) -> [(&'static str, ClauseCheck); 6] {
        [
            ("unit_price_at_zero", self.unit_price_at_zero),
            ("strictly_decreasing", self.strictly_decreasing),
            ("positive_at_market_cap", self.positive_at_market_cap),
            ("slope_nondecreasing", self.slope_nondecreasing),
            ("revenue_increasing", self.revenue_increasing),
            ("revenue_strictly_concave", self.revenue_strictly_concave),
        ]
    }

    /// The failing clause with the most negative margin, if any.
    pub fn worst_violation(&self) -> Option<(&'static str, ClauseCheck)> {
        self.clauses()
            .into_iter()
            .filter(|(_, c)| !c.passed)
            .min_by(|a, b| a.1.margin.partial_cmp(&b.1.margin).unwrap())
    }
}

/// Uniqueness conditions for the joint liquidation-price equilibrium:
/// `f'(s) + s f''(s) <= 0` on `[0, M]` and the contraction bound
/// `-M f'(0) < nu ∧ f(M)` (without the haircut term when `nu` is absent).
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub slope_dominates_curvature: ClauseCheck,
    /// `(nu ∧ f(M)) + M f'(0)`; positive iff the contraction bound holds.
    pub margin: f64,
}

impl UniquenessReport {
    pub fn passed(&self) -> bool {
        self.slope_dominates_curvature.passed && self.margin > 0.0
    }
}

fn grid(market_cap: f64, points: usize) -> impl Iterator<Item = f64> {
    let n = points.max(2);
    (0..n).map(move |k| market_cap * k as f64 / (n - 1) as f64)
}

/// Folds `value(s)` over the grid keeping the minimum and its location.
fn grid_min(
    demand: &InverseDemand,
    points: usize,
    value: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut at = 0.0;
    for s in grid(demand.market_cap, points) {
        let v = value(s);
        if v < min {
            min = v;
            at = s;
        }
    }
    (min, at)
}

fn check(passed: bool, margin: f64, worst_s: f64) -> ClauseCheck {
    ClauseCheck {
        passed,
        margin,
        worst_s,
    }
}

/// Checks every structural clause on `[0, M]` using
/// [`DEFAULT_VALIDATION_GRID`] sample points.
pub fn validate_admissibility(demand: &InverseDemand) -> AdmissibilityReport {
    validate_admissibility_with_grid(demand, DEFAULT_VALIDATION_GRID)
}

pub fn validate_admissibility_with_grid(
    demand: &InverseDemand,
    points: usize,
) -> AdmissibilityReport {
    let m = demand.market_cap;

    let f0 = demand.price_raw(0.0);
    let unit_price_at_zero = check((f0 - 1.0).abs() <= 1e-9, -(f0 - 1.0).abs(), 0.0);

    // Pairwise differences catch non-monotonicity of f and of s*f(s).
    let n = points.max(2);
    let step = m / (n - 1) as f64;
    let mut dec_min = f64::INFINITY;
    let mut dec_at = 0.0;
    let mut slope_min = f64::INFINITY;
    let mut slope_at = 0.0;
    let mut rev_min = f64::INFINITY;
    let mut rev_at = 0.0;
    let mut prev_s = 0.0;
    let mut prev_f = f0;
    let mut prev_fp = demand.slope_raw(0.0);
    for k in 1..n {
        let s = step * k as f64;
        let f = demand.price_raw(s);
        let fp = demand.slope_raw(s);
        if prev_f - f < dec_min {
            dec_min = prev_f - f;
            dec_at = s;
        }
        if fp - prev_fp < slope_min {
            slope_min = fp - prev_fp;
            slope_at = s;
        }
        let rev_diff = s * f - prev_s * prev_f;
        if rev_diff < rev_min {
            rev_min = rev_diff;
            rev_at = s;
        }
        prev_s = s;
        prev_f = f;
        prev_fp = fp;
    }

    let fm = demand.price_raw(m);
    let (concave_margin, concave_at) = grid_min(demand, points, |s| {
        -(2.0 * demand.slope_raw(s) + s * demand.curvature_raw(s))
    });

    // Closed-form verdicts for the built-in families; the grid decides for
    // custom curves.
    let (decreasing_ok, slope_ok, revenue_ok, concave_ok) = match demand.kind {
        DemandKind::Linear { alpha } => (true, true, 2.0 * alpha * m < 1.0, true),
        DemandKind::Exponential { alpha } => (true, true, alpha * m < 1.0, alpha * m < 2.0),
        DemandKind::Hyperbolic { .. } => (true, true, true, true),
        DemandKind::Custom(_) => (dec_min > 0.0, slope_min >= -1e-12, rev_min > 0.0, concave_margin > 0.0),
    };

    AdmissibilityReport {
        unit_price_at_zero,
        strictly_decreasing: check(decreasing_ok, dec_min, dec_at),
        positive_at_market_cap: check(fm > 0.0, fm, m),
        slope_nondecreasing: check(slope_ok, slope_min, slope_at),
        revenue_increasing: check(revenue_ok, rev_min, rev_at),
        revenue_strictly_concave: check(concave_ok, concave_margin, concave_at),
    }
}

/// Checks the uniqueness conditions; `haircut` tightens the contraction
/// bound for the collateralized regime.
pub fn validate_uniqueness(demand: &InverseDemand, haircut: Option<f64>) -> UniquenessReport {
    validate_uniqueness_with_grid(demand, haircut, DEFAULT_VALIDATION_GRID)
}

pub fn validate_uniqueness_with_grid(
    demand: &InverseDemand,
    haircut: Option<f64>,
    points: usize,
) -> UniquenessReport {
    let m = demand.market_cap;
    let (slope_margin, slope_at) = grid_min(demand, points, |s| {
        -(demand.slope_raw(s) + s * demand.curvature_raw(s))
    });
    let slope_ok = match demand.kind {
        DemandKind::Linear { .. } => true,
        DemandKind::Exponential { alpha } => alpha * m <= 1.0,
        DemandKind::Hyperbolic { epsilon } => epsilon >= m,
        DemandKind::Custom(_) => slope_margin >= -1e-12,
    };

    let bound = match haircut {
        Some(nu) => nu.min(demand.price_raw(m)),
        None => demand.price_raw(m),
    };
    let margin = bound + m * demand.slope_raw(0.0);

    UniquenessReport {
        slope_dominates_curvature: check(slope_ok, slope_margin, slope_at),
        margin,
    }
}
