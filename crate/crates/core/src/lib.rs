//! Clearing equilibria for interbank networks subject to fire sales.
//!
//! A network of banks holds liquid and illiquid assets against interbank and
//! external liabilities. Banks facing a liquidity shortfall raise cash by
//! selling the illiquid asset into a market with price impact, by borrowing
//! at a per-bank interest rate, or both. This crate computes the joint
//! equilibrium of liquidations, borrowing, and the asset price under three
//! regimes:
//!
//! * **fire sale** ([`baseline`]) — no borrowing; every stressed bank sells,
//!   payments clear by Picard iteration;
//! * **uncollateralized borrowing** ([`solver`]) — stressed banks trade off
//!   sale losses against interest cost, loans are unrestricted;
//! * **collateralized borrowing** — loans must be covered by the remaining
//!   illiquid holdings at book value, and only banks passing a stress test
//!   may participate.
//!
//! The equilibrium solver nests a gradient-projection loop (the fixed-price
//! Nash equilibrium across banks) inside a fixed-point loop on the price.
//! [`symmetric`] provides closed forms for symmetric systems used to validate
//! the solver, [`calibration`] builds networks from aggregate balance-sheet
//! data, and [`scenario`] runs regime comparisons and parameter sweeps.

pub mod baseline;
pub mod best_response;
pub mod calibration;
pub mod demand;
pub mod network;
mod roots;
pub mod scenario;
pub mod solver;
pub mod symmetric;

pub use baseline::ClearingOutcome;
pub use best_response::{BestResponseError, ExtendedShares};
pub use calibration::{BalanceSheetRow, BalanceSheets, CalibrationError, EstimatedMatrix};
pub use demand::{AdmissibilityReport, DemandError, DemandKind, InverseDemand, UniquenessReport};
pub use network::{CaseLabel, ClassifiedSystem, FinancialNetwork, Mode, NetworkError};
pub use scenario::{
    Metrics, Regime, ResultDoc, ScenarioOutcome, ScenarioRun, SweepBase, SweepError, SweepRow,
    SweepSpec, SweptParameter,
};
pub use solver::{BankRegime, EquilibriumResult, InnerSolution, SolverConfig, SolverError};
pub use symmetric::{
    SymmetricError, SymmetricRegime, SymmetricScenario, SymmetricSolution, SymmetricThresholds,
};
