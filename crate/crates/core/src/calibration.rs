//! Networks from aggregate balance-sheet data.
//!
//! A balance-sheet row carries total assets `T`, capital `C`, interbank
//! liabilities, and the tier 1 capital ratio `R`. External assets split into
//! liquid and illiquid parts in proportion to `R`, external liabilities are
//! the remainder after interbank debt and capital, and a full bilateral
//! liabilities matrix is estimated from the interbank marginals by a gravity
//! fill followed by iterative proportional fitting with a zero diagonal.
//! Externally supplied matrices always take precedence over the estimate.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{FinancialNetwork, NetworkError};

/// Relative tolerance on matched marginals after fitting.
const IPF_TOL: f64 = 1e-9;
const IPF_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("bank `{bank_id}`: {reason}")]
    InvalidRow { bank_id: String, reason: String },
    #[error("balance-sheet csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("in/out marginals are inconsistent: {0}")]
    MarginalMismatch(String),
    #[error(
        "proportional fitting did not reach {IPF_TOL:e} in {IPF_MAX_SWEEPS} sweeps (residual {residual:e}); marginals are likely infeasible with a zero diagonal"
    )]
    IpfNonConvergence { residual: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Dimensions(String),
}

/// One bank's aggregate balance sheet.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct BalanceSheetRow {
    pub bank_id: String,
    pub total_assets: f64,
    pub capital: f64,
    pub interbank_liabilities: f64,
    pub tier1_ratio: f64,
}

/// Per-bank vectors derived from the rows.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceSheets {
    pub ids: Vec<String>,
    /// Liquid endowments `c = R (T - interbank)`.
    pub liquid: Vec<f64>,
    /// Illiquid endowments `a = (1 - R)(T - interbank)`.
    pub illiquid: Vec<f64>,
    /// External liabilities `T - interbank - C`.
    pub external: Vec<f64>,
    /// Interbank liabilities, also used as interbank assets.
    pub interbank: Vec<f64>,
    /// Total obligations `external + interbank`.
    pub total_liabilities: Vec<f64>,
}

pub fn read_balance_sheet_csv<R: Read>(reader: R) -> Result<Vec<BalanceSheetRow>, CalibrationError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in csv_reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Splits each row into the per-bank endowments and obligations, rejecting
/// rows that violate the accounting identities.
pub fn build_balance_sheets(rows: &[BalanceSheetRow]) -> Result<BalanceSheets, CalibrationError> {
    let mut sheets = BalanceSheets {
        ids: Vec::with_capacity(rows.len()),
        liquid: Vec::with_capacity(rows.len()),
        illiquid: Vec::with_capacity(rows.len()),
        external: Vec::with_capacity(rows.len()),
        interbank: Vec::with_capacity(rows.len()),
        total_liabilities: Vec::with_capacity(rows.len()),
    };
    for row in rows {
        let invalid = |reason: String| CalibrationError::InvalidRow {
            bank_id: row.bank_id.clone(),
            reason,
        };
        for (name, v) in [
            ("total_assets", row.total_assets),
            ("capital", row.capital),
            ("interbank_liabilities", row.interbank_liabilities),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&row.tier1_ratio) || !row.tier1_ratio.is_finite() {
            return Err(invalid(format!(
                "tier1_ratio must lie in [0, 1], got {}",
                row.tier1_ratio
            )));
        }
        let non_interbank = row.total_assets - row.interbank_liabilities;
        let external = non_interbank - row.capital;
        if external < 0.0 {
            return Err(invalid(format!(
                "external liabilities are negative ({external}): total assets must cover interbank liabilities plus capital"
            )));
        }
        let liquid = row.tier1_ratio * non_interbank;
        let illiquid = (1.0 - row.tier1_ratio) * non_interbank;
        let total = external + row.interbank_liabilities;
        // net worth must come out as the stated capital
        let net_worth = row.total_assets - total;
        if (net_worth - row.capital).abs() > 1e-9 * row.total_assets.max(1.0) {
            return Err(invalid(format!(
                "net worth {net_worth} differs from capital {}",
                row.capital
            )));
        }
        sheets.ids.push(row.bank_id.clone());
        sheets.liquid.push(liquid);
        sheets.illiquid.push(illiquid);
        sheets.external.push(external);
        sheets.interbank.push(row.interbank_liabilities);
        sheets.total_liabilities.push(total);
    }
    Ok(sheets)
}

/// A bilateral matrix matching the given marginals.
#[derive(Debug, Clone)]
pub struct EstimatedMatrix {
    /// `n x n` interbank block with a zero diagonal.
    pub matrix: DMatrix<f64>,
    /// Factor applied to the in-totals to make them sum to the out-totals.
    pub in_rescale: f64,
    pub sweeps: usize,
}

/// Estimates a bilateral liabilities matrix from per-bank out- and in-totals:
/// gravity fill `L[i][j] ∝ out_i in_j` off the diagonal, then alternating
/// row/column scaling until both marginals match to relative [`IPF_TOL`].
pub fn estimate_matrix(
    out_totals: &[f64],
    in_totals: &[f64],
) -> Result<EstimatedMatrix, CalibrationError> {
    let n = out_totals.len();
    if in_totals.len() != n {
        return Err(CalibrationError::Dimensions(format!(
            "out has {n} entries, in has {}",
            in_totals.len()
        )));
    }
    for (name, totals) in [("out", out_totals), ("in", in_totals)] {
        if let Some((i, &v)) = totals
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(CalibrationError::MarginalMismatch(format!(
                "{name}-total of bank {i} must be nonnegative, got {v}"
            )));
        }
    }

    let total_out: f64 = out_totals.iter().sum();
    let total_in: f64 = in_totals.iter().sum();
    if total_out == 0.0 && total_in == 0.0 {
        return Ok(EstimatedMatrix {
            matrix: DMatrix::zeros(n, n),
            in_rescale: 1.0,
            sweeps: 0,
        });
    }
    if total_out == 0.0 || total_in == 0.0 {
        return Err(CalibrationError::MarginalMismatch(format!(
            "out-totals sum to {total_out} but in-totals sum to {total_in}"
        )));
    }
    // rescale the in-totals so both sides sum identically; the factor
    // reports the perturbation
    let in_rescale = total_out / total_in;
    let in_scaled: Vec<f64> = in_totals.iter().map(|v| v * in_rescale).collect();

    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                matrix[(i, j)] = out_totals[i] * in_scaled[j] / total_out;
            }
        }
    }

    for sweep in 1..=IPF_MAX_SWEEPS {
        for (i, mut row) in matrix.row_iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.scale_mut(out_totals[i] / sum);
            }
        }
        for (j, mut column) in matrix.column_iter_mut().enumerate() {
            let sum: f64 = column.iter().sum();
            if sum > 0.0 {
                column.scale_mut(in_scaled[j] / sum);
            }
        }
        let mut residual: f64 = 0.0;
        for i in 0..n {
            let row_sum: f64 = matrix.row(i).sum();
            let col_sum: f64 = matrix.column(i).sum();
            residual = residual
                .max(relative_gap(row_sum, out_totals[i]))
                .max(relative_gap(col_sum, in_scaled[i]));
        }
        if residual <= IPF_TOL {
            return Ok(EstimatedMatrix {
                matrix,
                in_rescale,
                sweeps: sweep,
            });
        }
    }

    let mut residual: f64 = 0.0;
    for i in 0..n {
        residual = residual
            .max(relative_gap(matrix.row(i).sum(), out_totals[i]))
            .max(relative_gap(matrix.column(i).sum(), in_scaled[i]));
    }
    Err(CalibrationError::IpfNonConvergence { residual })
}

fn relative_gap(value: f64, target: f64) -> f64 {
    if target > 0.0 {
        (value - target).abs() / target
    } else {
        value.abs()
    }
}

/// Assembles a network from built sheets and an `n x n` interbank block.
pub fn assemble_network(
    sheets: &BalanceSheets,
    interbank: &DMatrix<f64>,
    rates: &[f64],
) -> Result<FinancialNetwork, CalibrationError> {
    let n = sheets.ids.len();
    if interbank.nrows() != n || interbank.ncols() != n {
        return Err(CalibrationError::Dimensions(format!(
            "interbank block is {} x {}, expected {n} x {n}",
            interbank.nrows(),
            interbank.ncols()
        )));
    }
    if rates.len() != n {
        return Err(CalibrationError::Dimensions(format!(
            "rates vector has {} entries, expected {n}",
            rates.len()
        )));
    }
    let mut liabilities = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        liabilities[(i, 0)] = sheets.external[i];
        for j in 0..n {
            liabilities[(i, j + 1)] = interbank[(i, j)];
        }
    }
    Ok(FinancialNetwork::new(
        liabilities,
        DVector::from_row_slice(&sheets.liquid),
        DVector::from_row_slice(&sheets.illiquid),
        DVector::from_row_slice(rates),
    )?)
}

/// Builds a network straight from rows with a uniform rate, estimating the
/// bilateral matrix from the interbank totals (used both as out- and
/// in-marginals).
pub fn network_from_rows(
    rows: &[BalanceSheetRow],
    rate: f64,
) -> Result<(FinancialNetwork, BalanceSheets), CalibrationError> {
    let sheets = build_balance_sheets(rows)?;
    let estimated = estimate_matrix(&sheets.interbank, &sheets.interbank)?;
    let rates = vec![rate; rows.len()];
    let network = assemble_network(&sheets, &estimated.matrix, &rates)?;
    Ok((network, sheets))
}

/// Same, but with an externally supplied full liabilities matrix
/// (`n x (n+1)`, external column first) replacing the estimate.
pub fn network_from_rows_with_matrix(
    rows: &[BalanceSheetRow],
    liabilities: DMatrix<f64>,
    rate: f64,
) -> Result<(FinancialNetwork, BalanceSheets), CalibrationError> {
    let sheets = build_balance_sheets(rows)?;
    let n = rows.len();
    if liabilities.nrows() != n || liabilities.ncols() != n + 1 {
        return Err(CalibrationError::Dimensions(format!(
            "liabilities matrix is {} x {}, expected {n} x {}",
            liabilities.nrows(),
            liabilities.ncols(),
            n + 1
        )));
    }
    let network = FinancialNetwork::new(
        liabilities,
        DVector::from_row_slice(&sheets.liquid),
        DVector::from_row_slice(&sheets.illiquid),
        DVector::from_element(n, rate),
    )?;
    Ok((network, sheets))
}
