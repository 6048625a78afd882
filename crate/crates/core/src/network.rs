//! Interbank network data: liabilities, endowments, and the case partition.
//!
//! Banks are indexed `0..n` internally; the liabilities matrix has `n+1`
//! columns where column 0 is the obligation to the external (societal) node
//! and column `j+1` is the obligation to bank `j`. Classification splits the
//! banks into the cases that drive every downstream solver:
//!
//! * **Case I** — insolvent at book value even selling everything at the
//!   unstressed price; pays nothing.
//! * **Case II** — covers its obligations from cash and incoming payments;
//!   takes no action.
//! * **Case III** — solvent but short of cash. Under uncollateralized
//!   borrowing these banks participate in the liquidation game. Under
//!   collateralized borrowing Case III instead denotes a bank that fails the
//!   stress test: a regulator takes it over, honors its obligations, and its
//!   holdings are never sold.
//! * **Case IV** — collateralized mode only: short of cash and passing the
//!   stress test; participates with loans capped by collateral.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{0}")]
    Dimensions(String),
    #[error("{quantity} of bank {bank} must be nonnegative and finite, got {value}")]
    InvalidEntry {
        quantity: &'static str,
        bank: usize,
        value: f64,
    },
    #[error("bank {bank} has a nonzero obligation to itself")]
    SelfObligation { bank: usize },
    #[error("stress-test haircut must lie in (0, 1), got {value}")]
    InvalidHaircut { value: f64 },
    #[error("collateralized mode requires a stress-test haircut")]
    MissingHaircut,
    #[error("liabilities csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("liabilities csv record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
}

/// Borrowing regime used when classifying banks and solving for equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Uncollateralized,
    Collateralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
    #[serde(rename = "IV")]
    IV,
}

/// An interbank network: liabilities, liquid and illiquid endowments, and
/// per-bank interest rates. Immutable once constructed; total liabilities
/// are derived from the matrix rows.
#[derive(Debug, Clone)]
pub struct FinancialNetwork {
    n: usize,
    /// `n x (n+1)`; column 0 external, column `j+1` owed to bank `j`.
    liabilities: DMatrix<f64>,
    liquid: DVector<f64>,
    illiquid: DVector<f64>,
    rates: DVector<f64>,
    total_liabilities: DVector<f64>,
}

impl FinancialNetwork {
    pub fn new(
        liabilities: DMatrix<f64>,
        liquid: DVector<f64>,
        illiquid: DVector<f64>,
        rates: DVector<f64>,
    ) -> Result<Self, NetworkError> {
        let n = liabilities.nrows();
        if liabilities.ncols() != n + 1 {
            return Err(NetworkError::Dimensions(format!(
                "liabilities must be n x (n+1), got {} x {}",
                n,
                liabilities.ncols()
            )));
        }
        for (name, v) in [("liquid", &liquid), ("illiquid", &illiquid), ("rates", &rates)] {
            if v.len() != n {
                return Err(NetworkError::Dimensions(format!(
                    "{name} vector has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        for i in 0..n {
            for j in 0..=n {
                let l = liabilities[(i, j)];
                if !(l.is_finite() && l >= 0.0) {
                    return Err(NetworkError::InvalidEntry {
                        quantity: "liability",
                        bank: i,
                        value: l,
                    });
                }
            }
            if liabilities[(i, i + 1)] != 0.0 {
                return Err(NetworkError::SelfObligation { bank: i });
            }
            for (name, v) in [("liquid endowment", &liquid), ("illiquid endowment", &illiquid), ("rate", &rates)]
            {
                if !(v[i].is_finite() && v[i] >= 0.0) {
                    return Err(NetworkError::InvalidEntry {
                        quantity: name,
                        bank: i,
                        value: v[i],
                    });
                }
            }
        }
        let total_liabilities =
            DVector::from_iterator(n, liabilities.row_iter().map(|r| r.sum()));
        Ok(Self {
            n,
            liabilities,
            liquid,
            illiquid,
            rates,
            total_liabilities,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn liabilities(&self) -> &DMatrix<f64> {
        &self.liabilities
    }

    pub fn liquid(&self) -> &DVector<f64> {
        &self.liquid
    }

    pub fn illiquid(&self) -> &DVector<f64> {
        &self.illiquid
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    /// Row sums of the liabilities matrix.
    pub fn total_liabilities(&self) -> &DVector<f64> {
        &self.total_liabilities
    }

    /// External (column 0) obligations.
    pub fn external(&self) -> DVector<f64> {
        self.liabilities.column(0).into_owned()
    }

    /// Nominal interbank assets of each bank: what all others owe it.
    pub fn interbank_in_assets(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| self.liabilities.column(i + 1).sum()),
        )
    }

    /// Interbank liabilities of each bank (row sums excluding the external
    /// column).
    pub fn interbank_out(&self) -> DVector<f64> {
        &self.total_liabilities - self.external()
    }

    /// Total shares of the illiquid asset held by the network; the default
    /// market capitalization.
    pub fn total_illiquid(&self) -> f64 {
        self.illiquid.sum()
    }

    /// Copy of the network with every bank's interest rate replaced.
    pub fn with_uniform_rate(&self, rate: f64) -> Result<Self, NetworkError> {
        Self::new(
            self.liabilities.clone(),
            self.liquid.clone(),
            self.illiquid.clone(),
            DVector::from_element(self.n, rate),
        )
    }
}

/// Pro-rata payment shares `pi[i][j] = L[i][j] / total` (zero rows stay
/// zero).
#[derive(Debug, Clone)]
pub struct RelativeLiabilities {
    pi: DMatrix<f64>,
}

impl RelativeLiabilities {
    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Incoming payments `(Pi^T p)_i` over the interbank block.
    pub fn incoming(&self, payments: &DVector<f64>) -> DVector<f64> {
        let n = payments.len();
        DVector::from_iterator(
            n,
            (0..n).map(|i| self.pi.column(i + 1).dot(payments)),
        )
    }
}

pub fn relative_liabilities(network: &FinancialNetwork) -> RelativeLiabilities {
    let mut pi = network.liabilities().clone();
    for (i, mut row) in pi.row_iter_mut().enumerate() {
        let total = network.total_liabilities()[i];
        if total > 0.0 {
            row /= total;
        }
    }
    RelativeLiabilities { pi }
}

/// Case partition plus everything downstream solvers need about the banks:
/// fixed payments, liquid shortfalls, holdings, and rates.
#[derive(Debug, Clone)]
pub struct ClassifiedSystem {
    mode: Mode,
    haircut: Option<f64>,
    cases: Vec<CaseLabel>,
    payments: DVector<f64>,
    shortfalls: DVector<f64>,
    holdings: DVector<f64>,
    rates: DVector<f64>,
    participants: Vec<usize>,
}

impl ClassifiedSystem {
    pub fn n(&self) -> usize {
        self.cases.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn haircut(&self) -> Option<f64> {
        self.haircut
    }

    pub fn cases(&self) -> &[CaseLabel] {
        &self.cases
    }

    /// Payment vector: zero for Case I, full obligations otherwise.
    pub fn payments(&self) -> &DVector<f64> {
        &self.payments
    }

    /// Liquid shortfalls `h = total liabilities - cash - incoming payments`,
    /// computed for every bank.
    pub fn shortfalls(&self) -> &DVector<f64> {
        &self.shortfalls
    }

    pub fn holdings(&self) -> &DVector<f64> {
        &self.holdings
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    /// Banks that play the liquidation game: Case III under uncollateralized
    /// borrowing, Case IV under collateralized borrowing.
    pub fn participants(&self) -> &[usize] {
        &self.participants
    }

    pub fn is_participant(&self, bank: usize) -> bool {
        match self.mode {
            Mode::Uncollateralized => self.cases[bank] == CaseLabel::III,
            Mode::Collateralized => self.cases[bank] == CaseLabel::IV,
        }
    }
}

/// Partitions the banks into cases and fixes the payment vector.
///
/// Case I is decided once from book values (it never cascades), payments are
/// then zero for Case I and full for everyone else, and the remaining banks
/// split by the sign of the liquid shortfall and, in collateralized mode, by
/// the stress test `a (1 - nu) >= h`.
pub fn classify(
    network: &FinancialNetwork,
    mode: Mode,
    haircut: Option<f64>,
) -> Result<ClassifiedSystem, NetworkError> {
    let haircut = match mode {
        Mode::Collateralized => {
            let nu = haircut.ok_or(NetworkError::MissingHaircut)?;
            if !(nu.is_finite() && nu > 0.0 && nu < 1.0) {
                return Err(NetworkError::InvalidHaircut { value: nu });
            }
            Some(nu)
        }
        Mode::Uncollateralized => None,
    };

    let n = network.n();
    let pbar = network.total_liabilities();
    let cash = network.liquid();
    let holdings = network.illiquid();
    let in_assets = network.interbank_in_assets();

    let mut cases = vec![CaseLabel::II; n];
    let mut payments = DVector::zeros(n);
    for i in 0..n {
        if pbar[i] > cash[i] + holdings[i] + in_assets[i] {
            cases[i] = CaseLabel::I;
        } else {
            payments[i] = pbar[i];
        }
    }

    let pi = relative_liabilities(network);
    let shortfalls = pbar - cash - pi.incoming(&payments);

    for i in 0..n {
        if cases[i] == CaseLabel::I {
            continue;
        }
        if shortfalls[i] <= 0.0 {
            cases[i] = CaseLabel::II;
        } else {
            cases[i] = match (mode, haircut) {
                (Mode::Uncollateralized, _) => CaseLabel::III,
                (Mode::Collateralized, Some(nu)) => {
                    if holdings[i] * (1.0 - nu) < shortfalls[i] {
                        CaseLabel::III // fails the stress test: taken over
                    } else {
                        CaseLabel::IV
                    }
                }
                (Mode::Collateralized, None) => unreachable!(),
            };
        }
    }

    let participant_label = match mode {
        Mode::Uncollateralized => CaseLabel::III,
        Mode::Collateralized => CaseLabel::IV,
    };
    let participants = (0..n).filter(|&i| cases[i] == participant_label).collect();

    Ok(ClassifiedSystem {
        mode,
        haircut,
        cases,
        payments,
        shortfalls,
        holdings: holdings.clone(),
        rates: network.rates().clone(),
        participants,
    })
}

/// Reads a `from,to,amount` liabilities csv into an `n x (n+1)` matrix.
/// `from` is 1-based, `to = 0` means the external node. Repeated cells
/// accumulate.
pub fn read_matrix_csv<R: Read>(reader: R, n: usize) -> Result<DMatrix<f64>, NetworkError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut matrix = DMatrix::zeros(n, n + 1);
    for (k, record) in csv_reader.records().enumerate() {
        let record = record?;
        let invalid = |reason: &str| NetworkError::InvalidRecord {
            record: k + 1,
            reason: reason.to_string(),
        };
        if record.len() != 3 {
            return Err(invalid("expected three fields `from,to,amount`"));
        }
        let from: usize = record[0].parse().map_err(|_| invalid("bad `from` index"))?;
        let to: usize = record[1].parse().map_err(|_| invalid("bad `to` index"))?;
        let amount: f64 = record[2].parse().map_err(|_| invalid("bad amount"))?;
        if from == 0 || from > n {
            return Err(invalid(&format!("`from` must be in 1..={n}")));
        }
        if to > n {
            return Err(invalid(&format!("`to` must be in 0..={n}")));
        }
        if from == to {
            return Err(NetworkError::SelfObligation { bank: from - 1 });
        }
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(invalid("amount must be nonnegative and finite"));
        }
        matrix[(from - 1, to)] += amount;
    }
    Ok(matrix)
}

/// Writes the nonzero entries of an `n x (n+1)` liabilities matrix in the
/// `from,to,amount` layout, sorted by `(from, to)`.
pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, writer: W) -> Result<(), NetworkError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["from", "to", "amount"])?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            let amount = matrix[(i, j)];
            if amount != 0.0 {
                w.write_record(&[
                    (i + 1).to_string(),
                    j.to_string(),
                    format!("{amount}"),
                ])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
