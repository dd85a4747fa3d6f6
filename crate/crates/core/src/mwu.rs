//! Multiplicative-weights feasibility engine with per-round constraints.
//!
//! Each expert is one `>=` row `a_t x >= b_t`. The caller supplies a fresh
//! row set every round and an oracle maximizing `y^T A_t x`; the engine
//! declares the system infeasible as soon as that maximum falls below
//! `y^T b_t`.

use crate::error::{Error, Result};

/// Relative slack when comparing the oracle value against `y^T b`.
const INFEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertState {
    /// Natural log of each weight; weights never reach zero.
    log_weights: Vec<f64>,
    pub round: usize,
    pub width: f64,
    pub learning_rate: f64,
    pub rounds: usize,
    pub normalize: bool,
}

impl ExpertState {
    /// Starts from `y = 1` for every expert.
    pub fn new(rows: usize, width: f64, learning_rate: f64, rounds: usize) -> Self {
        ExpertState {
            log_weights: vec![0.0; rows],
            round: 0,
            width,
            learning_rate,
            rounds,
            normalize: true,
        }
    }

    pub fn without_normalization(mut self) -> Self {
        self.normalize = false;
        self
    }

    pub fn num_rows(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn update(&mut self, violations: &[f64]) -> Result<()> {
        if violations.len() != self.log_weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} violations for {} experts",
                violations.len(),
                self.log_weights.len()
            )));
        }
        let down = (1.0 - self.learning_rate).ln();
        let up = (1.0 + self.learning_rate).ln();
        for (row, (&m, lw)) in violations.iter().zip(self.log_weights.iter_mut()).enumerate() {
            if m.abs() > self.width * (1.0 + 1e-9) {
                return Err(Error::WidthViolation {
                    row,
                    value: m,
                    width: self.width,
                });
            }
            let scaled = m / self.width;
            *lw += if m >= 0.0 { scaled * down } else { -scaled * up };
        }
        if self.normalize {
            let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + self.log_weights.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
            for lw in &mut self.log_weights {
                *lw -= lse;
            }
        }
        self.round += 1;
        Ok(())
    }
}

/// Functional form of [`ExpertState::update`].
pub fn update_weights(mut state: ExpertState, violations: &[f64]) -> Result<ExpertState> {
    state.update(violations)?;
    Ok(state)
}

/// One round's rows `a_i x >= b_i`, evaluated on oracle solutions of type `S`.
pub trait RoundConstraints<S> {
    fn rhs(&self) -> &[f64];
    /// Per-row bound on `|a_i x - b_i|` over every oracle-feasible `x`.
    fn widths(&self) -> &[f64];
    /// `a_i x` for every row.
    fn evaluate(&self, solution: &S) -> Vec<f64>;
}

impl<S, T: RoundConstraints<S> + ?Sized> RoundConstraints<S> for &T {
    fn rhs(&self) -> &[f64] {
        (**self).rhs()
    }

    fn widths(&self) -> &[f64] {
        (**self).widths()
    }

    fn evaluate(&self, solution: &S) -> Vec<f64> {
        (**self).evaluate(solution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    /// Stop once every averaged violation, divided by its row width, is at least `-target`.
    pub target: f64,
    /// Average over the trailing window instead of the whole run.
    pub window: Option<usize>,
    pub min_rounds: usize,
    pub check_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MwuParams {
    pub rows: usize,
    pub width: f64,
    pub learning_rate: f64,
    pub rounds: usize,
    pub normalize: bool,
    pub early_stop: Option<EarlyStop>,
}

impl MwuParams {
    pub fn new(rows: usize, width: f64, learning_rate: f64, rounds: usize) -> Self {
        MwuParams {
            rows,
            width,
            learning_rate,
            rounds,
            normalize: true,
            early_stop: None,
        }
    }

    /// Round count after which the averaged violations are at least `-eps * rho`.
    pub fn theoretical_rounds(rows: usize, width: f64, learning_rate: f64) -> usize {
        let r = (rows.max(2)) as f64;
        (4.0 * width * width * r.ln() / (learning_rate * learning_rate)).ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MwuStatus {
    Completed,
    /// Early stop fired after `round`; the averaged rounds are `from..=round`.
    Converged {
        round: usize,
        from: usize,
    },
    DeclaredInfeasible {
        round: usize,
    },
}

#[derive(Clone, Debug)]
pub struct MwuTranscript<S> {
    pub solutions: Vec<S>,
    pub violations: Vec<Vec<f64>>,
    pub status: MwuStatus,
}

impl<S> MwuTranscript<S> {
    /// Rounds whose solutions form the returned point.
    pub fn averaged_rounds(&self) -> Option<std::ops::Range<usize>> {
        match self.status {
            MwuStatus::Completed => Some(0..self.solutions.len()),
            MwuStatus::Converged { round, from } => Some(from..round + 1),
            MwuStatus::DeclaredInfeasible { .. } => None,
        }
    }
}

pub fn run_generalized_ahk<S, R, F, O>(params: &MwuParams, mut supplier: F, mut oracle: O) -> Result<MwuTranscript<S>>
where
    R: RoundConstraints<S>,
    F: FnMut(usize) -> Result<R>,
    O: FnMut(&R, &[f64]) -> Result<(S, f64)>,
{
    if params.rounds == 0 || params.width <= 0.0 || !(params.learning_rate > 0.0 && params.learning_rate < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "need rounds >= 1, width > 0 and learning rate in (0, 1/2); got {}, {}, {}",
            params.rounds, params.width, params.learning_rate
        )));
    }
    let mut state = ExpertState::new(params.rows, params.width, params.learning_rate, params.rounds);
    state.normalize = params.normalize;
    let mut solutions = Vec::new();
    let mut violations: Vec<Vec<f64>> = Vec::new();
    let mut row_widths: Vec<f64> = vec![params.width; params.rows];

    for t in 0..params.rounds {
        let rc = supplier(t)?;
        let b = rc.rhs();
        if b.len() != params.rows || rc.widths().len() != params.rows {
            return Err(Error::DimensionMismatch(format!(
                "round {t} supplied {} rows, expected {}",
                b.len(),
                params.rows
            )));
        }
        let y = state.weights();
        let (x, value) = oracle(&rc, &y)?;
        let ytb: f64 = y.iter().zip(b).map(|(a, c)| a * c).sum();
        if value < ytb - INFEASIBILITY_TOL * (1.0 + ytb.abs()) {
            return Ok(MwuTranscript {
                solutions,
                violations,
                status: MwuStatus::DeclaredInfeasible { round: t },
            });
        }
        let ax = rc.evaluate(&x);
        let m: Vec<f64> = ax.iter().zip(b).map(|(a, c)| a - c).collect();
        for (row, (&mi, &w)) in m.iter().zip(rc.widths()).enumerate() {
            if mi.abs() > w * (1.0 + 1e-9) + 1e-12 || w > params.width * (1.0 + 1e-12) {
                return Err(Error::WidthViolation {
                    row,
                    value: mi,
                    width: w,
                });
            }
        }
        row_widths.copy_from_slice(rc.widths());
        state.update(&m)?;
        violations.push(m);
        solutions.push(x);

        if let Some(es) = &params.early_stop {
            let done = t + 1;
            if done >= es.min_rounds && done % es.check_every.max(1) == 0 {
                let from = es.window.map_or(0, |w| done.saturating_sub(w));
                if window_clears(&violations[from..], &row_widths, es.target) {
                    return Ok(MwuTranscript {
                        solutions,
                        violations,
                        status: MwuStatus::Converged { round: t, from },
                    });
                }
            }
        }
    }
    Ok(MwuTranscript {
        solutions,
        violations,
        status: MwuStatus::Completed,
    })
}

fn window_clears(window: &[Vec<f64>], widths: &[f64], target: f64) -> bool {
    let k = window.len() as f64;
    (0..widths.len()).all(|i| {
        let mean = window.iter().map(|m| m[i]).sum::<f64>() / k;
        mean / widths[i] >= -target
    })
}

/// Per-row mean of `a_it x_t - b_it` over the averaged rounds.
pub fn average_violation<S>(transcript: &MwuTranscript<S>) -> Result<Vec<f64>> {
    let range = transcript.averaged_rounds().ok_or(Error::IncompleteTranscript)?;
    if range.is_empty() {
        return Err(Error::IncompleteTranscript);
    }
    let rows = transcript.violations[range.start].len();
    let k = range.len() as f64;
    let mut out = vec![0.0; rows];
    for m in &transcript.violations[range] {
        for (o, v) in out.iter_mut().zip(m) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= k;
    }
    Ok(out)
}
