//! Subspace predictor fitted from a sliding window of input/output data.
//!
//! The window holds the `2N+j-1` most recent scalar samples of the plant
//! input and output. From it we build the block-Hankel matrices `Up`, `Uf`,
//! `Yp`, `Yf` (`N` rows, `j` columns each), fit the linear maps `Lw`, `Lu`
//! such that `Yf ≈ Lw·Wp + Lu·Uf` by (optionally ridge-regularized) least
//! squares, and evaluate the closed-form minimizer of the quadratic
//! tracking-plus-effort cost to obtain an `N`-step control sequence.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PredictorError {
    #[error("window holds {have} samples, needs {need} before Hankel matrices exist")]
    WindowNotFull { have: usize, need: usize },
    #[error("sequence of length {len} cannot host a {rows}x{cols} Hankel block at offset {start}")]
    SequenceTooShort {
        len: usize,
        rows: usize,
        cols: usize,
        start: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("least-squares system is singular (window data is degenerate)")]
    SingularSystem,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// Sliding window of paired input/output samples.
///
/// Capacity is exactly `2N + j - 1`; once full, every push evicts the oldest
/// pair so the Hankel dimensions stay fixed while the data content slides.
#[derive(Debug, Clone)]
pub struct DataWindow {
    inputs: VecDeque<f64>,
    outputs: VecDeque<f64>,
    horizon: usize,
    columns: usize,
}

impl DataWindow {
    pub fn new(horizon: usize, columns: usize) -> Self {
        assert!(horizon >= 1, "horizon N must be at least 1");
        assert!(columns >= 1, "column count j must be at least 1");
        let cap = 2 * horizon + columns - 1;
        Self {
            inputs: VecDeque::with_capacity(cap + 1),
            outputs: VecDeque::with_capacity(cap + 1),
            horizon,
            columns,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn capacity(&self) -> usize {
        2 * self.horizon + self.columns - 1
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    /// Appends a new `(u, y)` pair, evicting the oldest pair once full.
    pub fn push(&mut self, input: f64, output: f64) {
        self.inputs.push_back(input);
        self.outputs.push_back(output);
        if self.inputs.len() > self.capacity() {
            self.inputs.pop_front();
            self.outputs.pop_front();
        }
    }

    pub fn inputs(&self) -> Vec<f64> {
        self.inputs.iter().copied().collect()
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.outputs.iter().copied().collect()
    }

    /// The most recent `N` pairs stacked as `[y-block; u-block]`, oldest first
    /// within each block.
    pub fn past_vector(&self) -> Result<PastVector, PredictorError> {
        if self.len() < self.horizon {
            return Err(PredictorError::WindowNotFull {
                have: self.len(),
                need: self.horizon,
            });
        }
        let skip = self.len() - self.horizon;
        let ys = self.outputs.iter().skip(skip).copied();
        let us = self.inputs.iter().skip(skip).copied();
        Ok(PastVector {
            values: DVector::from_iterator(2 * self.horizon, ys.chain(us)),
        })
    }
}

/// Drops the oldest pair and appends the newest; the window length is
/// unchanged when already full.
pub fn update_window(window: &mut DataWindow, input: f64, output: f64) {
    window.push(input, output);
}

/// Builds an `rows x cols` Hankel block: `result[r][c] = seq[start + r + c]`.
pub fn build_hankel(
    seq: &[f64],
    rows: usize,
    cols: usize,
    start: usize,
) -> Result<DMatrix<f64>, PredictorError> {
    if start + rows + cols - 1 > seq.len() {
        return Err(PredictorError::SequenceTooShort {
            len: seq.len(),
            rows,
            cols,
            start,
        });
    }
    Ok(DMatrix::from_fn(rows, cols, |r, c| seq[start + r + c]))
}

/// The four block-Hankel matrices over one window, plus `Wp = [Yp; Up]`.
#[derive(Debug, Clone)]
pub struct HankelSet {
    pub up: DMatrix<f64>,
    pub uf: DMatrix<f64>,
    pub yp: DMatrix<f64>,
    pub yf: DMatrix<f64>,
    pub wp: DMatrix<f64>,
    horizon: usize,
    columns: usize,
}

impl HankelSet {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn columns(&self) -> usize {
        self.columns
    }
}

/// Splits a full window into past/future Hankel blocks.
pub fn make_hankel_set(window: &DataWindow) -> Result<HankelSet, PredictorError> {
    if !window.is_full() {
        return Err(PredictorError::WindowNotFull {
            have: window.len(),
            need: window.capacity(),
        });
    }
    let n = window.horizon();
    let j = window.columns();
    let us = window.inputs();
    let ys = window.outputs();
    let up = build_hankel(&us, n, j, 0)?;
    let uf = build_hankel(&us, n, j, n)?;
    let yp = build_hankel(&ys, n, j, 0)?;
    let yf = build_hankel(&ys, n, j, n)?;
    let wp = DMatrix::from_fn(2 * n, j, |r, c| if r < n { yp[(r, c)] } else { up[(r - n, c)] });
    Ok(HankelSet {
        up,
        uf,
        yp,
        yf,
        wp,
        horizon: n,
        columns: j,
    })
}

/// Fitted predictor maps: `y_future ≈ Lw·w_past + Lu·u_future`.
#[derive(Debug, Clone)]
pub struct PredictorCoefficients {
    pub lw: DMatrix<f64>,
    pub lu: DMatrix<f64>,
    pub ridge: f64,
}

impl PredictorCoefficients {
    pub fn horizon(&self) -> usize {
        self.lu.nrows()
    }
}

/// Past data vector `[y(k-N)..y(k-1), u(k-N)..u(k-1)]`, length `2N`.
#[derive(Debug, Clone)]
pub struct PastVector {
    values: DVector<f64>,
}

impl PastVector {
    pub fn new(past_outputs: &[f64], past_inputs: &[f64]) -> Result<Self, PredictorError> {
        if past_outputs.len() != past_inputs.len() || past_outputs.is_empty() {
            return Err(PredictorError::DimensionMismatch(format!(
                "past vector needs equal-length nonempty blocks, got {} outputs and {} inputs",
                past_outputs.len(),
                past_inputs.len()
            )));
        }
        let n = past_outputs.len();
        Ok(Self {
            values: DVector::from_iterator(
                2 * n,
                past_outputs.iter().chain(past_inputs.iter()).copied(),
            ),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }
}

/// `N`-step predicted input sequence together with its origin stamp.
///
/// `origin_time_us` and `step_index` are filled in by the cloud session when
/// the sequence is packed for transmission; the solver itself leaves them 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    pub values: Vec<f64>,
    pub origin_time_us: u64,
    pub step_index: u64,
}

impl ControlSequence {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            origin_time_us: 0,
            step_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fits `[Lw Lu]` by least squares over the Hankel blocks.
///
/// With `ridge > 0` the Gram matrix `G = [Wp;Uf]·[Wp;Uf]ᵀ + ridge·I` is
/// symmetric positive definite and solved by Cholesky factorization. With
/// `ridge = 0` the fit is the Moore-Penrose solution computed from an SVD of
/// the stacked data matrix, so a rank-deficient window (e.g. noise-free data
/// from a low-order plant) still yields the minimum-norm minimizer instead of
/// amplified rounding noise. Degenerate data (no usable signal at all) is
/// reported as [`PredictorError::SingularSystem`], never papered over by a
/// silent ridge.
pub fn fit_predictor(set: &HankelSet, ridge: f64) -> Result<PredictorCoefficients, PredictorError> {
    assert!(ridge >= 0.0, "ridge must be nonnegative");
    let n = set.horizon();
    let j = set.columns();
    let rows = 3 * n;
    // Stacked data matrix [Wp; Uf], 3N x j.
    let stacked = DMatrix::from_fn(rows, j, |r, c| {
        if r < 2 * n {
            set.wp[(r, c)]
        } else {
            set.uf[(r - 2 * n, c)]
        }
    });
    if stacked.iter().any(|v| !v.is_finite()) || set.yf.iter().any(|v| !v.is_finite()) {
        return Err(PredictorError::NonFinite("window data"));
    }

    let coeffs = if ridge > 0.0 {
        let gram = &stacked * stacked.transpose() + DMatrix::identity(rows, rows) * ridge;
        let chol = nalgebra::Cholesky::new(gram).ok_or(PredictorError::SingularSystem)?;
        // [Lw Lu] = Yf·Mᵀ·G⁻¹  solved as  G·Xᵀ = M·Yfᵀ.
        let rhs = &stacked * set.yf.transpose();
        chol.solve(&rhs).transpose()
    } else {
        let svd = stacked.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        if !sigma_max.is_finite() {
            return Err(PredictorError::NonFinite("singular values"));
        }
        if sigma_max <= f64::MIN_POSITIVE {
            return Err(PredictorError::SingularSystem);
        }
        let tol = sigma_max * rows.max(j) as f64 * f64::EPSILON;
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|_| PredictorError::SingularSystem)?;
        &set.yf * pinv
    };

    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(PredictorError::NonFinite("fitted coefficients"));
    }
    Ok(PredictorCoefficients {
        lw: coeffs.columns(0, 2 * n).into_owned(),
        lu: coeffs.columns(2 * n, n).into_owned(),
        ridge,
    })
}

/// Predicted future outputs `Lw·wp + Lu·uf`.
pub fn predict_outputs(
    coeffs: &PredictorCoefficients,
    past: &PastVector,
    future_inputs: &DVector<f64>,
) -> Result<DVector<f64>, PredictorError> {
    let n = coeffs.horizon();
    if past.len() != 2 * n {
        return Err(PredictorError::DimensionMismatch(format!(
            "past vector length {} does not match 2N = {}",
            past.len(),
            2 * n
        )));
    }
    if future_inputs.len() != n {
        return Err(PredictorError::DimensionMismatch(format!(
            "future input length {} does not match N = {}",
            future_inputs.len(),
            n
        )));
    }
    Ok(&coeffs.lw * past.as_vector() + &coeffs.lu * future_inputs)
}

/// Closed-form minimizer of the tracking cost
/// `J(u) = ‖r - Lw·wp - Lu·u‖² + λ‖u‖²`:
/// `u* = (λI + LuᵀLu)⁻¹ Luᵀ (r - Lw·wp)`.
pub fn optimal_control(
    coeffs: &PredictorCoefficients,
    past: &PastVector,
    reference: &DVector<f64>,
    lambda: f64,
) -> Result<ControlSequence, PredictorError> {
    assert!(lambda > 0.0, "control weight lambda must be positive");
    let n = coeffs.horizon();
    if past.len() != 2 * n {
        return Err(PredictorError::DimensionMismatch(format!(
            "past vector length {} does not match 2N = {}",
            past.len(),
            2 * n
        )));
    }
    if reference.len() != n {
        return Err(PredictorError::DimensionMismatch(format!(
            "reference length {} does not match N = {}",
            reference.len(),
            n
        )));
    }
    let lut = coeffs.lu.transpose();
    let hessian = &lut * &coeffs.lu + DMatrix::identity(n, n) * lambda;
    // SPD for lambda > 0, so Cholesky cannot fail on finite data.
    let chol = nalgebra::Cholesky::new(hessian).ok_or(PredictorError::SingularSystem)?;
    let rhs = lut * (reference - &coeffs.lw * past.as_vector());
    let solution = chol.solve(&rhs);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(PredictorError::NonFinite("control sequence"));
    }
    Ok(ControlSequence::new(solution.iter().copied().collect()))
}
