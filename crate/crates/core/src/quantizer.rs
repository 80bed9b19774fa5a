//! Dynamic quantizer that turns a continuous demand `u(k)` into one source
//! voltage per slot.
//!
//! ```text
//! ξ(k+1) = a_q ξ(k) + b_q (v(k) - u(k))
//! v(k)   = q(c_q ξ(k) + u(k))
//! ```
//!
//! With `a_q = a`, `b_q = b`, `c_q = -a/b` the state equals the output error
//! of the plant against the reference system driven by `u`, and each step
//! picks the level that minimizes the next error.

use thiserror::Error;

use crate::plant::DiscretePlant;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error("degenerate plant: input gain b is zero")]
    DegeneratePlant,
    #[error("non-finite demand {0}")]
    NonFiniteInput(f64),
    #[error("no levels available")]
    NoLevels,
    #[error("brute-force search of {levels}^{horizon} sequences exceeds the limit")]
    TooLarge { levels: usize, horizon: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerParams {
    pub a_q: f64,
    pub b_q: f64,
    pub c_q: f64,
    pub levels: Vec<f64>,
}

impl QuantizerParams {
    /// Memoryless nearest-level quantizer: the state never moves and never
    /// feeds back.
    pub fn memoryless(levels: Vec<f64>) -> Self {
        QuantizerParams { a_q: 0.0, b_q: 0.0, c_q: 0.0, levels }
    }
}

pub fn design_quantizer(plant: &DiscretePlant) -> Result<QuantizerParams, QuantizerError> {
    if plant.b == 0.0 {
        return Err(QuantizerError::DegeneratePlant);
    }
    Ok(QuantizerParams { a_q: plant.a, b_q: plant.b, c_q: -plant.a / plant.b, levels: plant.levels.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantizerState {
    pub xi: f64,
}

/// Index of the level nearest to `arg`. Exact ties go to the lower voltage,
/// then to the lower index.
pub fn nearest_level(levels: &[f64], arg: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in levels.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(j) => {
                let (d, dj) = ((arg - l).abs(), (arg - levels[j]).abs());
                if d < dj || (d == dj && l < levels[j]) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Static quantizer `q`. Panics on an empty level set.
pub fn static_quantize(levels: &[f64], arg: f64) -> f64 {
    levels[nearest_level(levels, arg).expect("static_quantize needs at least one level")]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerOutput {
    pub v: f64,
    /// Position of `v` in the level vector.
    pub port: usize,
    pub next: QuantizerState,
}

pub fn quantizer_step(
    params: &QuantizerParams,
    state: QuantizerState,
    u: f64,
) -> Result<QuantizerOutput, QuantizerError> {
    if !u.is_finite() {
        return Err(QuantizerError::NonFiniteInput(u));
    }
    let port = nearest_level(&params.levels, params.c_q * state.xi + u).ok_or(QuantizerError::NoLevels)?;
    let v = params.levels[port];
    let xi = params.a_q * state.xi + params.b_q * (v - u);
    Ok(QuantizerOutput { v, port, next: QuantizerState { xi } })
}

/// Reference system: the plant driven by the continuous input `u`.
pub fn reference_step(plant: &DiscretePlant, x_ref: f64, u: f64) -> (f64, f64) {
    (plant.a * x_ref + plant.b * u, plant.c * x_ref)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TriRange {
    /// `tri ∈ [0, 1]`: zero at multiples of π, one at odd multiples of π/2.
    #[default]
    Unit,
    /// `tri ∈ [-1, 1]` with period 2π: 0 at 0, 1 at π/2, 0 at π, -1 at 3π/2.
    Signed,
}

/// `u(k) = offset + amplitude · tri(2πk/K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub amplitude: f64,
    pub offset: f64,
    pub period_slots: u32,
    pub range: TriRange,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec { amplitude: 4.0, offset: 8.0, period_slots: 125, range: TriRange::Unit }
    }
}

impl ReferenceSpec {
    /// Position within one period of the underlying triangle as a fraction
    /// in `[0, 1)`, computed from integers.
    fn phase(&self, k: u64) -> f64 {
        let kk = self.period_slots as u64;
        match self.range {
            TriRange::Unit => ((2 * k) % kk) as f64 / kk as f64,
            TriRange::Signed => (k % kk) as f64 / kk as f64,
        }
    }

    /// Sign of `du/dk` at slot `k`: 1 rising, -1 falling, 0 at a vertex or
    /// for a flat reference.
    pub fn slope_sign(&self, k: u64) -> i8 {
        if self.amplitude == 0.0 {
            return 0;
        }
        let p = self.phase(k);
        let s: i8 = match self.range {
            TriRange::Unit if p < 0.5 => 1,
            TriRange::Unit if p > 0.5 => -1,
            TriRange::Signed if !(0.25..=0.75).contains(&p) => 1,
            TriRange::Signed if p > 0.25 && p < 0.75 => -1,
            _ => 0,
        };
        if p == 0.0 && self.range == TriRange::Unit {
            return 0;
        }
        s * self.amplitude.signum() as i8
    }
}

/// Unit triangle evaluated at a phase fraction of its period.
fn tri_at(range: TriRange, p: f64) -> f64 {
    match range {
        TriRange::Unit => 1.0 - (1.0 - 2.0 * p).abs(),
        TriRange::Signed => {
            if p < 0.25 {
                4.0 * p
            } else if p < 0.75 {
                2.0 - 4.0 * p
            } else {
                4.0 * p - 4.0
            }
        }
    }
}

pub fn triangular_reference(spec: &ReferenceSpec, k: u64) -> f64 {
    spec.offset + spec.amplitude * tri_at(spec.range, spec.phase(k))
}

/// Upper bound on `levels^horizon` for [`brute_force_optimal`].
pub const MAX_ENUMERATION: u64 = 1 << 24;
pub const MAX_HORIZON: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceCost {
    /// `max_k |y(k) - y_ref(k)|` over `k = 1..=N`.
    pub max_error: f64,
    /// `Σ_k (y(k) - y_ref(k))²` over the same range.
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSequence {
    pub ports: Vec<usize>,
    pub cost: SequenceCost,
}

/// Output error of driving `plant` with `ports` against the reference system
/// driven by `u`, both starting from `x0`.
pub fn sequence_cost(plant: &DiscretePlant, u: &[f64], x0: f64, ports: &[usize]) -> SequenceCost {
    let (mut x, mut x_ref) = (x0, x0);
    let mut cost = SequenceCost { max_error: 0.0, sse: 0.0 };
    for (&uk, &p) in u.iter().zip(ports) {
        x = plant.advance(x, Some(p));
        x_ref = reference_step(plant, x_ref, uk).0;
        let e = plant.c * (x - x_ref);
        cost.max_error = cost.max_error.max(e.abs());
        cost.sse += e * e;
    }
    cost
}

struct Search<'a> {
    plant: &'a DiscretePlant,
    u: &'a [f64],
    x_ref: Vec<f64>,
    path: Vec<usize>,
    best: Option<OptimalSequence>,
}

impl Search<'_> {
    fn visit(&mut self, depth: usize, x: f64, max_err: f64, sse: f64) {
        if let Some(b) = &self.best {
            if max_err > b.cost.max_error {
                return;
            }
        }
        if depth == self.u.len() {
            let better = match &self.best {
                None => true,
                Some(b) => max_err < b.cost.max_error || (max_err == b.cost.max_error && sse < b.cost.sse),
            };
            if better {
                self.best =
                    Some(OptimalSequence { ports: self.path.clone(), cost: SequenceCost { max_error: max_err, sse } });
            }
            return;
        }
        for p in 0..self.plant.levels.len() {
            let xn = self.plant.advance(x, Some(p));
            let e = self.plant.c * (xn - self.x_ref[depth + 1]);
            self.path.push(p);
            self.visit(depth + 1, xn, max_err.max(e.abs()), sse + e * e);
            self.path.pop();
        }
    }
}

/// Exhaustive search over every level sequence of length `u.len()` for the
/// one minimizing the minimax output error, with SSE as the secondary key
/// and lexicographic order of level indices breaking exact ties. Branches
/// whose running maximum already exceeds the incumbent are cut, which never
/// changes the result.
pub fn brute_force_optimal(plant: &DiscretePlant, u: &[f64], x0: f64) -> Result<OptimalSequence, QuantizerError> {
    let (n_levels, horizon) = (plant.levels.len(), u.len());
    if n_levels == 0 {
        return Err(QuantizerError::NoLevels);
    }
    let too_large =
        horizon > MAX_HORIZON || (n_levels as u64).checked_pow(horizon as u32).is_none_or(|n| n > MAX_ENUMERATION);
    if too_large {
        return Err(QuantizerError::TooLarge { levels: n_levels, horizon });
    }
    let mut x_ref = Vec::with_capacity(horizon + 1);
    x_ref.push(x0);
    for &uk in u {
        let last = x_ref[x_ref.len() - 1];
        x_ref.push(reference_step(plant, last, uk).0);
    }
    let mut search = Search { plant, u, x_ref, path: Vec::with_capacity(horizon), best: None };
    search.visit(0, x0, 0.0, 0.0);
    Ok(search.best.expect("at least one sequence enumerated"))
}
