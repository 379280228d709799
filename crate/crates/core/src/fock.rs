//! Single-mode truncated Fock space.
//!
//! Operators are dense `dim x dim` complex matrices in the number basis
//! `|0>, ..., |dim-1>`. Units follow the optics convention used throughout the
//! crate: `hbar = 1`, positions in meters, momenta in inverse meters, and
//! `sigma0` is the spatial standard deviation of the fundamental Gaussian mode.
//!
//! Any finite truncation breaks `[X, P] = i` on the top two levels, so every
//! operation that consumes a state checks that the state has no weight there.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{QmetError, Result};

/// Levels kept above the highest mode of interest.
pub const MODE_BUFFER: usize = 6;

/// Levels at the top of the truncation where the canonical algebra fails.
pub const EDGE_LEVELS: usize = 2;

/// Amplitude magnitude above which a level counts as occupied.
pub const SUPPORT_TOLERANCE: f64 = 1e-10;

pub const HERMITICITY_TOLERANCE: f64 = 1e-12;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockSpace {
    dim: usize,
    sigma0: f64,
}

impl FockSpace {
    pub fn new(dim: usize, sigma0: f64) -> Result<Self> {
        if dim < 2 {
            return Err(QmetError::InvalidSpace(format!("dim must be >= 2, got {dim}")));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(QmetError::InvalidSpace(format!(
                "sigma0 must be positive and finite, got {sigma0}"
            )));
        }
        Ok(Self { dim, sigma0 })
    }

    /// Smallest space that holds mode `n` with the standard buffer.
    pub fn for_mode(n: usize, sigma0: f64) -> Result<Self> {
        Self::new(n + MODE_BUFFER, sigma0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Number of leading levels on which `[X, P] = i` holds exactly.
    pub fn safe_levels(&self) -> usize {
        self.dim.saturating_sub(EDGE_LEVELS)
    }

    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(dim, self.sigma0)
    }

    fn check_same(&self, other: &FockSpace, what: &str) -> Result<()> {
        if self.dim != other.dim || self.sigma0 != other.sigma0 {
            return Err(QmetError::Dimension(format!(
                "{what}: space (dim {}, sigma0 {}) vs (dim {}, sigma0 {})",
                self.dim, self.sigma0, other.dim, other.sigma0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    space: FockSpace,
    entries: Array2<Complex64>,
}

impl OperatorMatrix {
    pub fn new(space: FockSpace, entries: Array2<Complex64>) -> Result<Self> {
        if entries.nrows() != space.dim() || entries.ncols() != space.dim() {
            return Err(QmetError::Dimension(format!(
                "operator is {}x{}, space dim is {}",
                entries.nrows(),
                entries.ncols(),
                space.dim()
            )));
        }
        Ok(Self { space, entries })
    }

    pub fn identity(space: FockSpace) -> Self {
        Self { space, entries: Array2::eye(space.dim()) }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<Complex64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[[row, col]]
    }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space,
            entries: self.entries.t().mapv(|z| z.conj()),
        }
    }

    /// `max |M - M^dagger|`, scaled by the largest entry when that exceeds one.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = max_abs(&self.entries).max(1.0);
        let n = self.space.dim();
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in r..n {
                let d = (self.entries[[r, c]] - self.entries[[c, r]].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() < HERMITICITY_TOLERANCE
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.space.check_same(&other.space, "matmul")?;
        Ok(Self { space: self.space, entries: self.entries.dot(&other.entries) })
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.space.check_same(&other.space, "add")?;
        Ok(Self { space: self.space, entries: &self.entries + &other.entries })
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.space.check_same(&other.space, "sub")?;
        Ok(Self { space: self.space, entries: &self.entries - &other.entries })
    }

    pub fn scale(&self, factor: Complex64) -> OperatorMatrix {
        Self { space: self.space, entries: self.entries.mapv(|z| z * factor) }
    }

    pub fn scale_real(&self, factor: f64) -> OperatorMatrix {
        self.scale(Complex64::new(factor, 0.0))
    }

    /// `AB - BA`
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// `AB + BA`
    pub fn anticommutator(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.matmul(other)?.add(&other.matmul(self)?)
    }

    pub fn apply(&self, state: &PointerState) -> Result<PointerState> {
        self.space.check_same(&state.space, "apply")?;
        Ok(PointerState {
            space: self.space,
            amplitudes: self.entries.dot(&state.amplitudes),
            normalized: false,
        })
    }

    /// Largest entrywise difference restricted to the leading `levels` block.
    pub fn max_abs_diff_on(&self, other: &OperatorMatrix, levels: usize) -> Result<f64> {
        self.space.check_same(&other.space, "compare")?;
        let levels = levels.min(self.space.dim());
        let mut worst = 0.0_f64;
        for r in 0..levels {
            for c in 0..levels {
                worst = worst.max((self.entries[[r, c]] - other.entries[[r, c]]).norm());
            }
        }
        Ok(worst)
    }

    /// Restrict to the leading `dim` levels of a larger space.
    pub fn truncate_to(&self, dim: usize) -> Result<OperatorMatrix> {
        if dim > self.space.dim() {
            return Err(QmetError::Dimension(format!(
                "cannot truncate dim {} to larger dim {dim}",
                self.space.dim()
            )));
        }
        let space = self.space.with_dim(dim)?;
        let entries = self.entries.slice(ndarray::s![..dim, ..dim]).to_owned();
        Ok(Self { space, entries })
    }
}

pub(crate) fn max_abs(m: &Array2<Complex64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointerState {
    space: FockSpace,
    amplitudes: Array1<Complex64>,
    normalized: bool,
}

impl PointerState {
    /// Wraps raw amplitudes without normalizing them.
    pub fn new(space: FockSpace, amplitudes: Array1<Complex64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(QmetError::Dimension(format!(
                "state has {} amplitudes, space dim is {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(Self { space, amplitudes, normalized: false })
    }

    pub fn from_normalized(space: FockSpace, amplitudes: Array1<Complex64>) -> Result<Self> {
        Self::new(space, amplitudes)?.normalize()
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, level: usize) -> Complex64 {
        self.amplitudes.get(level).copied().unwrap_or(ZERO)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(QmetError::Precondition("cannot normalize a zero state".into()));
        }
        self.amplitudes.mapv_inplace(|z| z / norm);
        self.normalized = true;
        Ok(self)
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PointerState) -> Result<Complex64> {
        self.space.check_same(&other.space, "inner product")?;
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scale(&self, factor: Complex64) -> PointerState {
        PointerState {
            space: self.space,
            amplitudes: self.amplitudes.mapv(|z| z * factor),
            normalized: self.normalized && (factor.norm() - 1.0).abs() < NORMALIZATION_TOLERANCE,
        }
    }

    pub fn add(&self, other: &PointerState) -> Result<PointerState> {
        self.space.check_same(&other.space, "add")?;
        Ok(PointerState {
            space: self.space,
            amplitudes: &self.amplitudes + &other.amplitudes,
            normalized: false,
        })
    }

    pub fn sub(&self, other: &PointerState) -> Result<PointerState> {
        self.add(&other.scale(-ONE))
    }

    pub fn distance(&self, other: &PointerState) -> Result<f64> {
        Ok(self.sub(other)?.norm_sqr().sqrt())
    }

    /// Multiplies by a global phase so the amplitude at `level` is real and
    /// non-negative. Used to compare states built along different routes.
    pub fn align_phase(&self, level: usize) -> PointerState {
        let a = self.amplitude(level);
        if a.norm() == 0.0 {
            return self.clone();
        }
        let phase = a.conj() / a.norm();
        let mut out = self.scale(phase);
        out.normalized = self.normalized;
        out
    }

    pub fn highest_occupied_level(&self) -> Option<usize> {
        self.amplitudes.iter().rposition(|z| z.norm() > SUPPORT_TOLERANCE)
    }

    pub fn at_truncation_edge(&self) -> bool {
        matches!(self.highest_occupied_level(), Some(l) if l >= self.space.safe_levels())
    }

    /// Errors when the state has weight on the top two levels.
    pub fn check_support(&self) -> Result<()> {
        match self.highest_occupied_level() {
            Some(level) if level >= self.space.safe_levels() => {
                Err(QmetError::TruncationEdge { level, dim: self.space.dim() })
            }
            _ => Ok(()),
        }
    }

    /// Embeds into a larger space with the same `sigma0`, padding with zeros.
    pub fn embed(&self, dim: usize) -> Result<PointerState> {
        if dim < self.space.dim() {
            return Err(QmetError::Dimension(format!(
                "cannot embed dim {} into smaller dim {dim}",
                self.space.dim()
            )));
        }
        let mut amps = Array1::zeros(dim);
        amps.slice_mut(ndarray::s![..self.space.dim()]).assign(&self.amplitudes);
        Ok(PointerState {
            space: self.space.with_dim(dim)?,
            amplitudes: amps,
            normalized: self.normalized,
        })
    }
}

/// Annihilation and creation operators, `a|n> = sqrt(n)|n-1>`.
pub fn ladder_operators(space: FockSpace) -> (OperatorMatrix, OperatorMatrix) {
    let n = space.dim();
    let mut a = Array2::zeros((n, n));
    for level in 1..n {
        a[[level - 1, level]] = Complex64::new((level as f64).sqrt(), 0.0);
    }
    let annihilation = OperatorMatrix { space, entries: a };
    let creation = annihilation.dagger();
    (annihilation, creation)
}

/// Momentum `P = (a - a^dagger) / (2 i sigma0)` and position
/// `X = sigma0 (a + a^dagger)`.
pub fn quadrature_operators(space: FockSpace) -> (OperatorMatrix, OperatorMatrix) {
    let (a, ad) = ladder_operators(space);
    let s0 = space.sigma0();
    let diff = &a.entries - &ad.entries;
    let sum = &a.entries + &ad.entries;
    let p = diff.mapv(|z| z / (2.0 * I * s0));
    let x = sum.mapv(|z| z * s0);
    (OperatorMatrix { space, entries: p }, OperatorMatrix { space, entries: x })
}

/// Number state `|n>`. A state at `n = dim - 1` is valid but reports
/// [`PointerState::at_truncation_edge`].
pub fn fock_state(space: FockSpace, n: usize) -> Result<PointerState> {
    if n >= space.dim() {
        return Err(QmetError::Index { index: n, dim: space.dim() });
    }
    let mut amps = Array1::zeros(space.dim());
    amps[n] = ONE;
    Ok(PointerState { space, amplitudes: amps, normalized: true })
}

/// `<psi|op|psi>`
pub fn expectation(op: &OperatorMatrix, state: &PointerState) -> Result<Complex64> {
    state.inner(&op.apply(state)?)
}

/// `<op^2> - <op>^2` for a Hermitian operator.
pub fn variance(op: &OperatorMatrix, state: &PointerState) -> Result<f64> {
    if !op.is_hermitian() {
        return Err(QmetError::Precondition(format!(
            "variance requires a Hermitian operator (defect {:.3e})",
            op.hermiticity_defect()
        )));
    }
    let applied = op.apply(state)?;
    let second = applied.norm_sqr();
    let first = state.inner(&applied)?.re;
    Ok(second - first * first)
}

/// `<[A, B]>`
pub fn commutator_expectation(
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    state: &PointerState,
) -> Result<Complex64> {
    a.space.check_same(&b.space, "commutator")?;
    let b_psi = b.apply(state)?;
    let a_psi = a.apply(state)?;
    // <A B> - <B A> = <A^dag psi | B psi> - <B^dag psi | A psi>; for
    // non-Hermitian inputs fall back to explicit products.
    if a.is_hermitian() && b.is_hermitian() {
        let ab = a_psi.inner(&b_psi)?;
        Ok(ab - ab.conj())
    } else {
        let ab = state.inner(&a.apply(&b_psi)?)?;
        let ba = state.inner(&b.apply(&a_psi)?)?;
        Ok(ab - ba)
    }
}

/// Normalized Hermite-Gaussian wavefunction of order `n` at position `x`.
pub fn hermite_wavefunction(n: usize, sigma0: f64, x: f64) -> f64 {
    hermite_wavefunctions(n, sigma0, x)[n]
}

/// All normalized Hermite-Gaussian wavefunctions of order `0..=n_max` at `x`.
///
/// The normalization is carried through the three-term recurrence
/// `psi_{k+1} = sqrt(2/(k+1)) xi psi_k - sqrt(k/(k+1)) psi_{k-1}`, which keeps
/// every term O(1) for large orders.
pub fn hermite_wavefunctions(n_max: usize, sigma0: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let xi = x / (std::f64::consts::SQRT_2 * sigma0);
    let psi0 = (2.0 * std::f64::consts::PI * sigma0 * sigma0).powf(-0.25)
        * (-x * x / (4.0 * sigma0 * sigma0)).exp();
    out.push(psi0);
    if n_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * xi * psi0);
    for k in 1..n_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * xi * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// `<x|psi>` from the number-basis expansion.
pub fn position_wavefunction(state: &PointerState, x: f64) -> Complex64 {
    let space = state.space();
    let basis = hermite_wavefunctions(space.dim() - 1, space.sigma0(), x);
    state
        .amplitudes()
        .iter()
        .zip(basis)
        .map(|(c, psi)| c * psi)
        .sum()
}
