//! Pure states, POVM effects and the Born rule.
//!
//! States are unit vectors in ℂ^d (or ℝ^d when the field is
//! [`Field::Real`]); a measurement is a triple of positive semidefinite
//! effects `E_0 + E_1 + E_2 = I`. The two scalar quantities the rest of
//! the crate is built on are the Born probability `P(E|ψ) = ⟨ψ|E|ψ⟩`
//! and the quantum overlap
//!
//! ```text
//! ω_Q(a, b) = 1 − √(1 − |⟨a|b⟩|²),
//! ```
//!
//! the error probability (doubled) of optimally discriminating two
//! equiprobable pure states in one shot: the success probability is
//! `1 − ω_Q/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::Result;

/// Smallest / largest state-space dimension the crate supports.
pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Number field the amplitudes live in.
///
/// With `Real` every amplitude and effect entry must have an exactly
/// zero imaginary part; optimizers then search orthogonal rather than
/// unitary parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }
}

impl std::str::FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(Error::BadOptions {
                detail: format!("unknown field {other:?} (expected \"real\" or \"complex\")"),
            }),
        }
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    coeffs: DVector<Complex64>,
}

impl PureState {
    /// Normalizes `amplitudes` into a state. See [`make_state`].
    pub fn new(amplitudes: &[Complex64], field: Field) -> Result<Self> {
        let dim = amplitudes.len();
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::BadDimension {
                dim,
                detail: "states need 2 to 8 amplitudes",
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        if field == Field::Real && amplitudes.iter().any(|a| a.im != 0.0) {
            return Err(Error::FieldMismatch);
        }
        let coeffs = DVector::from_iterator(dim, amplitudes.iter().copied());
        let norm = coeffs.norm();
        if norm <= 1e-12 {
            return Err(Error::ZeroNorm);
        }
        // Skip the rescale when the input is already unit-norm to working
        // precision: dividing by 1 ± ulp only churns the last bits, and
        // leaving exact inputs untouched makes construction idempotent —
        // a state written to disk and reloaded keeps its bits.
        if (norm - 1.0).abs() <= 16.0 * f64::EPSILON {
            return Ok(Self { coeffs });
        }
        Ok(Self { coeffs: coeffs / Complex64::new(norm, 0.0) })
    }

    /// Real-amplitude convenience constructor.
    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        let amps: Vec<Complex64> = amplitudes.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(&amps, Field::Real)
    }

    pub(crate) fn from_vector(coeffs: DVector<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Normalized amplitude vector.
    pub fn coeffs(&self) -> &DVector<Complex64> {
        &self.coeffs
    }

    /// Inner product ⟨self|other⟩ (conjugate-linear in `self`).
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.coeffs.dotc(&other.coeffs)
    }

    /// True when every amplitude has an exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|a| a.im == 0.0)
    }
}

/// Builds a normalized [`PureState`] from raw amplitudes.
///
/// The input may have any nonzero norm; it is scaled to unit norm. With
/// [`Field::Real`] all imaginary parts must be exactly zero.
pub fn make_state(amplitudes: &[Complex64], field: Field) -> Result<PureState> {
    PureState::new(amplitudes, field)
}

/// One POVM element: a d×d matrix, nominally Hermitian and positive
/// semidefinite with eigenvalues in [0, 1].
///
/// Construction checks only shape and finiteness so that ill-conditioned
/// effects can still be *inspected*; [`validate_measurement`] reports
/// Hermiticity / positivity violations instead of refusing to build.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    matrix: DMatrix<Complex64>,
}

impl Effect {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c {
            return Err(Error::DimensionMismatch { left: r, right: c });
        }
        if !(MIN_DIM..=MAX_DIM).contains(&r) {
            return Err(Error::BadDimension {
                dim: r,
                detail: "effects need dimension 2 to 8",
            });
        }
        if matrix.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { matrix })
    }

    /// Rank-one projector |ψ⟩⟨ψ| onto a state.
    pub fn projector(state: &PureState) -> Self {
        let v = state.coeffs();
        Self { matrix: v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|a| a.im == 0.0)
    }

    /// max |E − E†| over entries.
    pub fn hermitian_residual(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalue range of the Hermitian part (E + E†)/2.
    ///
    /// Entries of astronomic magnitude would overflow to ±∞/NaN inside
    /// the eigensolver (it squares entries), which can stall its
    /// iteration; such a matrix is unboundedly far from an effect, so it
    /// reports as `(-∞, ∞)` — failing every range check — instead.
    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let max = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !max.is_finite() || max > 1e150 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let eigs = nalgebra::SymmetricEigen::new(herm).eigenvalues;
        let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// A three-outcome measurement (the antidistinguishing kind used
/// throughout: outcome `m_i` means "the preparation was not `ψ_{j_i}`").
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    effects: Vec<Effect>,
}

impl Measurement {
    /// Bundles exactly three effects of a common dimension. Completeness
    /// and positivity are *not* enforced here; see [`validate_measurement`].
    pub fn new(effects: Vec<Effect>) -> Result<Self> {
        if effects.len() != 3 {
            return Err(Error::BadOptions {
                detail: format!("a measurement needs exactly 3 effects, got {}", effects.len()),
            });
        }
        let dim = effects[0].dim();
        for e in &effects[1..] {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: e.dim() });
            }
        }
        Ok(Self { effects })
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn is_real(&self) -> bool {
        self.effects.iter().all(Effect::is_real)
    }

    /// Born probabilities of the three outcomes on `state`.
    pub fn probabilities(&self, state: &PureState) -> Result<[f64; 3]> {
        Ok([
            born_probability(state, &self.effects[0])?,
            born_probability(state, &self.effects[1])?,
            born_probability(state, &self.effects[2])?,
        ])
    }
}

/// Health report for a measurement; see [`validate_measurement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementDiagnostics {
    /// Every effect satisfies max|E − E†| ≤ tol.
    pub hermitian_ok: bool,
    /// Every effect's smallest eigenvalue (of its Hermitian part) is ≥ −tol.
    pub psd_ok: bool,
    /// max-abs entry of (Σ_i E_i − I).
    pub completeness_residual: f64,
}

/// Reports how far a measurement is from being a valid POVM, without
/// mutating or rejecting it. `tol` must be positive.
pub fn validate_measurement(m: &Measurement, tol: f64) -> Result<MeasurementDiagnostics> {
    if !(tol > 0.0) {
        return Err(Error::BadOptions {
            detail: format!("validation tolerance must be positive, got {tol}"),
        });
    }
    let hermitian_ok = m.effects().iter().all(|e| e.hermitian_residual() <= tol);
    let psd_ok = m.effects().iter().all(|e| e.eigenvalue_range().0 >= -tol);
    let dim = m.dim();
    let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
    for e in m.effects() {
        sum += e.matrix();
    }
    sum -= DMatrix::<Complex64>::identity(dim, dim);
    let completeness_residual = sum.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(MeasurementDiagnostics { hermitian_ok, psd_ok, completeness_residual })
}

/// Born probability `⟨ψ|E|ψ⟩`.
///
/// The real part is taken (the imaginary part of a Hermitian quadratic
/// form is zero up to rounding) and the value is clamped into [0, 1]
/// only when it strays by at most 1e-9; larger excursions are reported
/// as they are, so that diagnostics on broken effects stay honest.
pub fn born_probability(state: &PureState, effect: &Effect) -> Result<f64> {
    if state.dim() != effect.dim() {
        return Err(Error::DimensionMismatch { left: state.dim(), right: effect.dim() });
    }
    let ev = effect.matrix() * state.coeffs();
    let p = state.coeffs().dotc(&ev).re;
    Ok(clamp_unit(p, 1e-9))
}

/// Quantum overlap ω_Q(a, b) = 1 − √(1 − |⟨a|b⟩|²) ∈ [0, 1].
pub fn quantum_overlap(a: &PureState, b: &PureState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let c2 = a.inner(b).norm_sqr().min(1.0);
    Ok(1.0 - (1.0 - c2).sqrt())
}

/// Optimal one-shot success probability of telling `a` from `b` given a
/// fair coin toss between them: 1 − ω_Q(a, b)/2.
pub fn discrimination_success(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(1.0 - quantum_overlap(a, b)? / 2.0)
}

/// Clamp `x` into [0, 1] if it lies within `slack` of the interval.
pub(crate) fn clamp_unit(x: f64, slack: f64) -> f64 {
    if x < 0.0 && x >= -slack {
        0.0
    } else if x > 1.0 && x <= 1.0 + slack {
        1.0
    } else {
        x
    }
}

// ---------------------------------------------------------------------
// Seeded random ingredients shared by the optimizer, simulator and tests.
// ---------------------------------------------------------------------

/// iid standard-Gaussian vector (complex entries get independent real
/// and imaginary parts) — the rotation-invariant raw material for
/// uniform states and Haar-like unitaries.
pub(crate) fn gaussian_vector<R: Rng + ?Sized>(dim: usize, field: Field, rng: &mut R) -> DVector<Complex64> {
    DVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = match field {
            Field::Real => 0.0,
            Field::Complex => rng.sample(StandardNormal),
        };
        Complex64::new(re, im)
    })
}

/// Uniformly random unit vector on the real or complex sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(
    dim: usize,
    field: Field,
    rng: &mut R,
) -> DVector<Complex64> {
    loop {
        let v = gaussian_vector(dim, field, rng);
        let norm = v.norm();
        if norm > 1e-6 {
            return v / Complex64::new(norm, 0.0);
        }
    }
}

/// Haar-distributed orthogonal (real field) or unitary matrix, via QR of
/// a Gaussian matrix with the R-diagonal phase fixed.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, field: Field, rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = match field {
            Field::Real => 0.0,
            Field::Complex => rng.sample(StandardNormal),
        };
        Complex64::new(re, im)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..dim {
        let rkk = r[(k, k)];
        let phase = if rkk.norm() > 0.0 { rkk / rkk.norm() } else { Complex64::new(1.0, 0.0) };
        // Multiply column k by conj(phase) so the factorization would have
        // a positive R diagonal; this makes Q exactly Haar-distributed.
        let scale = phase.conj();
        for i in 0..dim {
            q[(i, k)] *= scale;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn make_state_normalizes_three_four_five() {
        let s = PureState::from_real(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(s.coeffs()[0].re, 0.6, epsilon = 1e-15);
        assert_relative_eq!(s.coeffs()[1].re, 0.8, epsilon = 1e-15);
        assert_relative_eq!(s.coeffs().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn make_state_rejects_zero_and_nonfinite_and_bad_dims() {
        assert!(matches!(
            PureState::from_real(&[0.0, 0.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            PureState::from_real(&[1.0, f64::NAN]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            PureState::from_real(&[1.0]),
            Err(Error::BadDimension { .. })
        ));
        assert!(matches!(
            PureState::from_real(&[1.0; 9]),
            Err(Error::BadDimension { .. })
        ));
        assert!(matches!(
            make_state(&[Complex64::new(1.0, 0.5), c(0.0)], Field::Real),
            Err(Error::FieldMismatch)
        ));
    }

    #[test]
    fn quantum_overlap_matches_hand_computation() {
        // |⟨a|b⟩|² = 1/2 ⇒ ω_Q = 1 − 1/√2.
        let a = PureState::from_real(&[1.0, 0.0]).unwrap();
        let b = PureState::from_real(&[1.0, 1.0]).unwrap();
        let w = quantum_overlap(&a, &b).unwrap();
        assert_relative_eq!(w, 1.0 - 0.5f64.sqrt(), epsilon = 1e-12);
        // Optimal discrimination success 1 − ω/2.
        let s = discrimination_success(&a, &b).unwrap();
        assert_relative_eq!(s, 1.0 - w / 2.0, epsilon = 1e-15);
        // Extremes: identical states overlap fully, orthogonal not at all.
        assert_relative_eq!(quantum_overlap(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        let e2 = PureState::from_real(&[0.0, 1.0]).unwrap();
        assert_relative_eq!(quantum_overlap(&a, &e2).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn born_probability_on_basis_projector() {
        let s = PureState::from_real(&[0.6, 0.8]).unwrap();
        let e0 = PureState::from_real(&[1.0, 0.0]).unwrap();
        let p = born_probability(&s, &Effect::projector(&e0)).unwrap();
        assert_relative_eq!(p, 0.36, epsilon = 1e-12);
    }

    #[test]
    fn validate_measurement_flags_broken_povms() {
        // Complete orthonormal-basis measurement: residual exactly zero.
        let basis: Vec<Effect> = (0..3)
            .map(|k| {
                let mut v = vec![0.0; 3];
                v[k] = 1.0;
                Effect::projector(&PureState::from_real(&v).unwrap())
            })
            .collect();
        let m = Measurement::new(basis).unwrap();
        let d = validate_measurement(&m, 1e-9).unwrap();
        assert!(d.hermitian_ok && d.psd_ok);
        assert_eq!(d.completeness_residual, 0.0);

        // Scaled projectors that do not sum to I.
        let bad: Vec<Effect> = (0..3)
            .map(|_| {
                let e0 = PureState::from_real(&[1.0, 0.0, 0.0]).unwrap();
                Effect::new(Effect::projector(&e0).matrix() * Complex64::new(2.0 / 3.0, 0.0))
                    .unwrap()
            })
            .collect();
        let d = validate_measurement(&Measurement::new(bad).unwrap(), 1e-9).unwrap();
        assert!(d.completeness_residual > 0.9);

        // An effect with a clearly negative eigenvalue trips psd_ok.
        let neg = Effect::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.0),
            c(-0.1),
            c(0.1),
        ])))
        .unwrap();
        let rest = Effect::new(
            DMatrix::<Complex64>::identity(3, 3) - neg.matrix() * Complex64::new(0.5, 0.0),
        )
        .unwrap();
        let m = Measurement::new(vec![
            Effect::new(neg.matrix() * c(0.5)).unwrap(),
            Effect::new((rest.matrix() * c(0.5)).clone()).unwrap(),
            Effect::new((rest.matrix() * c(0.5)).clone()).unwrap(),
        ])
        .unwrap();
        let d = validate_measurement(&m, 1e-6).unwrap();
        assert!(!d.psd_ok);
    }

    #[test]
    fn random_unitary_is_unitary_and_respects_field() {
        for &field in &[Field::Real, Field::Complex] {
            let mut rng = stream(5, "test/unitary", 0);
            let u = random_unitary(4, field, &mut rng);
            let gram = u.adjoint() * &u;
            let dev = (gram - DMatrix::<Complex64>::identity(4, 4))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-12, "unitarity deviation {dev}");
            if field == Field::Real {
                assert!(u.iter().all(|z| z.im == 0.0));
            }
        }
    }
}
