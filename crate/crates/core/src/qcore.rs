//! Dense complex linear algebra and quantum-state primitives over small
//! tensor-product Hilbert spaces with labeled atomic levels.
//!
//! Basis ordering is lexicographic over atom tuples in declared atom order,
//! the first atom being the most significant digit. For the two-atom register
//! `control {0,1,r} ⊗ target {0,1,m,r}` the basis therefore runs
//! `00, 01, 0m, 0r, 10, 11, …, rr`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const KET_NORM_TOL: f64 = 1e-9;
pub const HERMITIAN_STATE_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;
pub const HERMITIAN_OP_TOL: f64 = 1e-10;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Atomic level label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    /// Auxiliary ground state of the target atom.
    #[serde(rename = "m")]
    M,
    /// Rydberg state.
    #[serde(rename = "r")]
    R,
}

impl Level {
    pub fn symbol(self) -> char {
        match self {
            Level::Zero => '0',
            Level::One => '1',
            Level::M => 'm',
            Level::R => 'r',
        }
    }

    pub fn from_symbol(c: char) -> Result<Self> {
        match c {
            '0' => Ok(Level::Zero),
            '1' => Ok(Level::One),
            'm' => Ok(Level::M),
            'r' => Ok(Level::R),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Level::from_symbol(c),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Tensor product of per-atom level sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    atoms: Vec<Vec<Level>>,
    strides: Vec<usize>,
    dim: usize,
}

impl HilbertSpace {
    pub fn new(atoms: Vec<Vec<Level>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::param("atoms", "a Hilbert space needs at least one atom"));
        }
        for (i, levels) in atoms.iter().enumerate() {
            if levels.is_empty() {
                return Err(Error::param("atoms", format!("atom {i} has no levels")));
            }
            let mut sorted = levels.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != levels.len() {
                return Err(Error::param("atoms", format!("atom {i} repeats a level")));
            }
        }
        let mut strides = vec![1; atoms.len()];
        for i in (0..atoms.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * atoms[i + 1].len();
        }
        let dim = strides[0] * atoms[0].len();
        Ok(Self {
            atoms,
            strides,
            dim,
        })
    }

    /// `n − 1` control atoms `{0,1,r}` followed by one target atom `{0,1,m,r}`.
    pub fn rydberg_register(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "a controlled gate needs at least two atoms"));
        }
        let mut atoms = vec![vec![Level::Zero, Level::One, Level::R]; n - 1];
        atoms.push(vec![Level::Zero, Level::One, Level::M, Level::R]);
        Self::new(atoms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn levels(&self, atom: usize) -> &[Level] {
        &self.atoms[atom]
    }

    pub fn index_of(&self, labels: &[Level]) -> Result<usize> {
        if labels.len() != self.atoms.len() {
            return Err(Error::UnknownLabel(format_labels(labels)));
        }
        let mut index = 0;
        for ((levels, stride), label) in self.atoms.iter().zip(&self.strides).zip(labels) {
            let pos = levels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::UnknownLabel(format_labels(labels)))?;
            index += pos * stride;
        }
        Ok(index)
    }

    pub fn labels_of(&self, index: usize) -> Vec<Level> {
        assert!(index < self.dim, "basis index {index} out of range");
        self.atoms
            .iter()
            .zip(&self.strides)
            .map(|(levels, stride)| levels[(index / stride) % levels.len()])
            .collect()
    }

    /// Level of `atom` in basis state `index`.
    pub fn level_at(&self, index: usize, atom: usize) -> Level {
        let levels = &self.atoms[atom];
        levels[(index / self.strides[atom]) % levels.len()]
    }

    pub fn label_string(&self, index: usize) -> String {
        format_labels(&self.labels_of(index))
    }

    /// Parses a compact label such as `"11m"`.
    pub fn parse_labels(&self, s: &str) -> Result<Vec<Level>> {
        let labels = s.chars().map(Level::from_symbol).collect::<Result<Vec<_>>>()?;
        self.index_of(&labels)?;
        Ok(labels)
    }

    pub fn basis_labels(&self) -> impl Iterator<Item = Vec<Level>> + '_ {
        (0..self.dim).map(move |i| self.labels_of(i))
    }
}

pub fn format_labels(labels: &[Level]) -> String {
    labels.iter().map(|l| l.symbol()).collect()
}

/// Square complex matrix with an optional Hermiticity guarantee.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    /// Wraps `matrix`, checking `max |A − A†| < 1e-10`.
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let dev = hermitian_deviation(&op.matrix);
        if dev >= HERMITIAN_OP_TOL {
            return Err(Error::param(
                "matrix",
                format!("not Hermitian (max |A - A†| = {dev:e})"),
            ));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    /// `|to⟩⟨from|` on a single atom with the given level set.
    pub fn transition(levels: &[Level], to: Level, from: Level) -> Result<Self> {
        let find = |l: Level| {
            levels
                .iter()
                .position(|x| *x == l)
                .ok_or_else(|| Error::UnknownLabel(l.to_string()))
        };
        let (i, j) = (find(to)?, find(from)?);
        let mut m = CMatrix::zeros(levels.len(), levels.len());
        m[(i, j)] = c(1.0);
        Ok(Self {
            matrix: m,
            hermitian: i == j,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * c(factor),
            hermitian: self.hermitian,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    let prod = m.adjoint() * m;
    let id = CMatrix::identity(m.nrows(), m.ncols());
    (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Identity on every other atom, `local` on atom `position`.
pub fn tensor_embed(local: &Operator, position: usize, space: &HilbertSpace) -> Result<Operator> {
    if position >= space.n_atoms() {
        return Err(Error::AtomOutOfRange {
            index: position,
            atoms: space.n_atoms(),
        });
    }
    let levels = space.levels(position).len();
    if local.dim() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            found: local.dim(),
        });
    }
    let mut out = CMatrix::identity(1, 1);
    for atom in 0..space.n_atoms() {
        let factor = if atom == position {
            local.matrix.clone()
        } else {
            let d = space.levels(atom).len();
            CMatrix::identity(d, d)
        };
        out = out.kronecker(&factor);
    }
    Ok(Operator {
        matrix: out,
        hermitian: local.hermitian,
    })
}

/// Pure ket or density matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Ket(CVector),
    Density(CMatrix),
}

impl QuantumState {
    pub fn ket(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > KET_NORM_TOL {
            return Err(Error::InvalidState(format!("ket norm {norm} differs from 1")));
        }
        Ok(QuantumState::Ket(v))
    }

    /// Normalizes `v` first.
    pub fn ket_normalized(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero ket".into()));
        }
        Ok(QuantumState::Ket(v / c(norm)))
    }

    pub fn density(m: CMatrix) -> Result<Self> {
        validate_density(&m)?;
        Ok(QuantumState::Density(m))
    }

    pub fn basis(space: &HilbertSpace, labels: &[Level]) -> Result<Self> {
        let idx = space.index_of(labels)?;
        let mut v = CVector::zeros(space.dim());
        v[idx] = c(1.0);
        Ok(QuantumState::Ket(v))
    }

    pub fn basis_index(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0);
        QuantumState::Ket(v)
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Ket(v) => v.len(),
            QuantumState::Density(m) => m.nrows(),
        }
    }

    pub fn is_pure_ket(&self) -> bool {
        matches!(self, QuantumState::Ket(_))
    }

    pub fn to_density(&self) -> CMatrix {
        match self {
            QuantumState::Ket(v) => v * v.adjoint(),
            QuantumState::Density(m) => m.clone(),
        }
    }

    pub fn into_density(self) -> Self {
        match self {
            QuantumState::Ket(v) => QuantumState::Density(&v * v.adjoint()),
            d => d,
        }
    }

    /// Rescales to unit norm or unit trace.
    pub fn renormalized(self) -> Self {
        match self {
            QuantumState::Ket(v) => {
                let n = v.norm();
                QuantumState::Ket(v / c(n))
            }
            QuantumState::Density(m) => {
                let h = (&m + m.adjoint()) * c(0.5);
                let tr = h.trace().re;
                QuantumState::Density(h / c(tr))
            }
        }
    }

    /// Norm of a ket or trace of a density matrix.
    pub fn norm_or_trace(&self) -> f64 {
        match self {
            QuantumState::Ket(v) => v.norm(),
            QuantumState::Density(m) => m.trace().re,
        }
    }

    pub fn population_at(&self, index: usize) -> f64 {
        match self {
            QuantumState::Ket(v) => v[index].norm_sqr(),
            QuantumState::Density(m) => m[(index, index)].re,
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.population_at(i)).collect()
    }

    /// `⟨φ|state|φ⟩` for a normalized ket `φ`.
    pub fn expectation_projector(&self, phi: &CVector) -> f64 {
        match self {
            QuantumState::Ket(v) => phi.dotc(v).norm_sqr(),
            QuantumState::Density(m) => phi.dotc(&(m * phi)).re,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QuantumState::Ket(v) => {
                let norm = v.norm();
                if (norm - 1.0).abs() > KET_NORM_TOL {
                    return Err(Error::InvalidState(format!("ket norm {norm} differs from 1")));
                }
                Ok(())
            }
            QuantumState::Density(m) => validate_density(m),
        }
    }
}

fn validate_density(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidState("density matrix is not square".into()));
    }
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_STATE_TOL {
        return Err(Error::InvalidState(format!("density matrix not Hermitian ({dev:e})")));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
    }
    let min = min_eigenvalue(m);
    if min < -POSITIVITY_TOL {
        return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
    }
    Ok(())
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Square root of a positive semidefinite Hermitian matrix. Eigenvalues in
/// `[-1e-8, 0)` are clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "matrix square root of a non-positive matrix (eigenvalue {lambda:e})"
            )));
        }
        roots.push(c(lambda.max(0.0).sqrt()));
    }
    let d = CMatrix::from_diagonal(&CVector::from_vec(roots));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// `F = (tr √(√ρ σ √ρ))²`. Kets are promoted to projectors; when either side
/// is pure the closed form `⟨ψ|σ|ψ⟩` is used.
pub fn uhlmann_fidelity(rho: &QuantumState, sigma: &QuantumState) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    rho.validate()?;
    sigma.validate()?;
    let f = match (rho, sigma) {
        (QuantumState::Ket(psi), other) | (other, QuantumState::Ket(psi)) => {
            other.expectation_projector(psi)
        }
        (QuantumState::Density(a), QuantumState::Density(b)) => {
            let sa = psd_sqrt(a)?;
            let inner = &sa * b * &sa;
            let eig = SymmetricEigen::new(hermitian_part(&inner));
            let tr: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
            tr * tr
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Population of the basis state named by `labels`.
pub fn population(state: &QuantumState, space: &HilbertSpace, labels: &[Level]) -> Result<f64> {
    if state.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: state.dim(),
        });
    }
    Ok(state.population_at(space.index_of(labels)?))
}
