//! Gate dynamics of a single ¹⁵NV⁻ centre: a spin-1 electron hyperfine-coupled
//! to a spin-½ nitrogen nucleus.
//!
//! The composite basis is electron `{+1, 0, -1}` (major) ⊗ nucleus `{↑, ↓}`
//! (minor), composite index `2·e + n`. All Hamiltonians are in units of ħ, i.e.
//! angular frequency in rad/s; times are in seconds and fields in tesla.

pub mod algebra;
pub mod circuits;
pub mod dynamics;
pub mod error;
pub mod gates;
pub mod hamiltonian;
pub mod ode;
pub mod scalar;

pub use algebra::{
    hermitian_eigen, kron, matrix_exponential, partial_trace_electron, partial_trace_nucleus, spin1_operators,
    spin_half_operators, HermitianEigen, Ket, Matrix,
};
pub use error::{Error, Result};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type CMatrix = Matrix<f64>;
pub type StateVector = Ket<f64>;

/// Numerical tolerances shared by the library and its tests.
pub mod tol {
    /// Hermiticity of density matrices.
    pub const HERMITIAN: f64 = 1e-10;
    /// Hermiticity of constructed Hamiltonians, relative to their largest entry.
    pub const HAMILTONIAN_HERMITIAN: f64 = 1e-12;
    /// Norm drift of a pure state after unitary evolution.
    pub const NORM: f64 = 1e-9;
    /// Trace drift of density-matrix snapshots.
    pub const TRACE: f64 = 1e-8;
    /// Hermiticity of density-matrix snapshots.
    pub const SNAPSHOT_HERMITIAN: f64 = 1e-9;
    /// Most negative eigenvalue tolerated in a snapshot.
    pub const MIN_EIGENVALUE: f64 = -1e-8;
    /// Unitarity of exponentials of Hermitian generators.
    pub const UNITARY: f64 = 1e-12;
    /// Commutation relations of spin operators.
    pub const COMMUTATOR: f64 = 1e-14;
    /// Closed-form interaction-picture Hamiltonian vs explicit conjugation.
    pub const INTERACTION_PICTURE: f64 = 1e-10;
}
