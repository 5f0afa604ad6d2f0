//! Non-Hermitian PT-symmetric chains of coupled harmonic oscillators.
//!
//! `H = ½ Σ (p_j² + ω_j² x_j²) + iγ Σ x_j x_{j+1}`

pub mod chain;
pub mod classical;
pub mod cli;
pub mod error;
mod linalg;
pub mod modes;
pub mod oracle;
pub mod phase;
pub mod poincare;
pub mod spectrum;

pub use chain::{build_coupling_matrix, characteristic_polynomial, ChainSpec, CouplingMatrix, Polynomial};
pub use error::{Error, Result};
pub use modes::{decoupling_transform, mode_set, principal_sqrt, Decoupling, ModePair, ModeSet};
pub use spectrum::{
    enumerate_levels, eigenfunction_evaluate, ground_state_energy, ground_state_gaussian, level_energy,
    partial_pt_residual, EigenfunctionSample, EnergyLevel, GaussianGroundState, OccupationVector,
};
pub use phase::{classify_phase, scan_phase_diagram, Phase, PhaseClass, PhaseGrid};
pub use classical::{
    classify_trajectory, equations_of_motion, integrate, mode_decompose, ClassicalState, ModeAmplitudes,
    TrajectoryClass, TrajectoryRecord,
};
pub use poincare::{poincare_section, PoincareSection, SectionConfig};
pub use oracle::{build_fock_hamiltonian, fock_spectrum_check, FockBasisSpec, SpectralComparison};
