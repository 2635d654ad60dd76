//! Toolkit for building quantum simulators out of *logical qubits*: groups of
//! physical qubits on a ZZ-coupled lattice whose internal states are tuned so
//! that the groups interact with programmable pairwise strengths.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`] — physical geometry, the distance-dependent coupling law, and
//!   the interaction matrices `F_ij` between groups.
//! - [`pattern`] — solving the bilinear system `s_i^T F_ij s_j = λ_ij` for the
//!   group-internal vectors (the sequential solver and the coupling maximizer).
//! - [`schedule`] — timed X-flip schedules realizing fractional effective spins
//!   over an evolution window, with an exact phase-accounting verifier.
//! - [`compile`] — logical state preparation, gates, and measurements lowered
//!   to pulse programs (free ZZ evolution + single-qubit operations).
//! - [`dynamics`] — exact statevector/diagonal-phase simulation backends used
//!   as oracles, plus Trotter composition and interaction-type transforms.
//! - [`cost`] — closed-form and measured time costs of the approach compared
//!   with SWAP-based Hamiltonian simulation.
//!
//! Numerical work uses `f64` throughout. Multi-start optimization and batch
//! verification run on rayon when the `parallel` feature (default) is enabled;
//! a sequential fallback is always compiled and benchmarked alongside.

pub mod compile;
pub mod cost;
pub mod dynamics;
pub mod lattice;
pub mod par;
pub mod pattern;
pub mod schedule;

pub use compile::{
    CompileError, CxTree, Gate1, LogicalCircuit, LogicalOp, MeasurementProgram, PulseProgram,
    Step,
};
pub use cost::{CostError, CostReport, QuditEmbedding, ScalingConstruction};
pub use dynamics::{
    DynamicsError, LogicalHamiltonian, ManyBodyZ, PauliStringHamiltonian, ProgramRun,
    SplitStrategy, Statevector, TrotterTerm, ZzProjection,
};
pub use lattice::{Grouping, InteractionMatrix, PhysicalLayout};
pub use pattern::{LogicalSolution, TargetPattern};
pub use schedule::{Coloring, FlipSchedule, VerifyScope};
