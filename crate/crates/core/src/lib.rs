//! Simulation engine for quantum automated learning: dense statevector and
//! density-matrix primitives, data encoders, the post-selected training
//! loop, evaluation, noise and dataset handling.

pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod gate;
pub mod linalg;
pub mod measure;
pub mod models;
pub mod noise;
pub mod op;
pub mod pauli;
pub mod random;
pub mod state;
pub mod trainer;
pub mod verify;

pub use error::{QalError, Result};
pub use gate::{Circuit, Gate, GateKind};
pub use linalg::{CMatrix, C64};
pub use op::HermitianOp;
pub use pauli::{Pauli, PauliSum, PauliTerm};
pub use state::{DensityState, PureState};
