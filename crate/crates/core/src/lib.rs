//! Signal shaping for non-uniform beamspace-modulated mmWave hybrid MIMO links.
//!
//! The crate is organised as a pipeline:
//!
//! * [`channel`] builds sparse narrowband and OFDM channels from a small set of
//!   propagation paths and injects CSI errors.
//! * [`precoding`] enumerates beamspace subspaces from the channel SVD and
//!   factorizes them into hybrid analog/digital precoders.
//! * [`qcqp`] turns a shaping layout into pairwise-distance quadratic forms and
//!   solves the min-power / max-min, MSER and MMI programs.
//! * [`shaping`] produces transmit codebooks (JOSS, FPSS, DPSS, FDSS and the
//!   BBSS/UBMSS/AMSS baselines).
//! * [`eval`] measures codebooks by ML detection, Monte-Carlo SER and analytic
//!   bounds.
//! * [`experiment`] ties everything together behind a JSON configuration and
//!   writes reproducible CSV/JSON artifacts.

pub mod channel;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod precoding;
pub mod qcqp;
pub mod seed;
pub mod shaping;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
