//! Laboratory for linearly edge-reinforced random walk (ERRW) on multi-level
//! ladder graphs over a finite tree.
//!
//! The crate provides:
//! - [`ladder`]: the graph family, canonical ids, levels and parity classes;
//! - [`walk`]: the reinforced walk simulator plus exact rational path
//!   probabilities and partial-exchangeability checks;
//! - [`rwre`]: fixed random environments, quenched chains, parity equilibria
//!   and exact distribution evolution;
//! - [`env_estimate`]: extraction of empirical environments from long runs,
//!   spatial decay summaries and conditional reweighting;
//! - [`transfer`]: transfer operators for finite-state Gibbs chains, leading
//!   eigenpairs, finite/infinite volume expectations and DLR checks;
//! - [`harness`]: seeded Monte Carlo experiments with pass/fail verdicts;
//! - [`stats`]: the small statistics toolkit the experiments share;
//! - [`seed`]: deterministic replica seed derivation.
//!
//! All randomness flows through seeded ChaCha8 generators derived from a
//! single master seed, so every experiment is reproducible bit for bit,
//! independent of thread count.

pub mod env_estimate;
pub mod harness;
pub mod ladder;
pub mod ratio;
pub mod rwre;
pub mod seed;
pub mod stats;
pub mod transfer;
pub mod walk;
