//! Discrete-time simulator and scheduling library for 5G-NR FRMCS / GSM-R
//! spectrum coexistence in the 900 MHz railway band.
//!
//! The library models a single gNB serving trains on a track. FRMCS
//! (5G-NR) resource blocks are deployed into the white spaces between
//! deployed GSM-R carriers; the two systems share the 876.0-879.4 MHz
//! uplink overlap. Per scheduling period (one 10 ms radio frame) the
//! simulator:
//!
//! 1. derives the potentially colliding PRB set from carrier geometry and
//!    tags PRBs occupied by live GSM-R traffic ([`band_plan`]),
//! 2. computes per-train link budgets, CQI and achievable rates
//!    ([`channel`]),
//! 3. generates Poisson traffic for the performance, critical and GSM-R
//!    classes ([`traffic`]),
//! 4. allocates the PRB x slot x mini-slot grid ([`grid`]) with either the
//!    ITSP preemption scheduler or the collision-free BCQI baseline
//!    ([`scheduler`]),
//! 5. checks every outcome against the executable allocation constraints
//!    ([`validate`]) and accumulates throughput / reuse metrics
//!    ([`engine`]).
//!
//! The exact optimization model behind the schedulers lives in [`ilp`]: it
//! can be exported as LP text for external solvers or solved exhaustively
//! at desk scale as a verification oracle.

pub mod band_plan;
pub mod channel;
pub mod engine;
pub mod error;
pub mod grid;
pub mod ilp;
pub mod scheduler;
pub mod traffic;
pub mod validate;

pub use error::SimError;

/// Identifier of a scheduled user (a train's UE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[derive(serde::Serialize, serde::Deserialize)]
pub struct UserId(pub u32);

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "u{}", self.0)
    }
}
