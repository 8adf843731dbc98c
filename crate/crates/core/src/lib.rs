//! Optimal linear transceiver designs for a cognitive two-way relay
//! network, plus the Monte Carlo experiment engine that evaluates them.
//!
//! A multi-antenna secondary transmitter relays the bidirectional traffic
//! of two primary users and superimposes its own signal in return. For each
//! relay strategy (amplify-and-forward, decode-and-forward with XOR
//! combining, decode-and-forward with superposition) this crate computes
//! the precoders that maximize the secondary rate subject to the primary
//! users' rate constraints, via semidefinite and second-order cone
//! programming with closed-form fast paths, and simulates rate, outage and
//! power-share statistics over Rayleigh-faded channel draws.

pub mod channel;
pub mod conic;
pub mod fracrank;
pub mod selftest;
pub mod simkit;
pub mod strategies;
pub mod numkernel;

pub use channel::{
    db_to_linear, draw_realization, make_geometry, path_gain, trial_rng, Geometry,
    NetworkRealization, SystemParams,
};
pub use numkernel::{CMat, CVec, RMat, RVec, C64};
