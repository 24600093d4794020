//! Reinforcement-learning sizing of analog circuits.
//!
//! The crate bundles an analytical small-signal simulator ([`mna`]), two
//! benchmark circuits ([`circuits`]), a ternary-action sizing environment
//! ([`env`]), a from-scratch PPO agent ([`neural`]), baseline optimizers
//! ([`baselines`]), deployment and reporting ([`eval`]), and the run
//! configuration plus command-line driver ([`config`], [`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod circuits;
pub mod cli;
pub mod config;
pub mod env;
pub mod eval;
pub mod mna;
pub mod neural;
pub mod selftest;
