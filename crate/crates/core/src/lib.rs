//! Time-bin quantum key distribution: qudit state algebra, one-decoy
//! finite-key analysis, link simulation and protocol sessions for the
//! two-dimensional three-state BB84 and the four-dimensional two-bin
//! protocol.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod finite_key;
pub mod qudit;
pub mod reference;
pub mod session;
