//! Følner averaging and almost-additive set maps on `ℤ^d`.
//!
//! The crate is organised bottom-up: [`lattice`] (window geometry),
//! [`folner`] (sequences, invariance levels, tilings), [`values`] (value
//! spaces), [`setmaps`] (set maps and group actions), [`additivity`]
//! (certifiers and error maps), [`realization`] (additive realizations),
//! [`sequences`] (the one-dimensional sequential case) and [`ergodic`]
//! (averaging experiments). [`gallery`] assembles the named example maps.

pub mod additivity;
pub mod ergodic;
pub mod folner;
pub mod gallery;
pub mod lattice;
pub mod realization;
pub mod sequences;
pub mod setmaps;
pub mod values;
