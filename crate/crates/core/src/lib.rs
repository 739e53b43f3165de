//! Approximate skyline queries over large, disk-resident relations.
//!
//! The crate pairs exact skyline engines ([`algorithms`]) with two sampling
//! algorithms ([`approx::baseline`] and [`approx::double`]) that read a
//! sample of pages instead of the whole relation. [`storage`] defines the
//! page-organized file format and counts logical page reads, [`datagen`]
//! writes synthetic benchmark relations, and [`dominance`] holds the
//! reference semantics everything is tested against.

pub mod algorithms;
pub mod approx;
pub mod datagen;
pub mod dominance;
pub mod error;
pub mod storage;

pub use algorithms::{Engine, SkylineResult};
pub use approx::{ApproxParams, DoubleTrace, ErrorPrediction};
pub use datagen::{Distribution, GenSpec};
pub use dominance::{ErrorReport, TupleRecord};
pub use error::{Error, Result};
pub use storage::{IoCounter, PageLayout, Relation, RelationHeader, Sample};
