//! Instance-by-instance multi-instance rigid registration.
//!
//! Given putative correspondences between a source model and a target scene
//! that contains several copies of the model, [`pipeline::run_ibi`] registers
//! one instance per pass: it mines a sparse, mutually consistent seed set with
//! replicator dynamics, grows it into a dense set by compatibility voting,
//! estimates a pose by guided three-point sample consensus, validates the pose
//! against the scene by overlap rate, and removes the correspondences the pose
//! explains before moving on to the next instance.
//!
//! The crate also ships a synthetic scene generator ([`synth`]), hit-based
//! detection metrics ([`eval`]) and the on-disk formats ([`io`]) used by the
//! `ibi` command-line tool.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspondence;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod neighbor;
pub mod pipeline;
pub mod pose;
pub mod seed;
pub mod synth;
pub mod validation;
pub mod voting;

pub use correspondence::{CorrId, Correspondence, CorrespondenceSet};
pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, RigidTransform};
pub use neighbor::NeighborIndex;
pub use pipeline::{run_ibi, PipelineConfig, RegistrationOutcome};
