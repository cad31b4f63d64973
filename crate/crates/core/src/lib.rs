//! Engine for migrating recorded GUI tests between similar mobile apps: a
//! skeleton is distilled from the source test offline, then the target app is
//! explored under VLM guidance with per-action feedback until a closing
//! oracle can be emitted. All VLM and device dependencies are pluggable, so
//! the whole pipeline runs deterministically against scripted transcripts and
//! simulated apps.

pub mod analyzer;
pub mod device;
pub mod feedback;
pub mod gateway;
pub mod migrator;
pub mod model;
pub mod planner;
pub mod testkit;
