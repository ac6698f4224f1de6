//! Drilling OpenCellID-style cell databases down to each operator's
//! highest-traffic tracking area, its busiest cells, and a demarcated
//! deployment area.
//!
//! The pipeline runs [`ingest`] (parse, validate, pre-select), then [`ndd`]
//! (CBS filter, unique cells, TAC aggregation, HTTAC, top cells), with [`geo`]
//! supplying rectangle areas and [`report`] writing the results.

pub mod config;
pub mod geo;
pub mod ingest;
pub mod ndd;
pub mod pipeline;
pub mod report;

pub use config::Config;
pub use geo::{DemarcationRect, GeoRect, LatLon};
pub use ingest::{CellRecord, DatabaseMatrix, MnoConfig, Rat};
pub use ndd::{CbsBounds, CellKey, MnoRun, NddResult, UniqueCell};
