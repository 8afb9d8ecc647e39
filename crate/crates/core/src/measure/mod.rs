//! Observation data and the aggregate queries evaluated over it.

mod eval;
pub mod io;
mod sample;

pub use eval::{MeasureSet, MeasurementResult, SampleIndex};
pub use sample::{
    keep_rows, Column, ColumnKind, Dataset, Label, MaskedSample, Sample, Schema, Value,
    MAX_SEQ_LEN, POSITION_COLUMN,
};
