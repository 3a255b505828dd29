//! Aggregation and combination dataflows.

mod colprod;
mod combine;
mod engine;
mod partition;
mod tiling;

pub use colprod::{run_column_product, ColProductConfig};
pub use combine::{run_combination, SystolicSpec};
pub use engine::{
    run_feature_sliced, run_multi_engine, run_row_product, run_tiled, AggregationSim, RoundResult,
    SimOptions, Traversal, WORD_BYTES,
};
pub use partition::partition_equal_edges;
pub use tiling::{strip_bounds, unit_of, unit_size, validate_widths, TileConfig};
