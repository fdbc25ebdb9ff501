//! Dataset ingestion, sweep orchestration, model files and result tables.

pub mod data;
pub mod model_file;
pub mod plan;
pub mod results;

pub use data::{
    blob_split, generate_blobs, load_dataset, load_labeled, write_dataset_csv, BlobSpec, DatasetSpec,
    DatasetSplit,
};
pub use model_file::{load_model, save_model, ModelFile};
pub use plan::{run_plan, BundleChoice, DatasetSource, ExperimentPlan, PlanContext};
pub use results::{emit_results, parse_results, RowStatus, SweepResult, SweepRow};
