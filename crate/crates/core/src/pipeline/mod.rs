//! Data ingestion, fold construction, model selection, persistence, forecasting and scoring.

pub mod bundle;
pub mod config;
pub mod cv;
pub mod data;
pub mod evaluate;
pub mod folds;
pub mod forecast;
pub mod select;
pub mod synth;

pub use bundle::{fit_bundle, ModelBundle, SCHEMA_VERSION};
pub use config::PipelineConfig;
pub use cv::{cross_validate, CvOutcome};
pub use data::{load_faults, load_weather, training_data, ObservationRow, Source, TrainingData, WeatherRow};
pub use evaluate::{evaluate, ScoreReport};
pub use folds::{make_folds, FoldPlan};
pub use forecast::{forecast, forecast_all, ForecastRecord, Mode, EVAL_LEVELS};
pub use select::{select_model, SelectionLedger};
pub use synth::{synth_data, SynthConfig};
