//! Value-function forecasting of GDP from panels of economic indicators.
//!
//! Approximate cost-to-go functions are learned by TD(0) over adjacent-quarter
//! transitions of many countries, where the cost of a transition is the
//! squared change of regularized GDP. Two architectures are available: a
//! linear form over basis functions and a single-hidden-layer network. Both
//! are compared out of sample against an OLS nowcasting benchmark.
//!
//! - [`panel_data`]: CSV ingestion, min-max regularization, transitions
//! - [`features`]: raw, bias-augmented and degree-2 tensor encodings
//! - [`value_approx`]: linear and network scoring functions, model files
//! - [`td_learning`]: step sizes, TD(0) updates, training, exact MRP solver
//! - [`ols_baseline`]: QR least squares benchmark
//! - [`forecast_eval`]: level forecasts, MAE/RMSE reports
//! - [`experiment`]: synthetic panels and the leave-one-country-out harness

pub mod error;
pub mod experiment;
pub mod features;
pub mod forecast_eval;
pub mod kv;
pub mod ols_baseline;
pub mod panel_data;
pub mod plot;
pub mod td_learning;
pub mod value_approx;

pub use error::{Error, Result};
pub use experiment::{
    generate_synthetic_panel, run_experiment, ExperimentOutcome, Manifest, ModelSpec, Structure,
    SyntheticSpec,
};
pub use features::{encode, FeatureKind, FeatureSpec};
pub use forecast_eval::{
    evaluate, forecast, EvalReport, ForecastContext, ForecastRule, Predictor, SignHeuristic,
};
pub use ols_baseline::{fit_ols, predict_ols, OlsModel};
pub use panel_data::{
    build_transitions, inverse_regularize, parse_panel_csv, regularize, CountryFilter, PanelDataset, Quarter,
    RegularizationParams, Transition,
};
pub use td_learning::{
    solve_finite_mrp, step_size, td_step_linear, td_step_network, train, TrainConfig, TrainLog,
};
pub use value_approx::{
    activation_eval, init_network, linear_eval, network_eval, network_gradients, Activation, Architecture,
    LinearModel, ModelFile, NetworkModel, ValueModel,
};
