//! Standardization, multinomial logistic regression, and metrics.

mod logreg;
mod metrics;
mod pipeline;
mod scaler;

pub use logreg::{fit_logreg, objective, LogRegModel, LogRegParams, TrainReport};
pub use metrics::{score, Metrics};
pub use pipeline::{
    apply_amplitude_log, Classifier, AMPLITUDE_LOG_EPS, MODEL_FORMAT, MODEL_FORMAT_VERSION,
};
pub use scaler::{fit_scaler, ScalerParams, STD_FLOOR};
