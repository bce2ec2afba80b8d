//! Numerical core of a capability-level digital twin for an instrumented house.
//!
//! Every algorithm is generic over the floating point type through [`Scalar`];
//! the `*64` aliases below fix it to `f64`, which the ingestion and service
//! layers use.

pub mod diagnostics;
pub mod forecasting;
pub mod house;
pub mod recommender;
pub mod scalar;
pub mod series;
pub mod solar;
pub mod time;

pub use scalar::Scalar;
pub use time::Timestamp;

pub type TimeSeries64 = series::TimeSeries<f64>;
pub type RawSeries64 = series::RawSeries<f64>;
pub type HouseModel64 = house::HouseModel<f64>;
pub type SensorDescriptor64 = house::SensorDescriptor<f64>;
pub type SolarResult64 = solar::SolarResult<f64>;
pub type HorizonMask64 = solar::HorizonMask<f64>;
pub type FittedModel64 = forecasting::FittedModel<f64>;
pub type BaseModelSpec64 = forecasting::BaseModelSpec<f64>;
pub type WeightedEnsemble64 = forecasting::WeightedEnsemble<f64>;
pub type MultiOutputModel64 = forecasting::MultiOutputModel<f64>;
pub type HeatMapFrame64 = diagnostics::HeatMapFrame<f64>;
pub type BehaviorMatrix64 = recommender::BehaviorMatrix<f64>;
pub type RecommendationResult64 = recommender::RecommendationResult<f64>;
