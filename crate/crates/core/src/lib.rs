pub mod alm;
pub mod autodiff;
pub mod error;
pub mod eval;
pub mod nn;
pub mod problems;
pub mod scalar;
pub mod schemes;
pub mod seeding;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Mlp64 = nn::Mlp<f64>;
pub type ProblemFamily64 = problems::ProblemFamily<f64>;
pub type Dataset64 = problems::Dataset<f64>;
pub type TrainedModel64 = schemes::TrainedModel<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Mlp32 = nn::Mlp<f32>;
