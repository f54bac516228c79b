pub mod certificate;
pub mod conic;
pub mod driver;
pub mod error;
pub mod hierarchy;
pub mod joint_marginal;
pub mod moments;
pub mod poly;
pub mod problem;
pub mod relaxation;

pub use error::{Error, Result};
