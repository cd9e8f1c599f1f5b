//! Online mirror descent with the hyperbolic-entropy regularizer.
//!
//! * [`potentials`]: hypentropy and baseline potentials, mirror maps, Bregman divergences.
//! * [`projections`]: Bregman projections onto 1-balls, 2-balls and the simplex.
//! * [`spectral`]: singular-value lifting, the spectral update and trace-ball projection.
//! * [`omd`]: the online mirror descent loop, tuned step sizes and regret accounting.
//! * [`baselines`]: GD, EG, EG±, the adaptive-β update, p-norm and Schatten p-norm.
//! * [`synth`]: synthetic logistic and multiclass problems.
//! * [`experiment`]: experiment configs, runners and CSV traces.
//! * [`verify`]: numerical property suites.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod omd;
pub mod potentials;
pub mod projections;
pub mod spectral;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use potentials::{HypentropyParams, PNormParams, Potential};
pub use projections::{ConstraintSet, RootFindConfig};

pub use spectral::{SpectralPotential, WeightMatrix};
