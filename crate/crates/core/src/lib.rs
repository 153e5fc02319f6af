//! Spreading speeds of KPP-type fronts in shifting environments.
//!
//! Three independent routes compute the same speed: explicit formulas built
//! on the dispersion relation ([`speeds`]), a viscosity solver for the
//! reduced one-dimensional obstacle problem ([`hj`]), and direct simulation
//! of the delayed reaction-diffusion model ([`simulate`]).

pub mod dispersion;
pub mod environment;
pub mod error;
pub mod hj;
pub mod io;
pub mod kernels;
pub mod roots;
pub mod simulate;
pub mod speeds;

pub use dispersion::{DispersionRelation, LambdaTable, MuStar};
pub use environment::{Envelope, Profile, RayProfile, ShiftTerm, ShiftedEnvironment, StepFunction};
pub use error::{Error, Result};
pub use kernels::{Atom, DelayKernel, KernelSpec};
pub use speeds::{Decay, SpeedResult};
