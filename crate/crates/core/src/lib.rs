//! Multirate variable-step heterogeneous multiscale integration.
//!
//! A system `dx/dt = f_0(x) + sum_k f_k(x) / eps_k` is split by scale and
//! each truncation is advanced with its own kernel-modulated step inside a
//! repeating cycle, so the slow dynamics are sampled accurately at the macro
//! interval while the stiff parts are stepped only as often as they must be.

pub mod averaging;
pub mod error;
pub mod io;
pub mod kernel;
pub mod numerics;
pub mod problems;
pub mod spectral;
pub mod steppers;
pub mod system;
pub mod vshmm;

pub use error::{Error, Result};
pub use kernel::{verify_kernel, KernelFamily, KernelReport, StepKernel};
pub use steppers::{dns_integrate, BaseStepper, StepBuffers, Trajectory};
pub use system::{Component, FnRhs, LevelRhs, MultiscaleSystem};
pub use vshmm::{build_schedule, macro_step, vshmm_integrate, ScheduleMode, VshmmConfig, VshmmSchedule};
