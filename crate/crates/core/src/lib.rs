//! Data-driven predictive control over a lossy cloud-edge link.
//!
//! The crate is split along the runtime boundary of the system it simulates:
//!
//! - [`predictor`]: Hankel-matrix subspace predictor and the unconstrained
//!   receding-horizon control law (the cloud-side numerics).
//! - [`plant`]: the ball-beam plant, its linearized model, and measurement.
//! - [`pid`]: the discrete PID controller used to bootstrap the data window.
//! - [`compensator`]: edge-side round-trip-delay compensation by index
//!   selection into the received control sequence.
//! - [`transport`]: wire codec, bind/keepalive session protocol, a seeded
//!   simulated channel, and a real UDP adapter behind the same interface.
//! - [`runtime`]: the cloud and edge sessions and the deterministic
//!   single-clock episode driver that ties everything together.

pub mod compensator;
pub mod pid;
pub mod plant;
pub mod predictor;
pub mod runtime;
pub mod transport;
