//! Live side of the installation: the fixed-rate control loop, device
//! transports, the frame mailbox and the telemetry/control server.
//!
//! The loop owns all pipeline state on one thread. A camera (or any other
//! producer) drops frames into a [`FrameMailbox`]; control messages arrive on
//! a channel drained once per tick; every tick publishes an immutable
//! [`TelemetrySnapshot`].

pub mod calibrate;
pub mod clock;
pub mod control_loop;
pub mod error;
pub mod frames;
pub mod link;
pub mod mailbox;
pub mod replay;
pub mod server;
pub mod telemetry;
pub mod transport;

pub use clock::{Clock, RealClock, SimClock};
pub use control_loop::{ControlLoop, TickRecord};
pub use error::{Error, Result};
pub use mailbox::FrameMailbox;
pub use telemetry::{ClientMessage, Mode, ServerMessage, TelemetrySnapshot};
pub use transport::{FileTransport, LoopbackTransport, SerialTransport, Transport};
