//! The simulated real-time domain: softcore executors, the shared-memory
//! network, the service bus and deadline reporting.

mod bus;
mod deadline;
mod executor;
mod shm;

pub use bus::{BusError, ServiceBus, Transfer};
pub use deadline::{deadline_report, DeadlineReport, TaskSummary};
pub use executor::{Dispatch, ExecEvent, JobId, SoftcoreExecutor, TaskStats};
pub use shm::{CycleApplied, Node, SharedMemoryNetwork, ShmError, SlotRead};
