//! Inheritance schedules, the distillation objective and teacher routing.

mod distribution;
mod loss;
mod registry;
mod schedule;

pub use distribution::{kl_divergence, kl_divergence_sparse, topk_truncate, SparseDistribution};
pub(crate) use loss::ki_loss_grad;
pub use loss::{check_temperature, combined_loss, ki_loss, ki_loss_checked, label_smooth};
pub use registry::{route_teacher, LiveTeacher, RouteObserver, TeacherHandle, TeacherRegistry, WILDCARD};
pub use schedule::{inheritance_rate, ScheduleSpec, Strategy};
