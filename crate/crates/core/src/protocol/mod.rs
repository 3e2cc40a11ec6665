pub mod ordinary;
pub mod push_sum;
pub mod robust;

pub use push_sum::{build_pushsum_matrix, push_sum_step, PushSumState};
pub use robust::{
    build_m_matrix, build_p_matrix, p_entry_lower_bound, AgentState, Broadcast, BufferState,
    SystemState,
};
