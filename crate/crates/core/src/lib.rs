pub mod channel_sim;
pub mod foundation;
pub mod subject_id;
pub mod quality;
pub mod topology;
