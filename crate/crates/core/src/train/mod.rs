//! Losses, optimizer, learning-rate schedule and the training loop.

mod config;
mod loss;
mod optim;
mod schedule;
mod trainer;

pub use config::{Objective, Schedule, TrainConfig};
pub use loss::{answer_loss, reason_loss, total_loss, LossReport};
pub use optim::AdamW;
pub use schedule::LrSchedule;
pub use trainer::{
    check_answers_hidden, split_train_val, train_epochs, train_on, training_template, HistoryRow,
    TrainOutcome,
};
