//! Multilayer perceptron, optimizer, training loop and the data plumbing
//! around them.

pub mod adam;
pub mod mlp;
pub mod persist;
pub mod scaler;
pub mod train;
pub mod window;

pub use adam::{Adam, AdamConfig, AdamState};
pub use mlp::{Activation, Gradients, Hyperparameters, Layer, Mlp, HORIZON};
pub use persist::{load_model, save_model};
pub use scaler::Scaler;
pub use train::{train, train_observed, Control, EpochRecord, History, TrainConfig};
pub use window::{make_windows, windows_between, SampleSet, Stride, WindowSpec};
