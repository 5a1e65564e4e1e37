//! Task generators: the sum-of-sines regression task with linear or
//! distance-based module readouts, CIFAR-10 binary loading with a synthetic
//! toy-image stand-in, and compositional multi-image classification.

mod compositional;
mod images;
mod sine;

pub use compositional::{
    combo_hash, gen_compositional, ChannelStats, CompositionalDataset, CompositionalOptions,
    CompositionalSplit,
};
pub use images::{
    load_cifar10, load_cifar10_files, toy_images, write_cifar10, ImageSet, ToyImageConfig,
    CIFAR_PIXELS, NUM_CLASSES,
};
pub use sine::{gen_sine_task, RegressionDataset, SineTask, SineVariant};
