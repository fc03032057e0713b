//! EEG emotion classification from 14-channel headset samples.
//!
//! The crate covers the batch pipeline (dataset I/O, IQR outlier cleaning,
//! random forest training, validation reports) and the real-time loop
//! (frame sources, windowed majority-vote prediction, session logs).

pub mod acquisition;
pub mod api;
pub mod dataset_io;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod iqr;
pub mod realtime;
pub mod rng;
pub mod signal;
pub mod split;

pub use error::{Error, Result};
pub use signal::{ChannelId, ChannelValues, Dataset, EmotionLabel, SampleRecord, SubjectInfo, CHANNEL_COUNT};
