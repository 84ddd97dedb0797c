//! Vowel feature extraction and classification toolkit.
//!
//! Pipeline: decode WAV → prepare a 40 ms Hamming-windowed frame → LPC
//! formants (F1, F2) and 13 MFCCs → per-phoneme outlier filter → stratified
//! split → CART decision tree → accuracy / confusion report, with PCA scatter
//! plots of the cepstral features. [`synth`] generates vowels with known
//! formants so every stage can be checked without a recorded corpus.

pub mod audio_io;
pub mod config;
pub mod dataset;
pub mod lpc;
pub mod mfcc;
pub mod pca;
pub mod plot;
pub mod preprocess;
pub mod report;
pub mod spectral;
pub mod synth;
pub mod tree;
