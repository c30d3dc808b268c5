//! Shared inputs for the benchmarks.

use lesion_core::train::separable_clusters;
use lesion_core::ImageTensor;

/// `n` separable 1000-d feature rows with alternating labels.
pub fn feature_rows(n: usize) -> (Vec<Vec<f32>>, Vec<usize>) {
    separable_clusters(n, lesion_core::FEATURE_DIM, 0xBE7C)
}

/// A smooth synthetic photograph of the given size.
pub fn photo(width: usize, height: usize) -> ImageTensor {
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f32 / width as f32, y as f32 / height as f32);
            px.extend_from_slice(&[fx, fy, 0.5 * (fx + fy)]);
        }
    }
    ImageTensor::from_pixels(width, height, px).expect("buffer matches dimensions")
}

/// Scores on a coarse grid (many ties) with alternating labels.
pub fn tied_scores(n: usize) -> (Vec<f64>, Vec<u8>) {
    let scores = (0..n).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
    let labels = (0..n).map(|i| (i % 2) as u8).collect();
    (scores, labels)
}
