//! Cosine similarity over embedding vectors.

/// Cosine of two vectors, accumulated in f64. Returns 0.0 when either
/// norm is below 1e-12 (mock embedders emit zero vectors on empty text)
/// or when lengths disagree.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let norm = na.sqrt() * nb.sqrt();
    if norm < 1e-12 {
        0.0
    } else {
        dot / norm
    }
}
