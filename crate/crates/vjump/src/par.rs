//! Thin switch between rayon and sequential iteration.
//!
//! With the `parallel` feature (default) the hot loops fan out over a rayon
//! pool; without it the same code runs on plain iterators. Call sites only
//! use the iterator methods shared by both traits, so they compile either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn chunks_mut<T: Send>(v: &mut [T], size: usize) -> rayon::slice::ChunksMut<'_, T> {
    v.par_chunks_mut(size)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn chunks_mut<T>(v: &mut [T], size: usize) -> std::slice::ChunksMut<'_, T> {
    v.chunks_mut(size)
}

#[cfg(feature = "parallel")]
pub(crate) fn chunks<T: Sync>(v: &[T], size: usize) -> rayon::slice::Chunks<'_, T> {
    v.par_chunks(size)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn chunks<T>(v: &[T], size: usize) -> std::slice::Chunks<'_, T> {
    v.chunks(size)
}
