// Row/edge loops that run on rayon when the `parallel` feature is on. Every
// closure computes its output from read-only inputs, so results are identical
// for any thread count.

use alloc::vec::Vec;

const MIN_CHUNK: usize = 512;

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len)
        .into_par_iter()
        .with_min_len(MIN_CHUNK)
        .map(f)
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    let _ = MIN_CHUNK;
    (0..len).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    use rayon::prelude::*;
    items
        .par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(i, t)| f(i, t));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    F: Fn(usize, &mut T),
{
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Coarse-grained map for independent jobs (trials, rotations); order of the
/// output always matches the input.
#[cfg(feature = "parallel")]
pub(crate) fn map_jobs<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_jobs<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}
