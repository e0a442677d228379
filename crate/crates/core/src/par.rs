//! Data-parallel helpers. With the `parallel` feature (default) these fan out over rayon's
//! global pool; without it they run on the calling thread. Output order always matches
//! input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_seq(items, f)
}

/// Sequential map, always available (benchmarks compare it against [`map`]).
pub fn map_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Deterministic chunked reduction: each fixed-size chunk is folded sequentially (chunks in
/// parallel when enabled), then partials are merged left to right. Chunk boundaries do not
/// depend on the thread count, so float sums come out bit-identical either way.
pub fn fold_chunks<T, A, Id, F, M>(items: &[T], identity: Id, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    M: Fn(A, A) -> A,
{
    let partials = chunk_partials(items, &identity, &fold);
    partials.into_iter().fold(identity(), merge)
}

pub const CHUNK: usize = 1024;

#[cfg(feature = "parallel")]
fn chunk_partials<T, A, Id, F>(items: &[T], identity: &Id, fold: &F) -> Vec<A>
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
{
    items
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(identity(), fold))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn chunk_partials<T, A, Id, F>(items: &[T], identity: &Id, fold: &F) -> Vec<A>
where
    Id: Fn() -> A,
    F: Fn(A, &T) -> A,
{
    items
        .chunks(CHUNK)
        .map(|c| c.iter().fold(identity(), fold))
        .collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
