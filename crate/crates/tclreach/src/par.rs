//! Order-preserving parallel helpers that fall back to serial loops without the
//! `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_zip<A, B, F>(a: &mut [A], b: &[B], f: F)
where
    A: Send,
    B: Sync,
    F: Fn(&mut A, &B) + Sync + Send,
{
    a.par_iter_mut().zip(b.par_iter()).with_min_len(64).for_each(|(x, y)| f(x, y));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_zip<A, B, F>(a: &mut [A], b: &[B], f: F)
where
    F: Fn(&mut A, &B),
{
    a.iter_mut().zip(b.iter()).for_each(|(x, y)| f(x, y));
}
