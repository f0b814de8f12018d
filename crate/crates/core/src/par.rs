//! Thin layer over rayon so that every parallel site has a sequential twin.
//!
//! Outputs are always collected in index order, and reductions are done by
//! the caller on the collected vector, so both builds produce identical bits.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, in parallel when the feature is enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Ordered map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

/// Fill a 2-D array row by row; `f(i, row)` writes row `i`.
pub fn fill_rows<F>(a: &mut ndarray::Array2<f64>, f: F)
where
    F: Fn(usize, ndarray::ArrayViewMut1<f64>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        a.axis_iter_mut(ndarray::Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, row) in a.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            f(i, row);
        }
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
