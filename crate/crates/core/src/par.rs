//! Data-parallel helpers. With the `parallel` feature the `map_*` functions
//! fan out over rayon's pool; without it they fall back to the sequential
//! versions. Output order always follows input order, so results are identical
//! either way.

/// Applies `f` to `0..n` sequentially.
pub fn map_range_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Applies `f` to every element sequentially.
pub fn map_slice_seq<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    F: Fn(&A) -> T,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_range_seq(n, f)
}

#[cfg(feature = "parallel")]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    map_slice_seq(items, f)
}

/// Mutably visits every element, in parallel when enabled.
#[cfg(feature = "parallel")]
pub fn for_each_mut<A, F>(items: &mut [A], f: F)
where
    A: Send,
    F: Fn(usize, &mut A) + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter_mut().enumerate().for_each(|(i, a)| f(i, a));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<A, F>(items: &mut [A], f: F)
where
    A: Send,
    F: Fn(usize, &mut A) + Sync + Send,
{
    items.iter_mut().enumerate().for_each(|(i, a)| f(i, a));
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as u64).wrapping_mul(2654435761) % 97;
        assert_eq!(map_range(1000, f), map_range_seq(1000, f));
        let xs: Vec<u32> = (0..50).collect();
        assert_eq!(map_slice(&xs, |x| x * 3), map_slice_seq(&xs, |x| x * 3));
        let mut ys = vec![0usize; 10];
        for_each_mut(&mut ys, |i, y| *y = i * i);
        assert_eq!(ys[9], 81);
    }
}
