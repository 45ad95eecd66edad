//! Feature-switched data-parallel mapping.
//!
//! With the `parallel` feature (default), [`try_map_ordered`] fans work out
//! over rayon; without it, it is the plain sequential loop. Output order
//! always follows input order, and when several items fail the reported
//! error is the first one in input order, so both builds are observationally
//! identical on results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn try_map_ordered<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
{
    let results: Vec<Result<U, E>> = items.par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(results.len());
    for result in results {
        out.push(result?);
    }
    Ok(out)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_ordered<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
{
    try_map_ordered_seq(items, f)
}

pub(crate) fn try_map_ordered_seq<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    F: Fn(&T) -> Result<U, E>,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let doubled = try_map_ordered(&items, |x| Ok::<u32, ()>(x * 2)).unwrap();
        assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert_eq!(
            doubled,
            try_map_ordered_seq(&items, |x| Ok::<u32, ()>(x * 2)).unwrap()
        );
    }

    #[test]
    fn reports_first_error_in_input_order() {
        let items: Vec<u32> = (0..100).collect();
        let err = try_map_ordered(&items, |x| if *x >= 7 { Err(*x) } else { Ok(()) });
        assert_eq!(err, Err(7));
    }
}
