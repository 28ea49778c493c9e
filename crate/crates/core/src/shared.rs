//! Unsynchronised shared slice for level-parallel kernels.

use std::marker::PhantomData;

/// A mutable slice handed to several workers at once.
///
/// Soundness rests on the traversal invariants: a plan's order is a
/// permutation, so no two workers write the same index, and every index a
/// worker reads belongs to a segment that was finished before the current
/// one started.
pub(crate) struct SharedSlice<'a, T> {
    ptr: *mut T,
    len: usize,
    _marker: PhantomData<&'a mut [T]>,
}

unsafe impl<T: Send> Send for SharedSlice<'_, T> {}
unsafe impl<T: Send + Sync> Sync for SharedSlice<'_, T> {}

impl<'a, T: Copy> SharedSlice<'a, T> {
    pub(crate) fn new(slice: &'a mut [T]) -> Self {
        Self {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
            _marker: PhantomData,
        }
    }

    /// # Safety
    /// No other worker may write index `i` concurrently.
    #[inline]
    pub(crate) unsafe fn read(&self, i: usize) -> T {
        assert!(i < self.len);
        *self.ptr.add(i)
    }

    /// # Safety
    /// No other worker may read or write index `i` concurrently.
    #[inline]
    pub(crate) unsafe fn write(&self, i: usize, value: T) {
        assert!(i < self.len);
        *self.ptr.add(i) = value;
    }
}
