//! Per-thread reuse of large scratch buffers, so full-frame passes do not
//! fault in fresh pages on every frame.

use std::cell::RefCell;

/// Buffers shorter than this go straight back to the allocator.
const MIN_POOLED: usize = 1 << 14;
const MAX_POOLED: usize = 48;

thread_local! {
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// A zero-filled buffer of `len` values.
pub(super) fn zeroed(len: usize) -> Vec<f64> {
    if len < MIN_POOLED {
        return vec![0.0; len];
    }
    let reused = POOL.with(|p| {
        let mut p = p.borrow_mut();
        let best = p
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len)
            .min_by_key(|(_, v)| v.capacity())
            .map(|(i, _)| i);
        best.map(|i| p.swap_remove(i))
    });
    match reused {
        Some(mut v) => {
            v.clear();
            v.resize(len, 0.0);
            v
        }
        None => vec![0.0; len],
    }
}

pub(super) fn recycle(v: Vec<f64>) {
    if v.capacity() < MIN_POOLED {
        return;
    }
    POOL.with(|p| {
        let mut p = p.borrow_mut();
        p.push(v);
        if p.len() > MAX_POOLED {
            let smallest = (0..p.len()).min_by_key(|&i| p[i].capacity()).unwrap_or(0);
            p.swap_remove(smallest);
        }
    });
}
