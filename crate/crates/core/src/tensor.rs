//! Row-major tensor helpers shared by the model, training, and oracle code.

use ndarray::{Array2, ArrayD, ArrayView2, Axis, IxDyn};

use crate::Scalar;

/// Product of dimensions, `None` on overflow.
pub(crate) fn checked_volume(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Row-major flat index of `idx` within `dims`. Caller guarantees bounds.
pub(crate) fn flat_index(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Inverse of [`flat_index`].
pub(crate) fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
}

/// `out[.., i, ..] = sum_k t[.., k, ..] * mat[i, k]` along `mode`.
pub(crate) fn mode_product<T: Scalar>(t: &ArrayD<T>, mat: ArrayView2<T>, mode: usize) -> ArrayD<T> {
    let ndim = t.ndim();
    assert_eq!(t.shape()[mode], mat.ncols(), "mode product shape mismatch");
    let mut perm: Vec<usize> = (0..ndim).filter(|&a| a != mode).collect();
    perm.push(mode);
    let moved = t.view().permuted_axes(IxDyn(&perm));
    let moved_shape: Vec<usize> = moved.shape().to_vec();
    let rest: usize = moved_shape[..ndim - 1].iter().product();
    let flat = moved
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rest, mat.ncols()))
        .expect("standard layout reshape");
    let prod: Array2<T> = flat.dot(&mat.t()).as_standard_layout().into_owned();
    let mut out_shape = moved_shape;
    out_shape[ndim - 1] = mat.nrows();
    let out = prod
        .into_shape_with_order(IxDyn(&out_shape))
        .expect("standard layout reshape");
    let mut inverse = vec![0; ndim];
    for (pos, &axis) in perm.iter().enumerate() {
        inverse[axis] = pos;
    }
    out.permuted_axes(IxDyn(&inverse)).as_standard_layout().into_owned()
}

/// Row-major outer product of the given vectors (`⊗_j rows[j]`).
pub(crate) fn outer<T: Scalar>(rows: &[&[T]], out: &mut Vec<T>) {
    out.clear();
    out.push(T::one());
    for row in rows {
        let prev = std::mem::take(out);
        out.reserve(prev.len() * row.len());
        for &p in &prev {
            out.extend(row.iter().map(|&r| p * r));
        }
    }
}

/// Contracts a row-major core of shape `dims` with one vector per mode.
///
/// Contracts the trailing mode first so every pass walks memory contiguously.
pub(crate) fn contract<T: Scalar>(core: &[T], dims: &[usize], rows: &[&[T]]) -> T {
    debug_assert_eq!(dims.len(), rows.len());
    if dims.is_empty() {
        return core[0];
    }
    let mut buf: Vec<T> = core.to_vec();
    let mut len = buf.len();
    for (d, row) in dims.iter().zip(rows).rev() {
        let outer_len = len / d;
        for p in 0..outer_len {
            let chunk = &buf[p * d..(p + 1) * d];
            let s = chunk.iter().zip(row.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            buf[p] = s;
        }
        len = outer_len;
    }
    buf[0]
}

/// Iterator over every multi-index of `dims` in row-major order.
pub(crate) struct MultiIndex {
    dims: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub(crate) fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            cur: vec![0; dims.len()],
            done: dims.contains(&0),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let item = self.cur.clone();
        let mut axis = self.dims.len();
        loop {
            if axis == 0 {
                self.done = true;
                break;
            }
            axis -= 1;
            self.cur[axis] += 1;
            if self.cur[axis] < self.dims[axis] {
                break;
            }
            self.cur[axis] = 0;
        }
        Some(item)
    }
}

/// Lanes of `t` along `axis`, each yielded as a mutable 1-D view.
pub(crate) fn for_each_lane_mut<T: Scalar>(t: &mut ArrayD<T>, axis: usize, mut f: impl FnMut(&mut [T])) {
    let mut scratch = Vec::new();
    for mut lane in t.lanes_mut(Axis(axis)) {
        scratch.clear();
        scratch.extend(lane.iter().copied());
        f(&mut scratch);
        for (dst, &src) in lane.iter_mut().zip(&scratch) {
            *dst = src;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    #[test]
    fn flat_index_round_trips() {
        let dims = [3, 4, 2];
        let mut idx = [0; 3];
        for flat in 0..24 {
            unravel(flat, &dims, &mut idx);
            assert_eq!(flat_index(&idx, &dims), flat);
        }
        assert_eq!(flat_index(&[1, 2, 1], &dims), 8 + 4 + 1);
    }

    #[test]
    fn multi_index_is_row_major() {
        let all: Vec<_> = MultiIndex::new(&[2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        assert_eq!(MultiIndex::new(&[]).count(), 1);
        assert_eq!(MultiIndex::new(&[3, 0]).count(), 0);
    }

    #[test]
    fn mode_product_matches_matrix_product() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]].into_dyn();
        let m = array![[1.0, 0.0, 1.0], [0.0, 2.0, 0.0]];
        let out = mode_product(&a, m.view(), 0);
        let expected = m.dot(&array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(out, expected.into_dyn());

        let n = array![[1.0, 1.0], [2.0, -1.0], [0.0, 3.0], [1.0, 0.0]];
        let out = mode_product(&a, n.view(), 1);
        let expected = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]].dot(&n.t());
        assert_eq!(out, expected.into_dyn());
    }

    #[test]
    fn contract_matches_outer_inner_product() {
        let dims = [2, 3, 2];
        let core: Vec<f64> = (0..12).map(|x| x as f64 * 0.5 - 1.0).collect();
        let r0 = [0.3, -0.7];
        let r1 = [1.0, 0.5, -2.0];
        let r2 = [0.25, 4.0];
        let mut u = Vec::new();
        outer(&[&r0[..], &r1[..], &r2[..]], &mut u);
        let direct: f64 = core.iter().zip(&u).map(|(a, b)| a * b).sum();
        let got = contract(&core, &dims, &[&r0[..], &r1[..], &r2[..]]);
        assert!((direct - got).abs() < 1e-12);
    }

    #[test]
    fn lanes_cover_axis() {
        let mut t = Array::from_shape_vec(IxDyn(&[2, 3]), (0..6).map(|x| x as f64).collect()).unwrap();
        for_each_lane_mut(&mut t, 1, |lane| lane.reverse());
        assert_eq!(t.as_slice().unwrap(), &[2.0, 1.0, 0.0, 5.0, 4.0, 3.0]);
    }
}
