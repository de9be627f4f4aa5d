//! Elementwise arithmetic, reductions, softmax and pooling.

use super::{element_count, par_chunk_apply, Tensor};
use crate::element::Element;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// Broadcast result dims under the stretch-1 rule, right-aligned.
pub fn broadcast_dims(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::shape(format!("cannot broadcast {a:?} with {b:?}")));
        };
    }
    Ok(out)
}

/// Row-major strides of `dims` as seen from the broadcast shape `out`:
/// stretched axes get stride 0.
fn broadcast_strides(dims: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; out.len()];
    let offset = out.len() - dims.len();
    let mut s = 1usize;
    for i in (0..dims.len()).rev() {
        strides[offset + i] = if dims[i] == 1 { 0 } else { s };
        s *= dims[i];
    }
    strides
}

fn apply<T: Element>(kind: OpKind, a: T, b: T) -> T {
    match kind {
        OpKind::Add => a + b,
        OpKind::Sub => a - b,
        OpKind::Mul => a * b,
        OpKind::Div => a / b,
    }
}

/// Elementwise combine with broadcasting. Division by an exact-zero
/// divisor element is rejected.
pub fn elementwise<T: Element>(kind: OpKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if kind == OpKind::Div && b.data().iter().any(|&v| v == T::ZERO) {
        return Err(Error::domain("division by exact zero"));
    }
    let out_dims = broadcast_dims(a.dims(), b.dims())?;
    let n = element_count(&out_dims)?;

    if a.dims() == out_dims.as_slice() && b.dims() == out_dims.as_slice() {
        let mut out = vec![T::ZERO; n];
        let (ad, bd) = (a.data(), b.data());
        par_chunk_apply(&mut out, 4096, |i, chunk| {
            let base = i * 4096;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = apply(kind, ad[base + j], bd[base + j]);
            }
        });
        return Ok(Tensor::new_unchecked(out_dims, out));
    }

    // Cyclic fast path: one operand covers the full shape, the other is a
    // trailing block repeated over the leading axes (e.g. a channel vector).
    let cyclic = |full: &Tensor<T>, small: &Tensor<T>, small_is_rhs: bool| -> Option<Tensor<T>> {
        if full.dims() != out_dims.as_slice() {
            return None;
        }
        let sd = small.dims();
        if sd.len() > out_dims.len() || sd != &out_dims[out_dims.len() - sd.len()..] {
            return None;
        }
        let period = small.len();
        let mut out = vec![T::ZERO; n];
        let (fd, smd) = (full.data(), small.data());
        par_chunk_apply(&mut out, 4096, |i, chunk| {
            let base = i * 4096;
            for (j, v) in chunk.iter_mut().enumerate() {
                let idx = base + j;
                *v = if small_is_rhs {
                    apply(kind, fd[idx], smd[idx % period])
                } else {
                    apply(kind, smd[idx % period], fd[idx])
                };
            }
        });
        Some(Tensor::new_unchecked(out_dims.clone(), out))
    };
    if b.len() < a.len() {
        if let Some(t) = cyclic(a, b, true) {
            return Ok(t);
        }
    } else if a.len() < b.len() {
        if let Some(t) = cyclic(b, a, false) {
            return Ok(t);
        }
    }

    // General strided walk.
    let sa = broadcast_strides(a.dims(), &out_dims);
    let sb = broadcast_strides(b.dims(), &out_dims);
    let rank = out_dims.len();
    let mut out = vec![T::ZERO; n];
    let mut idx = vec![0usize; rank];
    let (mut off_a, mut off_b) = (0usize, 0usize);
    let (ad, bd) = (a.data(), b.data());
    for v in out.iter_mut() {
        *v = apply(kind, ad[off_a], bd[off_b]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off_a += sa[ax];
            off_b += sb[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            idx[ax] = 0;
            off_a -= sa[ax] * out_dims[ax];
            off_b -= sb[ax] * out_dims[ax];
        }
    }
    Ok(Tensor::new_unchecked(out_dims, out))
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise(OpKind::Add, self, other)
    }
    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise(OpKind::Sub, self, other)
    }
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise(OpKind::Mul, self, other)
    }
    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        elementwise(OpKind::Div, self, other)
    }

    /// `self * a + b` with scalar coefficients.
    pub fn affine(&self, a: T, b: T) -> Tensor<T> {
        self.map(|v| v * a + b)
    }

    pub fn sum_all(&self) -> T {
        let mut acc = T::ZERO;
        for &v in self.data() {
            acc += v;
        }
        acc
    }
}

/// Sums `grad` down to `target` dims (adjoint of broadcasting).
pub fn reduce_to_shape<T: Element>(grad: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if grad.dims() == target {
        return grad.clone();
    }
    let gdims = grad.dims().to_vec();
    let rank = gdims.len();
    let strides = broadcast_strides(target, &gdims);
    let out_len = element_count(target).expect("valid dims");
    let mut out = vec![T::ZERO; out_len];
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &g in grad.data() {
        out[off] += g;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < gdims[ax] {
                break;
            }
            idx[ax] = 0;
            off -= strides[ax] * gdims[ax];
        }
    }
    Tensor::new_unchecked(target.to_vec(), out)
}

/// Reduction over the given axes; reduced extents removed unless
/// `keepdims`, in which case they stay as 1. The inner accumulation is
/// sequential in row-major order, so repeated calls are bit-identical.
pub fn reduce<T: Element>(
    x: &Tensor<T>,
    axes: &[usize],
    kind: ReduceKind,
    keepdims: bool,
) -> Result<Tensor<T>> {
    if axes.is_empty() {
        return Err(Error::domain("empty reduction span"));
    }
    let rank = x.rank();
    let mut seen = vec![false; rank];
    for &ax in axes {
        if ax >= rank {
            return Err(Error::shape(format!("axis {ax} out of range for rank {rank}")));
        }
        if seen[ax] {
            return Err(Error::domain(format!("duplicate reduction axis {ax}")));
        }
        seen[ax] = true;
    }

    let dims = x.dims();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * dims[i + 1];
    }

    let kept: Vec<usize> = (0..rank).filter(|i| !seen[*i]).collect();
    let red: Vec<usize> = (0..rank).filter(|i| seen[*i]).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
    let red_dims: Vec<usize> = red.iter().map(|&i| dims[i]).collect();
    let span: usize = red_dims.iter().product();

    let out_dims: Vec<usize> = if keepdims {
        (0..rank).map(|i| if seen[i] { 1 } else { dims[i] }).collect()
    } else if kept.is_empty() {
        vec![1]
    } else {
        kept_dims.clone()
    };

    let out_len: usize = kept_dims.iter().product::<usize>().max(1);
    let mut out = vec![T::ZERO; out_len];

    let mut kept_idx = vec![0usize; kept.len()];
    for slot in out.iter_mut() {
        let base: usize = kept_idx
            .iter()
            .zip(&kept)
            .map(|(&v, &ax)| v * in_strides[ax])
            .sum();
        let mut red_idx = vec![0usize; red.len()];
        let mut acc = match kind {
            ReduceKind::Sum | ReduceKind::Mean => T::ZERO,
            ReduceKind::Max => x.data()[base],
        };
        for step in 0..span {
            let off: usize = red_idx
                .iter()
                .zip(&red)
                .map(|(&v, &ax)| v * in_strides[ax])
                .sum();
            let v = x.data()[base + off];
            match kind {
                ReduceKind::Sum | ReduceKind::Mean => acc += v,
                ReduceKind::Max => {
                    if v > acc {
                        acc = v;
                    }
                }
            }
            if step + 1 < span {
                for ax in (0..red.len()).rev() {
                    red_idx[ax] += 1;
                    if red_idx[ax] < red_dims[ax] {
                        break;
                    }
                    red_idx[ax] = 0;
                }
            }
        }
        if kind == ReduceKind::Mean {
            acc = acc / T::from_f64(span as f64);
        }
        *slot = acc;
        for ax in (0..kept.len()).rev() {
            kept_idx[ax] += 1;
            if kept_idx[ax] < kept_dims[ax] {
                break;
            }
            kept_idx[ax] = 0;
        }
    }
    Ok(Tensor::new_unchecked(out_dims, out))
}

/// Softmax over the last axis with temperature `scale` and
/// max-subtraction for stability. Each trailing group sums to 1.
pub fn softmax_last_axis<T: Element>(x: &Tensor<T>, scale: T) -> Result<Tensor<T>> {
    if scale.to_f64() <= 0.0 {
        return Err(Error::domain("softmax scale must be positive"));
    }
    if !x.all_finite() {
        return Err(Error::domain("non-finite input to softmax"));
    }
    let n = *x.dims().last().expect("rank >= 1");
    let mut out = x.data().to_vec();
    par_chunk_apply(&mut out, n, |_, row| {
        let mut m = row[0] * scale;
        for v in row.iter_mut() {
            *v = *v * scale;
            if *v > m {
                m = *v;
            }
        }
        let mut sum = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    });
    Ok(Tensor::new_unchecked(x.dims().to_vec(), out))
}

/// Per-pixel softmax over the channel axis of an NHWC map.
pub fn softmax_channels<T: Element>(x: &Tensor<T>, scale: T) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::shape(format!(
            "softmax_channels expects NHWC, got {:?}",
            x.dims()
        )));
    }
    softmax_last_axis(x, scale)
}

/// 2x2/2 max pooling over NHWC. Odd extents replicate the last row/column.
pub fn max_pool_2x2<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(max_pool_2x2_argmax(x)?.0)
}

/// Max pooling that also reports the flat input index of each window
/// maximum; ties resolve to the first element in row-major window order.
pub fn max_pool_2x2_argmax<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    if x.rank() != 4 {
        return Err(Error::shape(format!(
            "max_pool_2x2 expects NHWC, got {:?}",
            x.dims()
        )));
    }
    let (n, h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![T::ZERO; n * ho * wo * c];
    let mut arg = vec![0usize; n * ho * wo * c];
    let xd = x.data();
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = T::from_f64(f64::NEG_INFINITY);
                    let mut best_idx = 0usize;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let iy = (2 * oy + ky).min(h - 1);
                            let ix = (2 * ox + kx).min(w - 1);
                            let idx = ((b * h + iy) * w + ix) * c + ch;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((b * ho + oy) * wo + ox) * c + ch;
                    out[o] = best;
                    arg[o] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new_unchecked(vec![n, ho, wo, c], out), arg))
}

/// Nearest-neighbour 2x upsampling of an NHWC map.
pub fn upsample_nearest_2x<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::shape(format!(
            "upsample_nearest_2x expects NHWC, got {:?}",
            x.dims()
        )));
    }
    let (n, h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let mut out = vec![T::ZERO; n * 4 * h * w * c];
    let xd = x.data();
    let row_out = 2 * w * c;
    par_chunk_apply(&mut out, row_out, |r, chunk| {
        let b = r / (2 * h);
        let oy = r % (2 * h);
        let iy = oy / 2;
        for ox in 0..2 * w {
            let ix = ox / 2;
            let src = ((b * h + iy) * w + ix) * c;
            let dst = ox * c;
            chunk[dst..dst + c].copy_from_slice(&xd[src..src + c]);
        }
    });
    Ok(Tensor::new_unchecked(vec![n, 2 * h, 2 * w, c], out))
}

/// Concatenates along the last axis; all leading dims must match.
pub fn concat_last<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != b.rank() || a.dims()[..a.rank() - 1] != b.dims()[..b.rank() - 1] {
        return Err(Error::shape(format!(
            "concat_last dims mismatch: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (la, lb) = (*a.dims().last().unwrap(), *b.dims().last().unwrap());
    let rows = a.len() / la;
    let mut out = Vec::with_capacity(rows * (la + lb));
    for r in 0..rows {
        out.extend_from_slice(&a.data()[r * la..(r + 1) * la]);
        out.extend_from_slice(&b.data()[r * lb..(r + 1) * lb]);
    }
    let mut dims = a.dims().to_vec();
    *dims.last_mut().unwrap() = la + lb;
    Ok(Tensor::new_unchecked(dims, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(dims.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_vectors() {
        let out = t(&[2], &[1.0, 2.0]).add(&t(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_identity_is_bitwise() {
        let x = t(&[2, 3], &[1.5, -2.25, 3.0, 0.125, -0.5, 7.0]);
        let out = x.mul(&Tensor::ones(vec![2, 3])).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn broadcast_row_over_matrix() {
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let row = t(&[2], &[10.0, 100.0]);
        let out = m.mul(&row).unwrap();
        assert_eq!(out.data(), &[10.0, 200.0, 30.0, 400.0]);
    }

    #[test]
    fn broadcast_shape_mismatch_rejected() {
        let m = t(&[2, 3], &[0.0; 6]);
        let v = t(&[2], &[0.0; 2]);
        assert!(matches!(m.add(&v), Err(Error::Shape(_))));
    }

    #[test]
    fn div_by_exact_zero_rejected() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[1.0, 0.0]);
        assert!(matches!(a.div(&b), Err(Error::Domain(_))));
    }

    #[test]
    fn broadcast_middle_axis() {
        // [2,1,2] * [1,3,1] -> [2,3,2] exercises the general strided walk.
        let a = t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[1, 3, 1], &[1.0, 10.0, 100.0]);
        let out = a.mul(&b).unwrap();
        assert_eq!(out.dims(), &[2, 3, 2]);
        assert_eq!(
            out.data(),
            &[1.0, 2.0, 10.0, 20.0, 100.0, 200.0, 3.0, 4.0, 30.0, 40.0, 300.0, 400.0]
        );
    }

    #[test]
    fn reduce_examples() {
        let v = t(&[4], &[1.0, 3.0, 5.0, 7.0]);
        let mean = reduce(&v, &[0], ReduceKind::Mean, false).unwrap();
        assert_eq!(mean.data(), &[4.0]);

        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let mx = reduce(&m, &[0, 1], ReduceKind::Max, false).unwrap();
        assert_eq!(mx.data(), &[4.0]);

        let s0 = reduce(&m, &[0], ReduceKind::Sum, false).unwrap();
        assert_eq!(s0.data(), &[4.0, 6.0]);
        assert_eq!(s0.dims(), &[2]);

        assert!(reduce(&m, &[], ReduceKind::Sum, false).is_err());
        assert!(reduce(&m, &[0, 0], ReduceKind::Sum, false).is_err());
        assert!(reduce(&m, &[5], ReduceKind::Sum, false).is_err());
    }

    #[test]
    fn reduce_keepdims() {
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let s = reduce(&m, &[1], ReduceKind::Sum, true).unwrap();
        assert_eq!(s.dims(), &[2, 1]);
        assert_eq!(s.data(), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_uniform_rows() {
        let x = t(&[1, 1, 1, 4], &[3.7, 3.7, 3.7, 3.7]);
        let s = softmax_channels(&x, 0.1).unwrap();
        for &v in s.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_logit_oracle() {
        // tau 0.1 on (10, 0) scales to (1, 0): e/(e+1) and 1/(e+1).
        let x = t(&[1, 1, 1, 2], &[10.0, 0.0]);
        let s = softmax_channels(&x, 0.1).unwrap();
        assert!((s.data()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((s.data()[1] - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn softmax_single_channel_degenerate() {
        let x = t(&[1, 2, 2, 1], &[5.0, -3.0, 0.0, 99.0]);
        let s = softmax_channels(&x, 0.1).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn softmax_rejects_bad_input() {
        let x = Tensor::new_unchecked(vec![1, 1, 1, 2], vec![f64::NAN, 0.0]);
        assert!(matches!(softmax_channels(&x, 0.1), Err(Error::Domain(_))));
        let y = t(&[1, 1, 1, 2], &[0.0, 1.0]);
        assert!(matches!(softmax_channels(&y, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn pool_examples() {
        let x = t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let p = max_pool_2x2(&x).unwrap();
        assert_eq!(p.dims(), &[1, 1, 1, 1]);
        assert_eq!(p.data(), &[4.0]);

        let c = Tensor::<f64>::full(vec![1, 3, 5, 2], 0.75);
        let pc = max_pool_2x2(&c).unwrap();
        assert_eq!(pc.dims(), &[1, 2, 3, 2]);
        assert!(pc.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn pool_odd_extent_replicates() {
        // 3x3 map 1..9 row-major with replicate padding -> [[5,6],[8,9]].
        let x = t(
            &[1, 3, 3, 1],
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        );
        let p = max_pool_2x2(&x).unwrap();
        assert_eq!(p.dims(), &[1, 2, 2, 1]);
        assert_eq!(p.data(), &[5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn pool_tie_breaks_to_first() {
        let x = t(&[1, 2, 2, 1], &[7.0, 7.0, 7.0, 7.0]);
        let (_, arg) = max_pool_2x2_argmax(&x).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn upsample_nearest() {
        let x = t(&[1, 1, 2, 1], &[1.0, 2.0]);
        let u = upsample_nearest_2x(&x).unwrap();
        assert_eq!(u.dims(), &[1, 2, 4, 1]);
        assert_eq!(u.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_and_reduce_to_shape() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[9.0, 8.0]);
        let cat = concat_last(&a, &b).unwrap();
        assert_eq!(cat.dims(), &[2, 3]);
        assert_eq!(cat.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);

        let g = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = reduce_to_shape(&g, &[3]);
        assert_eq!(r.data(), &[5.0, 7.0, 9.0]);
        let r1 = reduce_to_shape(&g, &[2, 1]);
        assert_eq!(r1.data(), &[6.0, 15.0]);
    }
}
