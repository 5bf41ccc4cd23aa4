//! Dense kernels shared by the forward and backward passes.

use num_complex::Complex64 as C64;

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes, aligned on the trailing axis.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat index of `out`, the flat index of the broadcast input.
/// `None` when the input already has the output shape.
pub(crate) fn broadcast_offsets(out: &[usize], inp: &[usize]) -> Option<Vec<usize>> {
    if out == inp {
        return None;
    }
    let rank = out.len();
    let in_strides = strides(inp);
    let mut eff = vec![0usize; rank];
    for i in 0..inp.len() {
        let o = i + rank - inp.len();
        eff[o] = if inp[i] == 1 { 0 } else { in_strides[i] };
    }
    let total = numel(out);
    let mut offsets = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        offsets.push(cur);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            cur += eff[ax];
            if idx[ax] < out[ax] {
                break;
            }
            cur -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Some(offsets)
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// c[m×n] += a[m×k] · b[k×n]
pub(crate) fn gemm_nn(a: &[C64], b: &[C64], c: &mut [C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip.re == 0.0 && aip.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// c[m×k] += g[m×n] · b[k×n]^H
pub(crate) fn gemm_nh(g: &[C64], b: &[C64], c: &mut [C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv.conj();
            }
            c[i * k + p] += acc;
        }
    }
}

/// c[k×n] += a[m×k]^H · g[m×n]
pub(crate) fn gemm_hn(a: &[C64], g: &[C64], c: &mut [C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, av) in arow.iter().enumerate() {
            let ac = av.conj();
            if ac.re == 0.0 && ac.im == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, gv) in crow.iter_mut().zip(grow) {
                *cv += ac * gv;
            }
        }
    }
}

/// Gauss–Jordan inverse with partial pivoting of a row-major `n×n` matrix.
/// Returns `None` when a pivot vanishes.
pub(crate) fn invert(a: &[C64], n: usize) -> Option<Vec<C64>> {
    let mut m = a.to_vec();
    let mut inv = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        inv[i * n + i] = C64::new(1.0, 0.0);
    }
    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|r| (r, m[r * n + col].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(mag > 0.0) || !mag.is_finite() {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
        }
        let d = C64::new(1.0, 0.0) / m[col * n + col];
        for j in 0..n {
            m[col * n + j] *= d;
            inv[col * n + j] *= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for j in 0..n {
                let mv = m[col * n + j];
                let iv = inv[col * n + j];
                m[r * n + j] -= f * mv;
                inv[r * n + j] -= f * iv;
            }
        }
    }
    Some(inv)
}

pub(crate) fn transpose_last2(data: &[C64], shape: &[usize]) -> Vec<C64> {
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let batch = numel(&shape[..r - 2]);
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    for b in 0..batch {
        let base = b * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                out[base + j * rows + i] = data[base + i * cols + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 1, 3], &[4, 3]), Some(vec![2, 4, 3]));
        assert_eq!(broadcast_shape(&[2, 3], &[3, 2]), None);
        let off = broadcast_offsets(&[2, 3], &[3]).unwrap();
        assert_eq!(off, vec![0, 1, 2, 0, 1, 2]);
        let off = broadcast_offsets(&[2, 3], &[2, 1]).unwrap();
        assert_eq!(off, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn inverse_of_2x2() {
        let a = [c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0), c(1.0, -1.0)];
        let inv = invert(&a, 2).unwrap();
        let mut prod = vec![c(0.0, 0.0); 4];
        gemm_nn(&a, &inv, &mut prod, 2, 2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 2 + j] - c(want, 0.0)).norm() < 1e-14);
            }
        }
        assert!(invert(&[c(0.0, 0.0); 4], 2).is_none());
    }
}
