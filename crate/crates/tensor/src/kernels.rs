//! Plain-slice kernels behind the graph ops.
//!
//! Every spatial routine treats planar data as volumetric data of depth 1,
//! so dims are always `[depth, height, width]` and positions `(x, y, z)`.

use crate::scalar::{lit, Scalar};

#[inline]
fn idx(sp: [usize; 3], z: usize, y: usize, x: usize) -> usize {
    (z * sp[1] + y) * sp[2] + x
}

/// Unfolds `x: [cin, sp]` into `[cin·kd·kh·kw, |sp|]` for a stride-1,
/// zero-padded "same" convolution with odd kernel extents.
pub fn im2col<T: Scalar>(x: &[T], cin: usize, sp: [usize; 3], k: [usize; 3]) -> Vec<T> {
    let plane = sp[0] * sp[1] * sp[2];
    let taps = k[0] * k[1] * k[2];
    let mut col = vec![T::zero(); cin * taps * plane];
    let pad = [k[0] / 2, k[1] / 2, k[2] / 2];
    for c in 0..cin {
        let src = &x[c * plane..(c + 1) * plane];
        for dz in 0..k[0] {
            for dy in 0..k[1] {
                for dx in 0..k[2] {
                    let row = ((c * k[0] + dz) * k[1] + dy) * k[2] + dx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    fill_shifted(src, dst, sp, [dz, dy, dx], pad, false);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: folds `col` back and accumulates into `dx`.
pub fn col2im<T: Scalar>(col: &[T], dx: &mut [T], cin: usize, sp: [usize; 3], k: [usize; 3]) {
    let plane = sp[0] * sp[1] * sp[2];
    let pad = [k[0] / 2, k[1] / 2, k[2] / 2];
    for c in 0..cin {
        let dst = &mut dx[c * plane..(c + 1) * plane];
        for dz in 0..k[0] {
            for dy in 0..k[1] {
                for dx_ in 0..k[2] {
                    let row = ((c * k[0] + dz) * k[1] + dy) * k[2] + dx_;
                    let src = &col[row * plane..(row + 1) * plane];
                    fill_shifted(src, dst, sp, [dz, dy, dx_], pad, true);
                }
            }
        }
    }
}

/// Copies `plane` shifted by `offset - pad` (forward), or scatters the
/// reverse (adjoint), leaving out-of-range taps untouched.
fn fill_shifted<T: Scalar>(
    a: &[T],
    b: &mut [T],
    sp: [usize; 3],
    offset: [usize; 3],
    pad: [usize; 3],
    adjoint: bool,
) {
    let shift = |o: usize, p: usize| o as isize - p as isize;
    let (sz, sy, sx) = (
        shift(offset[0], pad[0]),
        shift(offset[1], pad[1]),
        shift(offset[2], pad[2]),
    );
    let range = |s: isize, n: usize| -> (usize, usize) {
        let lo = (-s).max(0) as usize;
        let hi = (n as isize - s).clamp(0, n as isize) as usize;
        (lo, hi.max(lo))
    };
    let (z0, z1) = range(sz, sp[0]);
    let (y0, y1) = range(sy, sp[1]);
    let (x0, x1) = range(sx, sp[2]);
    if x0 >= x1 {
        return;
    }
    for z in z0..z1 {
        let iz = (z as isize + sz) as usize;
        for y in y0..y1 {
            let iy = (y as isize + sy) as usize;
            let out_row = idx(sp, z, y, 0);
            let in_row = idx(sp, iz, iy, 0);
            let ix0 = (x0 as isize + sx) as usize;
            let n = x1 - x0;
            if adjoint {
                // a is the column row (output positions), b the input plane.
                let src = &a[out_row + x0..out_row + x0 + n];
                let dst = &mut b[in_row + ix0..in_row + ix0 + n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            } else {
                b[out_row + x0..out_row + x0 + n].copy_from_slice(&a[in_row + ix0..in_row + ix0 + n]);
            }
        }
    }
}

/// Same-padded stride-1 convolution. `w: [cout, cin·taps]`, returns `[cout, |sp|]`
/// together with the unfolded input (reused by the backward pass).
pub fn conv_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    cin: usize,
    cout: usize,
    sp: [usize; 3],
    k: [usize; 3],
) -> (Vec<T>, Option<Vec<T>>) {
    let plane = sp[0] * sp[1] * sp[2];
    let kk = cin * k[0] * k[1] * k[2];
    let mut out = vec![T::zero(); cout * plane];
    for (o, &bias) in b.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(bias);
    }
    if k == [1, 1, 1] {
        T::gemm(cout, kk, plane, w, false, x, false, T::one(), &mut out);
        (out, None)
    } else {
        let col = im2col(x, cin, sp, k);
        T::gemm(cout, kk, plane, w, false, &col, false, T::one(), &mut out);
        (out, Some(col))
    }
}

/// Gradients of [`conv_forward`] w.r.t. input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    gout: &[T],
    x: &[T],
    col: Option<&[T]>,
    w: &[T],
    cin: usize,
    cout: usize,
    sp: [usize; 3],
    k: [usize; 3],
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let plane = sp[0] * sp[1] * sp[2];
    let kk = cin * k[0] * k[1] * k[2];
    let unfolded = col.unwrap_or(x);
    let mut dw = vec![T::zero(); cout * kk];
    T::gemm(cout, plane, kk, gout, false, unfolded, true, T::zero(), &mut dw);
    let db = (0..cout)
        .map(|o| gout[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();
    let dx = want_dx.then(|| {
        if k == [1, 1, 1] {
            let mut dx = vec![T::zero(); cin * plane];
            T::gemm(kk, cout, plane, w, true, gout, false, T::zero(), &mut dx);
            dx
        } else {
            let mut dcol = vec![T::zero(); kk * plane];
            T::gemm(kk, cout, plane, w, true, gout, false, T::zero(), &mut dcol);
            let mut dx = vec![T::zero(); cin * plane];
            col2im(&dcol, &mut dx, cin, sp, k);
            dx
        }
    });
    (dx, dw, db)
}

/// Max pooling with window = stride = `f`. Returns values and argmax offsets.
pub fn max_pool<T: Scalar>(x: &[T], c: usize, sp: [usize; 3], f: [usize; 3]) -> (Vec<T>, Vec<usize>) {
    let osp = [sp[0] / f[0], sp[1] / f[1], sp[2] / f[2]];
    let plane = sp[0] * sp[1] * sp[2];
    let oplane = osp[0] * osp[1] * osp[2];
    let mut out = vec![T::zero(); c * oplane];
    let mut arg = vec![0usize; c * oplane];
    for ch in 0..c {
        let src = &x[ch * plane..(ch + 1) * plane];
        for z in 0..osp[0] {
            for y in 0..osp[1] {
                for xx in 0..osp[2] {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0;
                    for dz in 0..f[0] {
                        for dy in 0..f[1] {
                            for dx in 0..f[2] {
                                let i = idx(sp, z * f[0] + dz, y * f[1] + dy, xx * f[2] + dx);
                                if (dz == 0 && dy == 0 && dx == 0) || src[i] > best {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = ch * oplane + idx(osp, z, y, xx);
                    out[o] = best;
                    arg[o] = ch * plane + best_i;
                }
            }
        }
    }
    (out, arg)
}

/// Nearest-neighbour up-sampling by integer factors `f`.
pub fn upsample<T: Scalar>(x: &[T], c: usize, sp: [usize; 3], f: [usize; 3]) -> Vec<T> {
    let osp = [sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]];
    let plane = sp[0] * sp[1] * sp[2];
    let oplane = osp[0] * osp[1] * osp[2];
    let mut out = vec![T::zero(); c * oplane];
    for ch in 0..c {
        for z in 0..osp[0] {
            for y in 0..osp[1] {
                let orow = ch * oplane + idx(osp, z, y, 0);
                let irow = ch * plane + idx(sp, z / f[0], y / f[1], 0);
                for xx in 0..osp[2] {
                    out[orow + xx] = x[irow + xx / f[2]];
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample`].
pub fn upsample_backward<T: Scalar>(g: &[T], c: usize, sp: [usize; 3], f: [usize; 3]) -> Vec<T> {
    let osp = [sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]];
    let plane = sp[0] * sp[1] * sp[2];
    let oplane = osp[0] * osp[1] * osp[2];
    let mut dx = vec![T::zero(); c * plane];
    for ch in 0..c {
        for z in 0..osp[0] {
            for y in 0..osp[1] {
                let orow = ch * oplane + idx(osp, z, y, 0);
                let irow = ch * plane + idx(sp, z / f[0], y / f[1], 0);
                for xx in 0..osp[2] {
                    dx[irow + xx / f[2]] += g[orow + xx];
                }
            }
        }
    }
    dx
}

/// Linear interpolation stencil along one axis for a clamped coordinate.
#[derive(Clone, Copy, Debug)]
struct Axis<T> {
    i0: usize,
    i1: usize,
    w: T,
    /// Whether the coordinate lay strictly outside the valid range.
    clamped: bool,
}

#[inline]
fn axis_stencil<T: Scalar>(p: T, n: usize) -> Axis<T> {
    if n == 1 {
        return Axis { i0: 0, i1: 0, w: T::zero(), clamped: true };
    }
    let hi = T::from_usize(n - 1).unwrap();
    let (q, clamped) = if p < T::zero() {
        (T::zero(), true)
    } else if p > hi {
        (hi, true)
    } else if p.is_nan() {
        (T::zero(), true)
    } else {
        (p, false)
    };
    let i0 = q.floor().to_usize().unwrap().min(n - 2);
    let w = q - T::from_usize(i0).unwrap();
    Axis { i0, i1: i0 + 1, w, clamped }
}

/// Corner indices and weights of the multilinear stencil at `pos = (x, y, z)`
/// with clamp-to-edge. Zero-weight corners are included.
pub fn stencil<T: Scalar>(sp: [usize; 3], pos: [T; 3]) -> [(usize, T); 8] {
    let ax = axis_stencil(pos[0], sp[2]);
    let ay = axis_stencil(pos[1], sp[1]);
    let az = axis_stencil(pos[2], sp[0]);
    let one = T::one();
    let mut out = [(0usize, T::zero()); 8];
    let mut n = 0;
    for (zi, wz) in [(az.i0, one - az.w), (az.i1, az.w)] {
        for (yi, wy) in [(ay.i0, one - ay.w), (ay.i1, ay.w)] {
            for (xi, wx) in [(ax.i0, one - ax.w), (ax.i1, ax.w)] {
                out[n] = (idx(sp, zi, yi, xi), wz * wy * wx);
                n += 1;
            }
        }
    }
    out
}

/// Multilinear sample of a single plane at `pos = (x, y, z)` with clamp-to-edge.
pub fn sample<T: Scalar>(plane: &[T], sp: [usize; 3], pos: [T; 3]) -> T {
    let mut acc = T::zero();
    for (i, w) in stencil(sp, pos) {
        // Skipping zero weights keeps integer positions bit-exact.
        if w != T::zero() {
            acc += w * plane[i];
        }
    }
    acc
}

/// Backward warp: `out[c](p) = sample(field[c], p - flow(p))`.
/// `flow` has one channel per spatial axis in x, y(, z) order.
pub fn warp<T: Scalar>(field: &[T], c: usize, flow: &[T], d: usize, sp: [usize; 3]) -> Vec<T> {
    let plane = sp[0] * sp[1] * sp[2];
    let mut out = vec![T::zero(); c * plane];
    for z in 0..sp[0] {
        for y in 0..sp[1] {
            for x in 0..sp[2] {
                let i = idx(sp, z, y, x);
                let pos = displaced(flow, d, plane, i, [x, y, z]);
                for ch in 0..c {
                    out[ch * plane + i] = sample(&field[ch * plane..(ch + 1) * plane], sp, pos);
                }
            }
        }
    }
    out
}

#[inline]
fn displaced<T: Scalar>(flow: &[T], d: usize, plane: usize, i: usize, cell: [usize; 3]) -> [T; 3] {
    let mut pos = [T::zero(); 3];
    for a in 0..3 {
        pos[a] = T::from_usize(cell[a]).unwrap();
        if a < d {
            pos[a] -= flow[a * plane + i];
        }
    }
    pos
}

/// Gradients of [`warp`] w.r.t. the field and the flow.
pub fn warp_backward<T: Scalar>(
    gout: &[T],
    field: &[T],
    c: usize,
    flow: &[T],
    d: usize,
    sp: [usize; 3],
) -> (Vec<T>, Vec<T>) {
    let plane = sp[0] * sp[1] * sp[2];
    let mut gfield = vec![T::zero(); c * plane];
    let mut gflow = vec![T::zero(); d * plane];
    let one = T::one();
    for z in 0..sp[0] {
        for y in 0..sp[1] {
            for x in 0..sp[2] {
                let i = idx(sp, z, y, x);
                let pos = displaced(flow, d, plane, i, [x, y, z]);
                let ax = axis_stencil(pos[0], sp[2]);
                let ay = axis_stencil(pos[1], sp[1]);
                let az = axis_stencil(pos[2], sp[0]);
                let wxs = [(ax.i0, one - ax.w, -one), (ax.i1, ax.w, one)];
                let wys = [(ay.i0, one - ay.w, -one), (ay.i1, ay.w, one)];
                let wzs = [(az.i0, one - az.w, -one), (az.i1, az.w, one)];
                let mut dpos = [T::zero(); 3];
                for ch in 0..c {
                    let g = gout[ch * plane + i];
                    if g == T::zero() {
                        continue;
                    }
                    let base = ch * plane;
                    for &(zi, wz, sz) in &wzs {
                        for &(yi, wy, sy) in &wys {
                            for &(xi, wx, sx) in &wxs {
                                let j = idx(sp, zi, yi, xi);
                                gfield[base + j] += g * wz * wy * wx;
                                let v = field[base + j] * g;
                                dpos[0] += sx * wy * wz * v;
                                dpos[1] += wx * sy * wz * v;
                                dpos[2] += wx * wy * sz * v;
                            }
                        }
                    }
                }
                for (a, st) in [ax, ay, az].iter().enumerate().take(d) {
                    if !st.clamped {
                        gflow[a * plane + i] -= dpos[a];
                    }
                }
            }
        }
    }
    (gfield, gflow)
}

/// Finite difference of one plane along `axis` (0 = x, 1 = y, 2 = z):
/// central in the interior, one-sided on the first/last cell, zero for
/// degenerate extents.
pub fn diff_axis<T: Scalar>(src: &[T], sp: [usize; 3], axis: usize, out: &mut [T]) {
    let (n, stride) = axis_geom(sp, axis);
    let half = lit::<T>(0.5);
    for (i, o) in out.iter_mut().enumerate() {
        let pos = (i / stride) % n;
        *o = if n == 1 {
            T::zero()
        } else if pos == 0 {
            src[i + stride] - src[i]
        } else if pos == n - 1 {
            src[i] - src[i - stride]
        } else {
            (src[i + stride] - src[i - stride]) * half
        };
    }
}

/// Adjoint of [`diff_axis`], accumulated into `dsrc`.
pub fn diff_axis_adjoint<T: Scalar>(g: &[T], sp: [usize; 3], axis: usize, dsrc: &mut [T]) {
    let (n, stride) = axis_geom(sp, axis);
    if n == 1 {
        return;
    }
    let half = lit::<T>(0.5);
    for (i, &gi) in g.iter().enumerate() {
        let pos = (i / stride) % n;
        if pos == 0 {
            dsrc[i + stride] += gi;
            dsrc[i] -= gi;
        } else if pos == n - 1 {
            dsrc[i] += gi;
            dsrc[i - stride] -= gi;
        } else {
            dsrc[i + stride] += gi * half;
            dsrc[i - stride] -= gi * half;
        }
    }
}

fn axis_geom(sp: [usize; 3], axis: usize) -> (usize, usize) {
    match axis {
        0 => (sp[2], 1),
        1 => (sp[1], sp[2]),
        2 => (sp[0], sp[1] * sp[2]),
        _ => panic!("axis {axis} out of range"),
    }
}

/// Per-cell Jacobian of a `d`-component field: channel `c·d + a` holds
/// `∂v_c/∂x_a`.
pub fn jacobian<T: Scalar>(v: &[T], d: usize, sp: [usize; 3]) -> Vec<T> {
    let plane = sp[0] * sp[1] * sp[2];
    let mut out = vec![T::zero(); d * d * plane];
    for c in 0..d {
        for a in 0..d {
            let o = (c * d + a) * plane;
            diff_axis(&v[c * plane..(c + 1) * plane], sp, a, &mut out[o..o + plane]);
        }
    }
    out
}

pub fn jacobian_backward<T: Scalar>(g: &[T], d: usize, sp: [usize; 3]) -> Vec<T> {
    let plane = sp[0] * sp[1] * sp[2];
    let mut dv = vec![T::zero(); d * plane];
    for c in 0..d {
        for a in 0..d {
            let o = (c * d + a) * plane;
            diff_axis_adjoint(&g[o..o + plane], sp, a, &mut dv[c * plane..(c + 1) * plane]);
        }
    }
    dv
}

/// Output extents of [`project_mean`] for axis 0 = x, 1 = y, 2 = z.
pub fn projected_dims(sp: [usize; 3], axis: usize) -> [usize; 2] {
    match axis {
        0 => [sp[0], sp[1]],
        1 => [sp[0], sp[2]],
        2 => [sp[1], sp[2]],
        _ => panic!("axis {axis} out of range"),
    }
}

/// Arithmetic mean along one axis of a volumetric `[c, sp]` array.
pub fn project_mean<T: Scalar>(x: &[T], c: usize, sp: [usize; 3], axis: usize) -> Vec<T> {
    let [r, s] = projected_dims(sp, axis);
    let plane = sp[0] * sp[1] * sp[2];
    let (n, _) = axis_geom(sp, axis);
    let inv = T::one() / T::from_usize(n).unwrap();
    let mut out = vec![T::zero(); c * r * s];
    for ch in 0..c {
        let src = &x[ch * plane..(ch + 1) * plane];
        let dst = &mut out[ch * r * s..(ch + 1) * r * s];
        for z in 0..sp[0] {
            for y in 0..sp[1] {
                for xx in 0..sp[2] {
                    let o = match axis {
                        0 => z * s + y,
                        1 => z * s + xx,
                        _ => y * s + xx,
                    };
                    dst[o] += src[idx(sp, z, y, xx)];
                }
            }
        }
        for v in dst.iter_mut() {
            *v *= inv;
        }
    }
    out
}

pub fn project_mean_backward<T: Scalar>(g: &[T], c: usize, sp: [usize; 3], axis: usize) -> Vec<T> {
    let [r, s] = projected_dims(sp, axis);
    let plane = sp[0] * sp[1] * sp[2];
    let (n, _) = axis_geom(sp, axis);
    let inv = T::one() / T::from_usize(n).unwrap();
    let mut dx = vec![T::zero(); c * plane];
    for ch in 0..c {
        let src = &g[ch * r * s..(ch + 1) * r * s];
        for z in 0..sp[0] {
            for y in 0..sp[1] {
                for xx in 0..sp[2] {
                    let o = match axis {
                        0 => z * s + y,
                        1 => z * s + xx,
                        _ => y * s + xx,
                    };
                    dx[ch * plane + idx(sp, z, y, xx)] = src[o] * inv;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], cin: usize, cout: usize, sp: [usize; 3], k: [usize; 3]) -> Vec<f64> {
        let plane = sp[0] * sp[1] * sp[2];
        let mut out = vec![0.0; cout * plane];
        let pad = [k[0] as isize / 2, k[1] as isize / 2, k[2] as isize / 2];
        for o in 0..cout {
            for z in 0..sp[0] {
                for y in 0..sp[1] {
                    for xx in 0..sp[2] {
                        let mut acc = 0.0;
                        for c in 0..cin {
                            for dz in 0..k[0] {
                                for dy in 0..k[1] {
                                    for dx in 0..k[2] {
                                        let iz = z as isize + dz as isize - pad[0];
                                        let iy = y as isize + dy as isize - pad[1];
                                        let ix = xx as isize + dx as isize - pad[2];
                                        if iz < 0 || iy < 0 || ix < 0 {
                                            continue;
                                        }
                                        let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                        if iz >= sp[0] || iy >= sp[1] || ix >= sp[2] {
                                            continue;
                                        }
                                        let wi = (((o * cin + c) * k[0] + dz) * k[1] + dy) * k[2] + dx;
                                        acc += w[wi] * x[c * plane + idx(sp, iz, iy, ix)];
                                    }
                                }
                            }
                        }
                        out[o * plane + idx(sp, z, y, xx)] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_summation() {
        for (sp, k) in [([1, 5, 6], [1, 3, 3]), ([1, 4, 4], [1, 7, 7]), ([3, 4, 5], [3, 3, 3]), ([1, 3, 3], [1, 1, 1])] {
            let (cin, cout) = (2, 3);
            let plane = sp[0] * sp[1] * sp[2];
            let taps = k[0] * k[1] * k[2];
            let x: Vec<f64> = (0..cin * plane).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
            let w: Vec<f64> = (0..cout * cin * taps).map(|i| ((i * 5 % 11) as f64 - 5.0) / 7.0).collect();
            let b = vec![0.0; cout];
            let (got, _) = conv_forward(&x, &w, &b, cin, cout, sp, k);
            let want = naive_conv(&x, &w, cin, cout, sp, k);
            for (g, e) in got.iter().zip(&want) {
                assert!((g - e).abs() < 1e-12, "{sp:?} {k:?}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let sp = [2, 4, 5];
        let k = [1, 3, 3];
        let cin = 2;
        let plane = 40;
        let x: Vec<f64> = (0..cin * plane).map(|i| (i as f64).sin()).collect();
        let col = im2col(&x, cin, sp, k);
        let y: Vec<f64> = (0..col.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; cin * plane];
        col2im(&y, &mut back, cin, sp, k);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn sample_reproduces_linear_functions() {
        let sp = [1, 6, 7];
        let plane: Vec<f64> = (0..42).map(|i| 0.3 * (i % 7) as f64 - 0.7 * (i / 7) as f64 + 1.0).collect();
        let v = sample(&plane, sp, [2.25, 3.5, 0.0]);
        assert!((v - (0.3 * 2.25 - 0.7 * 3.5 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn diff_adjoint_identity() {
        let sp = [3, 4, 5];
        let n = 60;
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
        let g: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        for axis in 0..3 {
            let mut da = vec![0.0; n];
            diff_axis(&a, sp, axis, &mut da);
            let mut ga = vec![0.0; n];
            diff_axis_adjoint(&g, sp, axis, &mut ga);
            let lhs: f64 = da.iter().zip(&g).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.iter().zip(&ga).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn pool_and_upsample_shapes() {
        let x: Vec<f32> = (0..16).map(|i| i as f32).collect();
        let (p, arg) = max_pool(&x, 1, [1, 4, 4], [1, 2, 2]);
        assert_eq!(p, vec![5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
        let u = upsample(&p, 1, [1, 2, 2], [1, 2, 2]);
        assert_eq!(u.len(), 16);
        assert_eq!(u[0], 5.0);
        assert_eq!(u[15], 15.0);
        let back = upsample_backward(&[1.0f32; 16], 1, [1, 2, 2], [1, 2, 2]);
        assert_eq!(back, vec![4.0; 4]);
    }
}
