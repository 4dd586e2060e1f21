//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied to its [`Var`]s. Nodes whose inputs
//! carry no gradient store no backward closure, so inference through a
//! graph built only from constants costs nothing beyond the forward values.

use std::rc::Rc;

use crate::kernels;
use crate::scalar::{lit, Scalar};
use crate::tensor::{spatial3, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

type GradFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    grad_fn: Option<GradFn<T>>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output w.r.t. every node that required them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }
}

fn pool_factors(shape: &[usize]) -> [usize; 3] {
    if shape.len() == 3 {
        [1, 2, 2]
    } else {
        [2, 2, 2]
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, parents: Vec<usize>, grad_fn: Option<GradFn<T>>) -> Var {
        let requires_grad = grad_fn.is_some();
        self.nodes.push(Node {
            value: Rc::new(value),
            parents,
            grad_fn,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn rc(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes[v.0].value)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, vec![], None)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Rc::new(value),
            parents: vec![],
            grad_fn: None,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Shares an existing tensor as a leaf without copying it.
    pub fn shared(&mut self, value: Rc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents: vec![],
            grad_fn: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.wants(v)
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "item() on a non-scalar node");
        t.data()[0]
    }

    fn unary(
        &mut self,
        a: Var,
        out: Tensor<T>,
        grad: impl Fn(&Tensor<T>) -> Tensor<T> + 'static,
    ) -> Var {
        if self.wants(a) {
            let f: GradFn<T> = Box::new(move |g| vec![Some(grad(g))]);
            self.push(out, vec![a.0], Some(f))
        } else {
            self.push(out, vec![a.0], None)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.binary_linear(a, b, out, T::one(), T::one())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.binary_linear(a, b, out, T::one(), -T::one())
    }

    fn binary_linear(&mut self, a: Var, b: Var, out: Tensor<T>, ca: T, cb: T) -> Var {
        if !self.any_grad(&[a, b]) {
            return self.push(out, vec![a.0, b.0], None);
        }
        let (wa, wb) = (self.wants(a), self.wants(b));
        let f: GradFn<T> = Box::new(move |g| {
            let scaled = |c: T| if c == T::one() { g.clone() } else { g.map(|x| x * c) };
            vec![wa.then(|| scaled(ca)), wb.then(|| scaled(cb))]
        });
        self.push(out, vec![a.0, b.0], Some(f))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        let out = ta.zip_map(&tb, |x, y| x * y);
        if !self.any_grad(&[a, b]) {
            return self.push(out, vec![a.0, b.0], None);
        }
        let (wa, wb) = (self.wants(a), self.wants(b));
        let f: GradFn<T> = Box::new(move |g| {
            vec![
                wa.then(|| g.zip_map(&tb, |x, y| x * y)),
                wb.then(|| g.zip_map(&ta, |x, y| x * y)),
            ]
        });
        self.push(out, vec![a.0, b.0], Some(f))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        let out = ta.zip_map(&tb, |x, y| x / y);
        if !self.any_grad(&[a, b]) {
            return self.push(out, vec![a.0, b.0], None);
        }
        let (wa, wb) = (self.wants(a), self.wants(b));
        let f: GradFn<T> = Box::new(move |g| {
            let ga = wa.then(|| g.zip_map(&tb, |x, y| x / y));
            let gb = wb.then(|| {
                let mut r = g.zip_map(&ta, |x, y| x * y);
                for (v, &d) in r.data_mut().iter_mut().zip(tb.data()) {
                    *v = -*v / (d * d);
                }
                r
            });
            vec![ga, gb]
        });
        self.push(out, vec![a.0, b.0], Some(f))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.unary(a, out, move |g| g.map(|x| x * s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.unary(a, out, |g| g.clone())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let ta = self.rc(a);
        let out = ta.map(|x| if x > T::zero() { x } else { x * slope });
        self.unary(a, out, move |g| {
            g.zip_map(&ta, |gv, x| if x > T::zero() { gv } else { gv * slope })
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        let s = Rc::new(out.clone());
        self.unary(a, out, move |g| g.zip_map(&s, |gv, y| gv * y * (T::one() - y)))
    }

    /// Clamps to `[lo, hi]`; gradient passes only where the input was inside.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let ta = self.rc(a);
        let out = ta.map(|x| x.max(lo).min(hi));
        self.unary(a, out, move |g| {
            g.zip_map(&ta, |gv, x| if x >= lo && x <= hi { gv } else { T::zero() })
        })
    }

    /// `out[c] = x[c] * scale[c] + shift[c]` per channel.
    pub fn channel_affine(&mut self, a: Var, scale: Vec<T>, shift: Vec<T>) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.channels(), scale.len());
        assert_eq!(ta.channels(), shift.len());
        let p = ta.plane_len();
        let mut out = ta.clone();
        for (c, chunk) in out.data_mut().chunks_mut(p).enumerate() {
            for v in chunk {
                *v = *v * scale[c] + shift[c];
            }
        }
        self.unary(a, out, move |g| {
            let mut r = g.clone();
            for (c, chunk) in r.data_mut().chunks_mut(p).enumerate() {
                for v in chunk {
                    *v *= scale[c];
                }
            }
            r
        })
    }

    /// Same-padded stride-1 convolution; `w: [cout, cin, (kd,) kh, kw]`, `b: [cout]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (self.rc(x), self.rc(w), self.rc(b));
        let sp = tx.spatial3();
        let cin = tx.channels();
        let ws = tw.shape();
        let cout = ws[0];
        assert_eq!(ws[1], cin, "conv input has {cin} channels, weight expects {}", ws[1]);
        let k = if ws.len() == 4 { [1, ws[2], ws[3]] } else { [ws[2], ws[3], ws[4]] };
        assert_eq!(ws.len(), tx.shape().len() + 1, "kernel rank does not match input rank");
        assert_eq!(tb.len(), cout);
        let (out, col) = kernels::conv_forward(tx.data(), tw.data(), tb.data(), cin, cout, sp, k);
        let mut shape = tx.shape().to_vec();
        shape[0] = cout;
        let out = Tensor::new(shape, out);
        if !self.any_grad(&[x, w, b]) {
            return self.push(out, vec![x.0, w.0, b.0], None);
        }
        let (wx, ww, wb) = (self.wants(x), self.wants(w), self.wants(b));
        let f: GradFn<T> = Box::new(move |g| {
            let (dx, dw, db) = kernels::conv_backward(
                g.data(),
                tx.data(),
                col.as_deref(),
                tw.data(),
                cin,
                cout,
                sp,
                k,
                wx,
            );
            vec![
                dx.map(|d| Tensor::new(tx.shape().to_vec(), d)),
                ww.then(|| Tensor::new(tw.shape().to_vec(), dw)),
                wb.then(|| Tensor::new(vec![cout], db)),
            ]
        });
        self.push(out, vec![x.0, w.0, b.0], Some(f))
    }

    /// 2× max pooling along every spatial axis.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        let sp = spatial3(&shape);
        let f = pool_factors(&shape);
        for a in 0..3 {
            assert!(sp[a].is_multiple_of(f[a]), "max_pool2 needs even extents, got {shape:?}");
        }
        let (out, arg) = kernels::max_pool(tx.data(), shape[0], sp, f);
        let mut oshape = shape.clone();
        for (i, s) in oshape.iter_mut().enumerate().skip(1) {
            *s /= f[3 - (shape.len() - i)];
        }
        let out = Tensor::new(oshape, out);
        let n = tx.len();
        self.unary(x, out, move |g| {
            let mut dx = vec![T::zero(); n];
            for (&i, &gv) in arg.iter().zip(g.data()) {
                dx[i] += gv;
            }
            Tensor::new(shape.clone(), dx)
        })
    }

    /// 2× nearest-neighbour up-sampling along every spatial axis.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        let sp = spatial3(&shape);
        let f = pool_factors(&shape);
        let out = kernels::upsample(tx.data(), shape[0], sp, f);
        let mut oshape = shape.clone();
        for (i, s) in oshape.iter_mut().enumerate().skip(1) {
            *s *= f[3 - (shape.len() - i)];
        }
        self.unary(x, Tensor::new(oshape, out), move |g| {
            Tensor::new(shape.clone(), kernels::upsample_backward(g.data(), shape[0], sp, f))
        })
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let first = self.value(parts[0]).shape().to_vec();
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        let mut channels = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(&t.shape()[1..], &first[1..], "concat spatial mismatch");
            data.extend_from_slice(t.data());
            sizes.push(t.shape().to_vec());
            channels += t.channels();
        }
        let mut shape = first;
        shape[0] = channels;
        let out = Tensor::new(shape, data);
        let parents: Vec<usize> = parts.iter().map(|v| v.0).collect();
        if !self.any_grad(parts) {
            return self.push(out, parents, None);
        }
        let wants: Vec<bool> = parts.iter().map(|&p| self.wants(p)).collect();
        let f: GradFn<T> = Box::new(move |g| {
            let mut off = 0;
            sizes
                .iter()
                .zip(&wants)
                .map(|(s, &w)| {
                    let n: usize = s.iter().product();
                    let r = w.then(|| Tensor::new(s.clone(), g.data()[off..off + n].to_vec()));
                    off += n;
                    r
                })
                .collect()
        });
        self.push(out, parents, Some(f))
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        let full = tx.shape().to_vec();
        let p = tx.plane_len();
        assert!(start + len <= full[0], "channel slice out of range");
        let mut shape = full.clone();
        shape[0] = len;
        let out = Tensor::new(shape, tx.data()[start * p..(start + len) * p].to_vec());
        self.unary(x, out, move |g| {
            let mut d = Tensor::zeros(&full);
            d.data_mut()[start * p..(start + len) * p].copy_from_slice(g.data());
            d
        })
    }

    /// Backward warp of every channel of `field` by `flow` (see [`kernels::warp`]).
    pub fn warp(&mut self, field: Var, flow: Var) -> Var {
        let (tf, tl) = (self.rc(field), self.rc(flow));
        assert_eq!(&tf.shape()[1..], &tl.shape()[1..], "warp spatial mismatch");
        let d = tl.channels();
        assert_eq!(d, tf.shape().len() - 1, "flow needs one channel per axis");
        let sp = tf.spatial3();
        let c = tf.channels();
        let out = Tensor::new(tf.shape().to_vec(), kernels::warp(tf.data(), c, tl.data(), d, sp));
        if !self.any_grad(&[field, flow]) {
            return self.push(out, vec![field.0, flow.0], None);
        }
        let (wf, wl) = (self.wants(field), self.wants(flow));
        let f: GradFn<T> = Box::new(move |g| {
            let (gf, gl) = kernels::warp_backward(g.data(), tf.data(), c, tl.data(), d, sp);
            vec![
                wf.then(|| Tensor::new(tf.shape().to_vec(), gf)),
                wl.then(|| Tensor::new(tl.shape().to_vec(), gl)),
            ]
        });
        self.push(out, vec![field.0, flow.0], Some(f))
    }

    /// Per-cell Jacobian of a vector field (`d` channels → `d·d` channels).
    pub fn jacobian(&mut self, v: Var) -> Var {
        let tv = self.value(v);
        let shape = tv.shape().to_vec();
        let d = shape[0];
        assert_eq!(d, shape.len() - 1, "jacobian needs one component per axis");
        let sp = spatial3(&shape);
        let out = kernels::jacobian(tv.data(), d, sp);
        let mut oshape = shape.clone();
        oshape[0] = d * d;
        self.unary(v, Tensor::new(oshape, out), move |g| {
            Tensor::new(shape.clone(), kernels::jacobian_backward(g.data(), d, sp))
        })
    }

    /// Mean along one spatial axis (0 = x, 1 = y, 2 = z) of a volumetric tensor.
    pub fn project_mean(&mut self, x: Var, axis: usize) -> Var {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        assert_eq!(shape.len(), 4, "project_mean needs a volumetric tensor");
        let sp = spatial3(&shape);
        let [r, s] = kernels::projected_dims(sp, axis);
        let out = kernels::project_mean(tx.data(), shape[0], sp, axis);
        let c = shape[0];
        self.unary(x, Tensor::new(vec![c, r, s], out), move |g| {
            Tensor::new(shape.clone(), kernels::project_mean_backward(g.data(), c, sp, axis))
        })
    }

    /// Mean of absolute values, as a one-element tensor.
    pub fn mean_abs(&mut self, x: Var) -> Var {
        let tx = self.rc(x);
        let n = lit::<T>(tx.len() as f64);
        let m = tx.data().iter().map(|v| v.abs()).sum::<T>() / n;
        self.unary(x, Tensor::scalar(m), move |g| {
            let gv = g.data()[0] / n;
            tx.map(|v| {
                if v > T::zero() {
                    gv
                } else if v < T::zero() {
                    -gv
                } else {
                    T::zero()
                }
            })
        })
    }

    /// Mean of squares, as a one-element tensor.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let tx = self.rc(x);
        let n = lit::<T>(tx.len() as f64);
        let m = tx.data().iter().map(|&v| v * v).sum::<T>() / n;
        self.unary(x, Tensor::scalar(m), move |g| {
            let gv = g.data()[0] * lit::<T>(2.0) / n;
            tx.map(|v| v * gv)
        })
    }

    /// `Σ wᵢ·xᵢ` over same-shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Var {
        assert!(!terms.is_empty());
        let mut out = self.value(terms[0].0).map(|v| v * terms[0].1);
        for &(v, w) in &terms[1..] {
            let t = self.value(v);
            out = out.zip_map(t, |a, b| a + b * w);
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let parents = vars.iter().map(|v| v.0).collect();
        if !self.any_grad(&vars) {
            return self.push(out, parents, None);
        }
        let spec: Vec<(bool, T)> = terms.iter().map(|&(v, w)| (self.wants(v), w)).collect();
        let f: GradFn<T> = Box::new(move |g| {
            spec.iter()
                .map(|&(want, w)| want.then(|| g.map(|x| x * w)))
                .collect()
        });
        self.push(out, parents, Some(f))
    }

    /// Reverse sweep from a one-element node.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            let Some(f) = &node.grad_fn else { continue };
            let Some(g) = grads[i].take() else { continue };
            for (p, pg) in node.parents.iter().zip(f(&g)) {
                let Some(pg) = pg else { continue };
                match &mut grads[*p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}
