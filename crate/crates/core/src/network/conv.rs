//! Forward and reverse-mode passes.
//!
//! Each layer is evaluated only on the region its successor needs, clipped
//! to the retina. Activations outside the retina are the zero padding, so a
//! region-restricted pass reproduces the full-frame pass exactly on that
//! region.
//!
//! Layer inputs live in a padded buffer of `height + 2r` rows by
//! `width + 2r` columns. Outputs are computed on a "wide" grid of `height`
//! rows by the same padded width; the trailing `2r` columns of each row are
//! junk and are kept at zero in every gradient. With that layout the input
//! seen by kernel tap `(dy, dx)` is a plain offset view of the buffer, so a
//! layer is `k²` strided GEMMs with no im2col copies.

use crate::attention::Rect;
use crate::error::{Error, Result};
use crate::stream::Frame;

use super::kernels::{self, Correlation, WeightGrad, SLACK};
use super::pool;
use super::{Activation, Architecture, ParamVector};

#[derive(Debug, Clone)]
struct Geometry {
    kernel: usize,
    cin: usize,
    cout: usize,
    /// Output region, inside the retina.
    out: Rect,
    /// Input buffer region, `out` dilated by the kernel radius.
    buf: Rect,
    /// Row length of both the buffer and the wide output grid.
    wb: usize,
    /// Stride between input channel planes (`hb·wb` plus tail slack).
    plane: usize,
}

impl Geometry {
    fn new(kernel: usize, cin: usize, cout: usize, out: Rect) -> Self {
        let r = kernel / 2;
        let buf = out.dilate(r);
        let wb = buf.w;
        let plane = buf.h * wb + 2 * r;
        Self { kernel, cin, cout, out, buf, wb, plane }
    }

    fn wide_len(&self) -> usize {
        self.out.h * self.wb
    }

    fn buf_len(&self) -> usize {
        self.cin * self.plane + SLACK
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    geom: Geometry,
    input: Vec<f64>,
    /// tanh output on the wide grid (hidden layers only).
    act: Vec<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    arch: Architecture,
    n_params: usize,
    out: Rect,
    layers: Vec<LayerCache>,
    /// Pixel-major probabilities over `out`: `probs[i * m + j]`.
    probs: Vec<f64>,
}

impl Drop for ForwardCache {
    fn drop(&mut self) {
        for l in self.layers.drain(..) {
            pool::recycle(l.input);
            pool::recycle(l.act);
        }
        pool::recycle(std::mem::take(&mut self.probs));
    }
}

impl ForwardCache {
    /// Region the probabilities cover, in frame coordinates.
    pub fn region(&self) -> Rect {
        self.out
    }

    pub fn m(&self) -> usize {
        self.arch.m()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Output distribution at frame pixel `(x, y)`, which must lie in the region.
    pub fn probs_at(&self, x: usize, y: usize) -> &[f64] {
        let m = self.m();
        let i = self.pixel_index(x, y).expect("pixel outside forward region");
        &self.probs[i * m..(i + 1) * m]
    }

    pub fn outputs(&self) -> OutputView<'_> {
        OutputView { region: self.out, m: self.m(), probs: &self.probs }
    }

    pub fn pixel_index(&self, x: usize, y: usize) -> Option<usize> {
        let (x, y) = (x as isize, y as isize);
        self.out
            .contains(x, y)
            .then(|| (y - self.out.y0) as usize * self.out.w + (x - self.out.x0) as usize)
    }
}

/// Per-pixel output distributions over a region, pixel-major.
#[derive(Debug, Clone, Copy)]
pub struct OutputView<'a> {
    pub region: Rect,
    pub m: usize,
    pub probs: &'a [f64],
}

impl<'a> OutputView<'a> {
    pub fn new(region: Rect, m: usize, probs: &'a [f64]) -> Result<Self> {
        if probs.len() != region.area() * m {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} pixels of {m} symbols",
                probs.len(),
                region.area()
            )));
        }
        Ok(Self { region, m, probs })
    }

    pub fn index(&self, x: usize, y: usize) -> Option<usize> {
        let (x, y) = (x as isize, y as isize);
        self.region
            .contains(x, y)
            .then(|| (y - self.region.y0) as usize * self.region.w + (x - self.region.x0) as usize)
    }

    pub fn at(&self, x: usize, y: usize) -> Option<&'a [f64]> {
        self.index(x, y).map(|i| &self.probs[i * self.m..(i + 1) * self.m])
    }
}

/// `C[m×n] += A[m×k] · B[k×n]` over strided views.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (a_off, rsa, csa): (usize, usize, usize),
    b: &[f64],
    (b_off, rsb, csb): (usize, usize, usize),
    c: &mut [f64],
    (c_off, rsc, csc): (usize, usize, usize),
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a_off + (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(b_off + (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c_off + (m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every element the views touch, and
    // callers never pass views whose rows alias each other in `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(a_off),
            rsa as isize,
            csa as isize,
            b.as_ptr().add(b_off),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            csc as isize,
        );
    }
}

fn geometries(arch: &Architecture, width: usize, height: usize, out: Rect) -> Vec<Geometry> {
    let retina = Rect::full(width, height);
    let mut geoms = Vec::with_capacity(arch.layers.len());
    let mut region = out;
    for l in arch.layers.iter().rev() {
        let g = Geometry::new(l.kernel, l.in_channels, l.out_channels, region);
        region = g.buf.intersect(&retina).expect("buffer contains its output region");
        geoms.push(g);
    }
    geoms.reverse();
    geoms
}

/// Copy `src` (wide layout over `src_out`, row length `src_wb`) into a layer's input buffer.
fn scatter_into_buffer(dst: &mut [f64], g: &Geometry, src: &[f64], src_out: Rect, src_wb: usize, src_plane: usize) {
    let col = (src_out.x0 - g.buf.x0) as usize;
    for c in 0..g.cin {
        for y in 0..src_out.h {
            let row = (src_out.y0 - g.buf.y0) as usize + y;
            let d = c * g.plane + row * g.wb + col;
            let s = c * src_plane + y * src_wb;
            dst[d..d + src_out.w].copy_from_slice(&src[s..s + src_out.w]);
        }
    }
}

/// Evaluate the network on the output region `out` of `frame`.
pub fn forward(params: &ParamVector, frame: &Frame, out: Rect) -> Result<ForwardCache> {
    forward_impl(params, frame, out, kernels::available())
}

fn forward_impl(params: &ParamVector, frame: &Frame, out: Rect, vector: bool) -> Result<ForwardCache> {
    let arch = &params.arch;
    arch.validate()?;
    if params.values.len() != arch.n_params() {
        return Err(Error::Architecture(format!(
            "parameter vector has {} entries, architecture {} needs {}",
            params.values.len(),
            arch,
            arch.n_params()
        )));
    }
    let retina = Rect::full(frame.width(), frame.height());
    if out.intersect(&retina) != Some(out) {
        return Err(Error::Dimension(format!("output region {out:?} not inside the retina")));
    }
    let geoms = geometries(arch, frame.width(), frame.height(), out);
    let layout = arch.layout();
    let w = &params.values;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(geoms.len());
    let mut probs = Vec::new();

    for (li, g) in geoms.iter().enumerate() {
        let slot = layout.slots[li];
        let mut input = pool::zeroed(g.buf_len());
        if li == 0 {
            let src = g.buf.intersect(&retina).expect("input region inside retina");
            for y in 0..src.h {
                let fy = src.y0 as usize + y;
                let row = (src.y0 - g.buf.y0) as usize + y;
                let col = (src.x0 - g.buf.x0) as usize;
                let s = fy * frame.width() + src.x0 as usize;
                input[row * g.wb + col..row * g.wb + col + src.w]
                    .copy_from_slice(&frame.pixels()[s..s + src.w]);
            }
        } else {
            let prev = &layers[li - 1];
            let pg = &prev.geom;
            scatter_into_buffer(&mut input, g, &prev.act, pg.out, pg.wb, pg.wide_len());
        }

        let n = g.wide_len();
        let k = g.kernel;
        let mut z = pool::zeroed(g.cout * n);
        for co in 0..g.cout {
            z[co * n..(co + 1) * n].fill(w[slot.bias + co]);
        }
        if vector {
            let kk = k * k;
            let mut wt = vec![0.0; g.cin * kk * g.cout];
            for co in 0..g.cout {
                for ci in 0..g.cin {
                    for t in 0..kk {
                        wt[(ci * kk + t) * g.cout + co] = w[slot.weights + (co * g.cin + ci) * kk + t];
                    }
                }
            }
            Correlation { cin: g.cin, cout: g.cout, kernel: k, wb: g.wb, weights: &wt, x: &input, plane: g.plane, n }
                .run(&mut z);
        } else {
            for dy in 0..k {
                for dx in 0..k {
                    gemm_acc(
                        g.cout,
                        g.cin,
                        n,
                        w,
                        (slot.weights + dy * k + dx, g.cin * k * k, k * k),
                        &input,
                        (dy * g.wb + dx, g.plane, 1),
                        &mut z,
                        (0, n, 1),
                    );
                }
            }
        }

        match arch.layers[li].activation {
            Activation::Tanh => {
                for co in 0..g.cout {
                    let row = &mut z[co * n..(co + 1) * n];
                    for y in 0..g.out.h {
                        let seg = &mut row[y * g.wb..(y + 1) * g.wb];
                        if vector {
                            kernels::tanh_in_place(&mut seg[..g.out.w]);
                        } else {
                            for v in &mut seg[..g.out.w] {
                                *v = v.tanh();
                            }
                        }
                        seg[g.out.w..].fill(0.0);
                    }
                }
                layers.push(LayerCache { geom: g.clone(), input, act: z });
            }
            Activation::Softmax => {
                let m = g.cout;
                probs = pool::zeroed(g.out.area() * m);
                let mut logits = vec![0.0; m];
                for y in 0..g.out.h {
                    for x in 0..g.out.w {
                        let p = y * g.wb + x;
                        for (j, l) in logits.iter_mut().enumerate() {
                            *l = z[j * n + p];
                        }
                        let i = y * g.out.w + x;
                        softmax_into(&logits, &mut probs[i * m..(i + 1) * m]);
                    }
                }
                pool::recycle(z);
                layers.push(LayerCache { geom: g.clone(), input, act: Vec::new() });
            }
        }
    }

    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical { term: "network output" });
    }
    Ok(ForwardCache { arch: arch.clone(), n_params: params.values.len(), out, layers, probs })
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Gradient of a scalar loss with respect to the parameters, given the
/// loss gradient with respect to the output probabilities (`cache.probs()` layout).
pub fn backward(params: &ParamVector, cache: &ForwardCache, grad_probs: &[f64]) -> Result<Vec<f64>> {
    backward_impl(params, cache, grad_probs, kernels::available())
}

fn backward_impl(params: &ParamVector, cache: &ForwardCache, grad_probs: &[f64], vector: bool) -> Result<Vec<f64>> {
    if cache.arch != params.arch || cache.n_params != params.values.len() {
        return Err(Error::Architecture(format!(
            "cache from architecture {} does not match parameters of {}",
            cache.arch, params.arch
        )));
    }
    if grad_probs.len() != cache.probs.len() {
        return Err(Error::Dimension(format!(
            "{} output gradients for {} probabilities",
            grad_probs.len(),
            cache.probs.len()
        )));
    }
    let w = &params.values;
    let layout = params.arch.layout();
    let mut grad = vec![0.0; w.len()];
    let last = cache.layers.len() - 1;

    // Softmax Jacobian: dz_j = p_j (g_j − Σ_i p_i g_i).
    let g = &cache.layers[last].geom;
    let m = g.cout;
    let mut dz = pool::zeroed(m * g.wide_len());
    for y in 0..g.out.h {
        for x in 0..g.out.w {
            let i = y * g.out.w + x;
            let p = &cache.probs[i * m..(i + 1) * m];
            let gp = &grad_probs[i * m..(i + 1) * m];
            let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
            for j in 0..m {
                dz[j * g.wide_len() + y * g.wb + x] = p[j] * (gp[j] - dot);
            }
        }
    }

    for li in (0..=last).rev() {
        let lc = &cache.layers[li];
        let g = &lc.geom;
        let slot = layout.slots[li];
        let n = g.wide_len();
        let k = g.kernel;

        for co in 0..g.cout {
            grad[slot.bias + co] = dz[co * n..(co + 1) * n].iter().sum();
        }
        if vector {
            WeightGrad { cin: g.cin, cout: g.cout, kernel: k, wb: g.wb, dz: &dz, x: &lc.input, plane: g.plane, n }
                .run(&mut grad[slot.weights..slot.bias]);
        } else {
            for dy in 0..k {
                for dx in 0..k {
                    gemm_acc(
                        g.cout,
                        n,
                        g.cin,
                        &dz,
                        (0, n, 1),
                        &lc.input,
                        (dy * g.wb + dx, 1, g.plane),
                        &mut grad,
                        (slot.weights + dy * k + dx, g.cin * k * k, k * k),
                    );
                }
            }
        }
        if li == 0 {
            break;
        }

        let mut dinput = pool::zeroed(g.buf_len());
        if vector {
            // Gather form: dinput[ci][q] = Σ w[co][ci][t] · dz[co][q − off[t]],
            // read from a copy of dz shifted right by the largest offset, so
            // tap t is read at the offset of the mirrored tap k² − 1 − t.
            let kk = k * k;
            let max_off = (k - 1) * g.wb + (k - 1);
            let dplane = n + 2 * max_off;
            let mut dzp = pool::zeroed(g.cout * dplane + SLACK);
            for co in 0..g.cout {
                dzp[co * dplane + max_off..co * dplane + max_off + n].copy_from_slice(&dz[co * n..(co + 1) * n]);
            }
            let mut wt = vec![0.0; g.cout * kk * g.cin];
            for co in 0..g.cout {
                for ci in 0..g.cin {
                    for t in 0..kk {
                        wt[(co * kk + kk - 1 - t) * g.cin + ci] = w[slot.weights + (co * g.cin + ci) * kk + t];
                    }
                }
            }
            Correlation { cin: g.cout, cout: g.cin, kernel: k, wb: g.wb, weights: &wt, x: &dzp, plane: dplane, n: g.plane }
            .run(&mut dinput);
            pool::recycle(dzp);
        } else {
            for dy in 0..k {
                for dx in 0..k {
                    gemm_acc(
                        g.cin,
                        g.cout,
                        n,
                        w,
                        (slot.weights + dy * k + dx, k * k, g.cin * k * k),
                        &dz,
                        (0, n, 1),
                        &mut dinput,
                        (dy * g.wb + dx, g.plane, 1),
                    );
                }
            }
        }

        // Pull the gradient of the previous layer's activations out of the
        // buffer and push it through tanh.
        let prev = &cache.layers[li - 1];
        let pg = &prev.geom;
        let pn = pg.wide_len();
        let mut next = pool::zeroed(pg.cout * pn);
        let col = (pg.out.x0 - g.buf.x0) as usize;
        for c in 0..pg.cout {
            for y in 0..pg.out.h {
                let row = (pg.out.y0 - g.buf.y0) as usize + y;
                let src = &dinput[c * g.plane + row * g.wb + col..][..pg.out.w];
                let base = c * pn + y * pg.wb;
                let act = &prev.act[base..base + pg.out.w];
                for ((d, &s), &a) in next[base..base + pg.out.w].iter_mut().zip(src).zip(act) {
                    *d = s * (1.0 - a * a);
                }
            }
        }
        pool::recycle(dinput);
        pool::recycle(std::mem::replace(&mut dz, next));
    }
    pool::recycle(dz);

    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { term: "parameter gradient" });
    }
    Ok(grad)
}


#[cfg(test)]
mod timing {
    use super::*;
    use crate::network::init_params;

    #[test]
    #[ignore]
    fn deep_full_frame() {
        let params = init_params(&"D".parse().unwrap(), 1).unwrap();
        let frame = Frame::new(240, 180, 0, (0..240 * 180).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()).unwrap();
        let out = Rect::full(240, 180);
        for _ in 0..4 {
            let t = std::time::Instant::now();
            let c = forward(&params, &frame, out).unwrap();
            let f = t.elapsed();
            let gp = vec![0.01; c.probs().len()];
            let t = std::time::Instant::now();
            backward(&params, &c, &gp).unwrap();
            println!("fwd {:?} bwd {:?}", f, t.elapsed());
        }
    }
}
