//! AVX-512 convolution kernels over the wide-row layout.
//!
//! A layer with kernel `k` reads input position `p + off[t]` for output
//! position `p`, where `off[t] = dy·wb + dx`. All three passes are written
//! in that form: the forward pass and the input gradient are offset
//! correlations, the weight gradient is a reduction over `p`.

#[cfg(target_arch = "x86_64")]
use std::arch::x86_64::*;

/// Whether the vector kernels can run on this CPU.
pub(crate) fn available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx512f")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Values of zero slack callers leave after the last input plane.
pub(crate) const SLACK: usize = 8;

/// Offset correlation over a `kernel × kernel` tap grid:
/// `out[co·n + p] += Σ_ci Σ_{dy,dx} w[(ci·k² + dy·k + dx)·cout + co] · x[ci·plane + dy·wb + dx + p]`.
///
/// `x` must hold `cin` planes of `plane` values each plus [`SLACK`].
pub(crate) struct Correlation<'a> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub wb: usize,
    /// Weights laid out `[ci][dy·k + dx][co]`.
    pub weights: &'a [f64],
    pub x: &'a [f64],
    pub plane: usize,
    pub n: usize,
}

impl Correlation<'_> {
    pub(crate) fn run(&self, out: &mut [f64]) {
        let k = self.kernel;
        assert_eq!(self.weights.len(), self.cin * k * k * self.cout);
        assert!(out.len() >= self.cout * self.n);
        let reach = (k - 1) * self.wb + (k - 1) + self.n;
        assert!(self.cin == 0 || (self.cin - 1) * self.plane + reach + SLACK <= self.x.len());
        assert!(available());
        // SAFETY: feature checked above; every load stays below
        // `(cin − 1)·plane + reach + SLACK` and stores are masked to `n`.
        unsafe { self.run_avx512(out) }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn run_avx512(&self, out: &mut [f64]) {
        const NV: usize = 3;
        let full = self.n / (8 * NV) * (8 * NV);
        let mut p = 0;
        while p < full {
            self.block::<NV>(out, p, 0xff);
            p += 8 * NV;
        }
        while p < self.n {
            let rem = self.n - p;
            let mask = if rem >= 8 { 0xff } else { (1u16 << rem) as u8 - 1 };
            self.block::<1>(out, p, mask);
            p += 8;
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn block<const NV: usize>(&self, out: &mut [f64], p: usize, last_mask: u8) {
        let mut co = 0;
        while co < self.cout {
            let step = match self.cout - co {
                r if r >= 8 => 8,
                r if r >= 4 => 4,
                r if r >= 2 => 2,
                _ => 1,
            };
            match step {
                8 => self.tile::<8, NV>(out, p, co, last_mask),
                4 => self.tile::<4, NV>(out, p, co, last_mask),
                2 => self.tile::<2, NV>(out, p, co, last_mask),
                _ => self.tile::<1, NV>(out, p, co, last_mask),
            }
            co += step;
        }
    }

    /// `CO` output channels by `8·NV` pixels starting at `p`; lanes of the
    /// last vector outside `last_mask` are left untouched.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    #[inline]
    unsafe fn tile<const CO: usize, const NV: usize>(&self, out: &mut [f64], p: usize, co0: usize, last_mask: u8) {
        let mask = |v: usize| if v + 1 == NV { last_mask } else { 0xff };
        let op = out.as_mut_ptr();
        let mut acc = [[_mm512_setzero_pd(); NV]; CO];
        for (c, row) in acc.iter_mut().enumerate() {
            for (v, a) in row.iter_mut().enumerate() {
                *a = _mm512_maskz_loadu_pd(mask(v), op.add((co0 + c) * self.n + p + 8 * v));
            }
        }
        let k = self.kernel;
        let xp = self.x.as_ptr();
        let wp = self.weights.as_ptr();
        for ci in 0..self.cin {
            for dy in 0..k {
                let base = xp.add(ci * self.plane + dy * self.wb + p);
                if k <= 8 {
                    // NV + 1 loads cover every dx shift of this row.
                    let mut raw = [_mm512_setzero_si512(); 4];
                    for (v, r) in raw.iter_mut().take(NV + 1).enumerate() {
                        *r = _mm512_castpd_si512(_mm512_loadu_pd(base.add(8 * v)));
                    }
                    for dx in 0..k {
                        let w = wp.add((ci * k * k + dy * k + dx) * self.cout + co0);
                        let mut xs = [_mm512_setzero_pd(); NV];
                        for (v, x) in xs.iter_mut().enumerate() {
                            *x = _mm512_castsi512_pd(shift(raw[v + 1], raw[v], dx));
                        }
                        for (c, row) in acc.iter_mut().enumerate() {
                            let wc = _mm512_set1_pd(*w.add(c));
                            for (a, &x) in row.iter_mut().zip(&xs) {
                                *a = _mm512_fmadd_pd(wc, x, *a);
                            }
                        }
                    }
                } else {
                    for dx in 0..k {
                        let w = wp.add((ci * k * k + dy * k + dx) * self.cout + co0);
                        let mut xs = [_mm512_setzero_pd(); NV];
                        for (v, x) in xs.iter_mut().enumerate() {
                            *x = _mm512_loadu_pd(base.add(dx + 8 * v));
                        }
                        for (c, row) in acc.iter_mut().enumerate() {
                            let wc = _mm512_set1_pd(*w.add(c));
                            for (a, &x) in row.iter_mut().zip(&xs) {
                                *a = _mm512_fmadd_pd(wc, x, *a);
                            }
                        }
                    }
                }
            }
        }
        for (c, row) in acc.iter().enumerate() {
            for (v, &a) in row.iter().enumerate() {
                _mm512_mask_storeu_pd(op.add((co0 + c) * self.n + p + 8 * v), mask(v), a);
            }
        }
    }

    #[cfg(not(target_arch = "x86_64"))]
    unsafe fn run_avx512(&self, _out: &mut [f64]) {
        unreachable!("vector kernels are x86-64 only")
    }
}

/// `tanh` applied in place, accurate to a few ulp.
pub(crate) fn tanh_in_place(v: &mut [f64]) {
    assert!(available());
    // SAFETY: feature checked; loads and stores are masked to the slice.
    unsafe { tanh_avx512(v) }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn tanh_avx512(v: &mut [f64]) {
    let ptr = v.as_mut_ptr();
    let mut i = 0;
    while i < v.len() {
        let rem = v.len() - i;
        let mask: u8 = if rem >= 8 { 0xff } else { (1u16 << rem) as u8 - 1 };
        let x = _mm512_maskz_loadu_pd(mask, ptr.add(i));
        _mm512_mask_storeu_pd(ptr.add(i), mask, tanh8(x));
        i += 8;
    }
}

/// `e^y − 1` for `|y| ≤ 0.7` and `e^y` for `0 ≤ y ≤ 40`, by Taylor
/// polynomials after reduction `y = k·ln2 + r`.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
#[inline]
unsafe fn tanh8(x: __m512d) -> __m512d {
    const LN2_HI: f64 = 0.693_147_180_369_123_8;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let sign = _mm512_castsi512_pd(_mm512_and_si512(
        _mm512_castpd_si512(x),
        _mm512_set1_epi64(i64::MIN),
    ));
    let a = _mm512_abs_pd(x);
    let y = _mm512_min_pd(_mm512_add_pd(a, a), _mm512_set1_pd(40.0));

    // Large branch: e^y via reduction, then 1 − 2/(e^y + 1).
    let k = _mm512_roundscale_pd::<{ _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC }>(_mm512_mul_pd(
        y,
        _mm512_set1_pd(std::f64::consts::LOG2_E),
    ));
    let r = _mm512_fnmadd_pd(k, _mm512_set1_pd(LN2_LO), _mm512_fnmadd_pd(k, _mm512_set1_pd(LN2_HI), y));
    let one = _mm512_set1_pd(1.0);
    let mut p = _mm512_set1_pd(1.0 / 6_227_020_800.0);
    for d in (1..13).rev() {
        p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(1.0 / FACT[d]));
    }
    let e = _mm512_scalef_pd(_mm512_fmadd_pd(p, r, one), k);
    let two = _mm512_set1_pd(2.0);
    let big = _mm512_sub_pd(one, _mm512_div_pd(two, _mm512_add_pd(e, one)));

    // Small branch: em1 = e^y − 1 directly, tanh = em1 / (em1 + 2).
    let mut q = _mm512_set1_pd(1.0 / FACT[16]);
    for d in (1..16).rev() {
        q = _mm512_fmadd_pd(q, y, _mm512_set1_pd(1.0 / FACT[d]));
    }
    let em1 = _mm512_mul_pd(q, y);
    let small = _mm512_div_pd(em1, _mm512_add_pd(em1, two));

    let use_small = _mm512_cmp_pd_mask::<_CMP_LT_OQ>(a, _mm512_set1_pd(0.35));
    let t = _mm512_mask_blend_pd(use_small, big, small);
    _mm512_castsi512_pd(_mm512_or_si512(_mm512_castpd_si512(t), _mm512_castpd_si512(sign)))
}

/// `FACT[d] = d!`
const FACT: [f64; 17] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362_880.0,
    3_628_800.0,
    39_916_800.0,
    479_001_600.0,
    6_227_020_800.0,
    87_178_291_200.0,
    1_307_674_368_000.0,
    20_922_789_888_000.0,
];

/// Lanes `dx..dx + 8` of the 16-lane concatenation `lo:hi`.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
#[inline]
unsafe fn shift(hi: __m512i, lo: __m512i, dx: usize) -> __m512i {
    match dx {
        0 => lo,
        1 => _mm512_alignr_epi64::<1>(hi, lo),
        2 => _mm512_alignr_epi64::<2>(hi, lo),
        3 => _mm512_alignr_epi64::<3>(hi, lo),
        4 => _mm512_alignr_epi64::<4>(hi, lo),
        5 => _mm512_alignr_epi64::<5>(hi, lo),
        6 => _mm512_alignr_epi64::<6>(hi, lo),
        7 => _mm512_alignr_epi64::<7>(hi, lo),
        _ => hi,
    }
}

/// Weight gradient `g[(co·cin + ci)·k² + dy·k + dx] += Σ_p dz[co·n + p] · x[ci·plane + dy·wb + dx + p]`.
pub(crate) struct WeightGrad<'a> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub wb: usize,
    pub dz: &'a [f64],
    pub x: &'a [f64],
    pub plane: usize,
    pub n: usize,
}

impl WeightGrad<'_> {
    pub(crate) fn run(&self, grad: &mut [f64]) {
        let k = self.kernel;
        assert!(self.dz.len() >= self.cout * self.n);
        assert!(grad.len() >= self.cout * self.cin * k * k);
        let max_off = (k - 1) * self.wb + (k - 1);
        assert!(self.cin == 0 || (self.cin - 1) * self.plane + max_off + self.n <= self.x.len());
        assert!(available());
        // SAFETY: as for `Correlation::run`.
        unsafe {
            match k {
                1 => self.run_k::<1>(grad),
                3 => self.run_k::<3>(grad),
                5 => self.run_k::<5>(grad),
                7 => self.run_k::<7>(grad),
                _ => self.run_generic(grad),
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn run_k<const K: usize>(&self, grad: &mut [f64]) {
        // Pixel chunks keep the dz rows and input rows of one chunk in cache
        // across every (ci, dy) pass.
        const CHUNK: usize = 1024;
        let mut p0 = 0;
        while p0 < self.n {
            let p1 = (p0 + CHUNK).min(self.n);
            let mut co = 0;
            while co < self.cout {
                let step = if self.cout - co >= 4 { 4 } else { 1 };
                for ci in 0..self.cin {
                    for dy in 0..K {
                        if step == 4 {
                            self.tile::<4, K>(grad, co, ci, dy, p0, p1);
                        } else {
                            self.tile::<1, K>(grad, co, ci, dy, p0, p1);
                        }
                    }
                }
                co += step;
            }
            p0 = p1;
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    #[inline]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile<const CO: usize, const K: usize>(
        &self,
        grad: &mut [f64],
        co0: usize,
        ci: usize,
        dy: usize,
        p0: usize,
        p1: usize,
    ) {
        let mut acc = [[_mm512_setzero_pd(); K]; CO];
        let dzp = self.dz.as_ptr();
        let xb = self.x.as_ptr().add(ci * self.plane + dy * self.wb);
        let step = |acc: &mut [[__m512d; K]; CO], p: usize, mask: u8| {
            let mut d = [_mm512_setzero_pd(); CO];
            for (c, dv) in d.iter_mut().enumerate() {
                *dv = _mm512_maskz_loadu_pd(mask, dzp.add((co0 + c) * self.n + p));
            }
            for dx in 0..K {
                let x = _mm512_maskz_loadu_pd(mask, xb.add(dx + p));
                for c in 0..CO {
                    acc[c][dx] = _mm512_fmadd_pd(d[c], x, acc[c][dx]);
                }
            }
        };
        let mut p = p0;
        // Shifted input views come from two loads and in-register shifts;
        // the second load must stay inside the plane.
        while p + 8 <= p1 && p + 16 <= self.n && K <= 8 {
            let mut d = [_mm512_setzero_pd(); CO];
            for (c, dv) in d.iter_mut().enumerate() {
                *dv = _mm512_loadu_pd(dzp.add((co0 + c) * self.n + p));
            }
            let lo = _mm512_castpd_si512(_mm512_loadu_pd(xb.add(p)));
            let hi = _mm512_castpd_si512(_mm512_loadu_pd(xb.add(p + 8)));
            for dx in 0..K {
                let x = _mm512_castsi512_pd(shift(hi, lo, dx));
                for c in 0..CO {
                    acc[c][dx] = _mm512_fmadd_pd(d[c], x, acc[c][dx]);
                }
            }
            p += 8;
        }
        while p < p1 {
            let mask = if p1 - p >= 8 { 0xff } else { (1u16 << (p1 - p)) as u8 - 1 };
            step(&mut acc, p, mask);
            p += 8;
        }
        let k2 = K * K;
        for (c, row) in acc.iter().enumerate() {
            let g = ((co0 + c) * self.cin + ci) * k2 + dy * K;
            for (dx, &a) in row.iter().enumerate() {
                grad[g + dx] += _mm512_reduce_add_pd(a);
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn run_generic(&self, grad: &mut [f64]) {
        let k = self.kernel;
        let dzp = self.dz.as_ptr();
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for dy in 0..k {
                    for dx in 0..k {
                        let xb = self.x.as_ptr().add(ci * self.plane + dy * self.wb + dx);
                        let mut acc = _mm512_setzero_pd();
                        let mut p = 0;
                        while p < self.n {
                            let rem = self.n - p;
                            let mask: u8 = if rem >= 8 { 0xff } else { (1u16 << rem) as u8 - 1 };
                            let d = _mm512_maskz_loadu_pd(mask, dzp.add(co * self.n + p));
                            let x = _mm512_maskz_loadu_pd(mask, xb.add(p));
                            acc = _mm512_fmadd_pd(d, x, acc);
                            p += 8;
                        }
                        grad[((co * self.cin + ci) * k + dy) * k + dx] += _mm512_reduce_add_pd(acc);
                    }
                }
            }
        }
    }

    #[cfg(not(target_arch = "x86_64"))]
    unsafe fn run_k<const K: usize>(&self, _grad: &mut [f64]) {
        unreachable!("vector kernels are x86-64 only")
    }

    #[cfg(not(target_arch = "x86_64"))]
    unsafe fn run_generic(&self, _grad: &mut [f64]) {
        unreachable!("vector kernels are x86-64 only")
    }
}
