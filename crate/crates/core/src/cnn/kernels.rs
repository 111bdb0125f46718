//! Direct convolution kernels.
//!
//! Outputs are computed in fixed-width blocks held in local arrays so the
//! compiler keeps them in vector registers. Accumulation order is fixed
//! and products are not fused, so every dispatch target gives bit-identical
//! results.

use crate::cnn::scalar::Scalar;

const LANES: usize = 16;

/// Shape of a stride-1 valid convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
}

impl ConvDims {
    pub fn ho(&self) -> usize {
        self.h - self.k + 1
    }

    pub fn wo(&self) -> usize {
        self.w - self.k + 1
    }
}

/// Output channels computed together so each input load feeds several
/// independent accumulators.
const CHANNEL_BLOCK: usize = 6;

#[inline(always)]
fn forward_block<T: Scalar, const OB: usize>(
    d: ConvDims,
    o0: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (ho, wo, k) = (d.ho(), d.wo(), d.k);
    let taps = d.c_in * k * k;
    // [c][ky][kx][b]
    let packed: Vec<[T; OB]> = (0..taps)
        .map(|t| std::array::from_fn(|b| weight[(o0 + b) * taps + t]))
        .collect();
    let init: [[T; LANES]; OB] = std::array::from_fn(|b| [bias[o0 + b]; LANES]);
    for y in 0..ho {
        let mut x0 = 0;
        while x0 < wo {
            // the last block is shifted left to end at the row's end
            let start = if x0 + LANES <= wo {
                x0
            } else {
                wo.saturating_sub(LANES)
            };
            if start + LANES > wo {
                forward_scalar::<T, OB>(d, o0, y, input, weight, bias, out);
                break;
            }
            let mut acc = init;
            for (c, wc) in packed.chunks_exact(k * k).enumerate() {
                for (ky, wk) in wc.chunks_exact(k).enumerate() {
                    let base = (c * d.h + y + ky) * d.w + start;
                    let src = &input[base..base + k - 1 + LANES];
                    for (wv, s) in wk.iter().zip(src.windows(LANES)) {
                        let s: &[T; LANES] = s.try_into().expect("block");
                        for (a, &w) in acc.iter_mut().zip(wv) {
                            for i in 0..LANES {
                                a[i] = a[i] + w * s[i];
                            }
                        }
                    }
                }
            }
            for (b, a) in acc.iter().enumerate() {
                out[((o0 + b) * ho + y) * wo + start..][..LANES].copy_from_slice(a);
            }
            x0 = start + LANES;
        }
    }
}

/// One output row for rows narrower than a block.
#[inline(always)]
fn forward_scalar<T: Scalar, const OB: usize>(
    d: ConvDims,
    o0: usize,
    y: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (ho, wo, k) = (d.ho(), d.wo(), d.k);
    let wstride = d.c_in * k * k;
    for b in 0..OB {
        let o = o0 + b;
        for x in 0..wo {
            let mut acc = bias[o];
            for c in 0..d.c_in {
                for ky in 0..k {
                    let src = &input[(c * d.h + y + ky) * d.w + x..][..k];
                    let wrow = &weight[o * wstride + (c * k + ky) * k..][..k];
                    for (&wv, &sv) in wrow.iter().zip(src) {
                        acc = acc + wv * sv;
                    }
                }
            }
            out[(o * ho + y) * wo + x] = acc;
        }
    }
}

#[inline(always)]
fn forward_impl<T: Scalar>(d: ConvDims, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let mut o0 = 0;
    while o0 + CHANNEL_BLOCK <= d.c_out {
        forward_block::<T, CHANNEL_BLOCK>(d, o0, input, weight, bias, out);
        o0 += CHANNEL_BLOCK;
    }
    while o0 < d.c_out {
        forward_block::<T, 1>(d, o0, input, weight, bias, out);
        o0 += 1;
    }
}

/// # Safety
///
/// `at + LANES` must not exceed `v.len()`.
#[inline(always)]
unsafe fn block<T>(v: &[T], at: usize) -> &[T; LANES] {
    debug_assert!(at + LANES <= v.len());
    &*(v.as_ptr().add(at) as *const [T; LANES])
}

#[inline(always)]
fn weight_grad_block<T: Scalar, const OB: usize>(
    d: ConvDims,
    o0: usize,
    input: &[T],
    grad_out: &[T],
    dw: &mut [T],
) {
    let (ho, wo, k) = (d.ho(), d.wo(), d.k);
    let taps = d.c_in * k * k;
    for c in 0..d.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let mut acc = [[T::zero(); LANES]; OB];
                let mut tail = [T::zero(); OB];
                for y in 0..ho {
                    let src = &input[(c * d.h + y + ky) * d.w + kx..][..wo];
                    let g0 = (o0 * ho + y) * wo;
                    let plane = ho * wo;
                    let mut x0 = 0;
                    while x0 + LANES <= wo {
                        let s: &[T; LANES] = src[x0..x0 + LANES].try_into().expect("block");
                        for (b, a) in acc.iter_mut().enumerate() {
                            // SAFETY: o0 + b < c_out, y < ho and x0 + LANES <= wo, and the
                            // gradient length was checked on entry.
                            let g = unsafe { block(grad_out, g0 + b * plane + x0) };
                            for i in 0..LANES {
                                a[i] = a[i] + g[i] * s[i];
                            }
                        }
                        x0 += LANES;
                    }
                    if x0 < wo && wo >= LANES {
                        // shifted last block with the already counted lanes zeroed
                        let start = wo - LANES;
                        let s: &[T; LANES] = src[start..].try_into().expect("block");
                        for (b, a) in acc.iter_mut().enumerate() {
                            // SAFETY: as above with start + LANES == wo.
                            let mut g = *unsafe { block(grad_out, g0 + b * plane + start) };
                            g[..x0 - start].iter_mut().for_each(|v| *v = T::zero());
                            for i in 0..LANES {
                                a[i] = a[i] + g[i] * s[i];
                            }
                        }
                    } else {
                        for (b, t) in tail.iter_mut().enumerate() {
                            let at = g0 + b * plane;
                            for (&gv, &sv) in grad_out[at + x0..at + wo].iter().zip(&src[x0..]) {
                                *t = *t + gv * sv;
                            }
                        }
                    }
                }
                let t = (c * k + ky) * k + kx;
                for (b, (a, &tl)) in acc.iter().zip(&tail).enumerate() {
                    let v = &mut dw[(o0 + b) * taps + t];
                    *v = *v + a.iter().fold(T::zero(), |s, &x| s + x) + tl;
                }
            }
        }
    }
}

#[inline(always)]
fn weight_grad_impl<T: Scalar>(d: ConvDims, input: &[T], grad_out: &[T], dw: &mut [T]) {
    assert!(
        grad_out.len() >= d.c_out * d.ho() * d.wo(),
        "gradient too short"
    );
    let mut o0 = 0;
    while o0 + CHANNEL_BLOCK <= d.c_out {
        weight_grad_block::<T, CHANNEL_BLOCK>(d, o0, input, grad_out, dw);
        o0 += CHANNEL_BLOCK;
    }
    while o0 < d.c_out {
        weight_grad_block::<T, 1>(d, o0, input, grad_out, dw);
        o0 += 1;
    }
}

macro_rules! dispatch {
    ($name:ident, $imp:ident, ($($arg:ident: $ty:ty),*)) => {
        pub(crate) fn $name<T: Scalar>($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx512f")]
                unsafe fn wide<T: Scalar>($($arg: $ty),*) {
                    $imp($($arg),*)
                }
                #[target_feature(enable = "avx2")]
                unsafe fn narrow<T: Scalar>($($arg: $ty),*) {
                    $imp($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx512f") {
                    // SAFETY: the CPU supports the enabled feature.
                    return unsafe { wide($($arg),*) };
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports the enabled feature.
                    return unsafe { narrow($($arg),*) };
                }
            }
            $imp($($arg),*)
        }
    };
}

dispatch!(conv_forward, forward_impl, (d: ConvDims, input: &[T], weight: &[T], bias: &[T], out: &mut [T]));
dispatch!(conv_weight_grad, weight_grad_impl, (d: ConvDims, input: &[T], grad_out: &[T], dw: &mut [T]));

/// Gradient with respect to the input: a full correlation of the
/// zero-padded output gradient with the flipped, channel-swapped kernel.
pub(crate) fn conv_input_grad<T: Scalar>(
    d: ConvDims,
    weight: &[T],
    grad_out: &[T],
    grad_in: &mut [T],
) {
    let (ho, wo, k) = (d.ho(), d.wo(), d.k);
    let (ph, pw) = (ho + 2 * (k - 1), wo + 2 * (k - 1));
    let mut padded = vec![T::zero(); d.c_out * ph * pw];
    for o in 0..d.c_out {
        for y in 0..ho {
            let dst = (o * ph + y + k - 1) * pw + k - 1;
            padded[dst..dst + wo].copy_from_slice(&grad_out[(o * ho + y) * wo..][..wo]);
        }
    }
    let kk = k * k;
    let mut flipped = vec![T::zero(); weight.len()];
    for o in 0..d.c_out {
        for c in 0..d.c_in {
            for t in 0..kk {
                flipped[(c * d.c_out + o) * kk + (kk - 1 - t)] = weight[(o * d.c_in + c) * kk + t];
            }
        }
    }
    let full = ConvDims {
        c_in: d.c_out,
        h: ph,
        w: pw,
        c_out: d.c_in,
        k,
    };
    debug_assert_eq!((full.ho(), full.wo()), (d.h, d.w));
    conv_forward(full, &padded, &flipped, &vec![T::zero(); d.c_in], grad_in);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(d: ConvDims, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let (ho, wo, k) = (d.ho(), d.wo(), d.k);
        let mut out = vec![0.0; d.c_out * ho * wo];
        for o in 0..d.c_out {
            for y in 0..ho {
                for x in 0..wo {
                    let mut s = bias[o];
                    for c in 0..d.c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                s += weight[((o * d.c_in + c) * k + ky) * k + kx]
                                    * input[(c * d.h + y + ky) * d.w + x + kx];
                            }
                        }
                    }
                    out[(o * ho + y) * wo + x] = s;
                }
            }
        }
        out
    }

    fn ramp(n: usize, m: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * m % 97) as f64) / 48.0 - 1.0).collect()
    }

    fn dims() -> ConvDims {
        ConvDims {
            c_in: 3,
            h: 23,
            w: 41,
            c_out: 7,
            k: 5,
        }
    }

    #[test]
    fn narrow_rows_use_the_scalar_path() {
        let d = ConvDims {
            c_in: 2,
            h: 9,
            w: 12,
            c_out: 7,
            k: 3,
        };
        let input = ramp(2 * 9 * 12, 5);
        let weight = ramp(7 * 2 * 9, 3);
        let bias = ramp(7, 11);
        let mut out = vec![0.0; 7 * d.ho() * d.wo()];
        conv_forward(d, &input, &weight, &bias, &mut out);
        for (a, b) in out.iter().zip(naive_forward(d, &input, &weight, &bias)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_grad_matches_naive() {
        let d = dims();
        let input = ramp(3 * 23 * 41, 13);
        let g = ramp(7 * d.ho() * d.wo(), 17);
        let mut dw = vec![0.0; 7 * 3 * 25];
        conv_weight_grad(d, &input, &g, &mut dw);
        for o in 0..7 {
            for c in 0..3 {
                for t in 0..25 {
                    let (ky, kx) = (t / 5, t % 5);
                    let mut want = 0.0;
                    for y in 0..d.ho() {
                        for x in 0..d.wo() {
                            want += g[(o * d.ho() + y) * d.wo() + x]
                                * input[(c * 23 + y + ky) * 41 + x + kx];
                        }
                    }
                    assert!((dw[(o * 3 + c) * 25 + t] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn forward_matches_naive_with_tails() {
        let d = dims();
        let input = ramp(3 * 23 * 41, 13);
        let weight = ramp(7 * 3 * 25, 7);
        let bias = ramp(7, 3);
        let mut out = vec![0.0; 7 * d.ho() * d.wo()];
        conv_forward(d, &input, &weight, &bias, &mut out);
        for (a, b) in out.iter().zip(naive_forward(d, &input, &weight, &bias)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
