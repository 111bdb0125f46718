//! Downsampling filters: exact area averaging for continuous channels and
//! nearest neighbor for labels.

/// Sparse 1D weights mapping `src` samples onto `dst` samples. Each target
/// cell covers `[t·s/d, (t+1)·s/d)` of the source axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|t| {
            let lo = t as f64 * scale;
            let hi = (t + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let mut w: Vec<(usize, f64)> = (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap))
                })
                .collect();
            let total: f64 = w.iter().map(|&(_, v)| v).sum();
            for e in &mut w {
                e.1 /= total;
            }
            w
        })
        .collect()
}

/// Area-averaged resize of a row-major, `channels`-interleaved buffer.
/// Only shrinking (or identity) is supported.
pub fn downsample_area(
    src: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), width * height * channels);
    assert!(new_width <= width && new_height <= height && new_width > 0 && new_height > 0);
    let wx = area_weights(width, new_width);
    let wy = area_weights(height, new_height);

    let mut rows = vec![0.0; new_width * height * channels];
    for y in 0..height {
        for (tx, weights) in wx.iter().enumerate() {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(sx, w) in weights {
                    acc += w * src[(y * width + sx) * channels + c];
                }
                rows[(y * new_width + tx) * channels + c] = acc;
            }
        }
    }

    let mut out = vec![0.0; new_width * new_height * channels];
    for (ty, weights) in wy.iter().enumerate() {
        for x in 0..new_width {
            for c in 0..channels {
                let mut acc = 0.0;
                for &(sy, w) in weights {
                    acc += w * rows[(sy * new_width + x) * channels + c];
                }
                out[(ty * new_width + x) * channels + c] = acc;
            }
        }
    }
    out
}

/// Nearest-neighbor resize sampling each target cell's center.
pub fn downsample_nearest<T: Copy>(
    src: &[T],
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<T> {
    assert_eq!(src.len(), width * height);
    let map = |t: usize, s: usize, d: usize| (((2 * t + 1) * s) / (2 * d)).min(s - 1);
    let mut out = Vec::with_capacity(new_width * new_height);
    for ty in 0..new_height {
        let sy = map(ty, height, new_height);
        for tx in 0..new_width {
            out.push(src[sy * width + map(tx, width, new_width)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_partition_unity() {
        for (s, d) in [(600, 504), (7, 3), (10, 10), (5, 1)] {
            for w in area_weights(s, d) {
                let total: f64 = w.iter().map(|e| e.1).sum();
                assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn halving_averages_blocks() {
        let src = [1.0, 3.0, 5.0, 7.0];
        assert_eq!(downsample_area(&src, 4, 1, 1, 2, 1), vec![2.0, 6.0]);
    }

    #[test]
    fn mean_is_preserved() {
        let src: Vec<f64> = (0..30).map(|i| (i * 7 % 11) as f64).collect();
        let out = downsample_area(&src, 6, 5, 1, 3, 5);
        let mean_in: f64 = src.iter().sum::<f64>() / 30.0;
        let mean_out: f64 = out.iter().sum::<f64>() / 15.0;
        assert_relative_eq!(mean_in, mean_out, epsilon = 1e-12);
    }

    #[test]
    fn nearest_picks_cell_centers() {
        let src = [0u8, 1, 2, 3, 4, 5];
        assert_eq!(downsample_nearest(&src, 6, 1, 3, 1), vec![1, 3, 5]);
        assert_eq!(downsample_nearest(&src, 6, 1, 6, 1), src.to_vec());
    }
}
