//! Local Lagrange interpolation on uniform grids.

use crate::field::{ComplexField, C64};

/// Weights of the `order + 1`-point Lagrange stencil on nodes `x0 + (start + k) h`,
/// evaluated at `x`.
pub fn lagrange_weights(x: f64, x0: f64, h: f64, start: i64, order: usize) -> Vec<f64> {
    let t = (x - x0) / h - start as f64;
    let npts = order + 1;
    (0..npts)
        .map(|k| {
            let mut w = 1.0;
            for l in 0..npts {
                if l != k {
                    w *= (t - l as f64) / (k as f64 - l as f64);
                }
            }
            w
        })
        .collect()
}

/// First node of the `order + 1`-point stencil centred on `x`, clamped so the
/// stencil stays inside `[lo, hi]` (inclusive node indices). `None` if the
/// range holds fewer than `order + 1` nodes.
pub fn stencil_start(x: f64, x0: f64, h: f64, order: usize, lo: i64, hi: i64) -> Option<i64> {
    let npts = order as i64 + 1;
    if hi - lo + 1 < npts {
        return None;
    }
    let t = (x - x0) / h;
    let centred = (t - 0.5 * (npts - 1) as f64).round() as i64;
    Some(centred.clamp(lo, hi - npts + 1))
}

/// Tensor Lagrange interpolation of a physical field at an arbitrary point.
///
/// The stencil wraps periodically; wrapped samples pick up the field's Bloch phase.
pub fn sample_field(field: &ComplexField, x: &[f64], order: usize) -> C64 {
    let g = &field.grid;
    let n = g.n;
    let h = g.spacing();
    let np = g.points_per_axis as i64;
    let npts = order + 1;
    let mut starts = vec![0i64; n];
    let mut weights = Vec::with_capacity(n);
    for a in 0..n {
        let t = (x[a] + g.half_width) / h;
        let st = (t - 0.5 * order as f64).round() as i64;
        starts[a] = st;
        weights.push(lagrange_weights(x[a], -g.half_width, h, st, order));
    }
    let mut total = C64::new(0.0, 0.0);
    let mut idx = vec![0usize; n];
    let count = npts.pow(n as u32);
    for c in 0..count {
        let mut rest = c;
        let mut w = 1.0;
        let mut phase = 0.0;
        for a in (0..n).rev() {
            let k = rest % npts;
            rest /= npts;
            w *= weights[a][k];
            let raw = starts[a] + k as i64;
            let wraps = raw.div_euclid(np);
            phase += wraps as f64 * 2.0 * g.half_width * field.shift[a];
            idx[a] = raw.rem_euclid(np) as usize;
        }
        let v = field.data[g.flatten(&idx)];
        total += if phase == 0.0 {
            v * w
        } else {
            v * w * C64::from_polar(1.0, phase)
        };
    }
    total
}
