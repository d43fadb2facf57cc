//! Multi-axis FFTs over standard-layout `ArrayD` grids.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Angular wave numbers of an `n`-point periodic grid of length `l`, in FFT order.
pub fn wave_numbers(n: usize, l: f64) -> Vec<f64> {
    let dk = 2.0 * PI / l;
    (0..n)
        .map(|i| if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 } * dk)
        .collect()
}

#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn forward(&self, arr: &mut ArrayD<Complex64>, axes: Range<usize>) {
        for a in axes {
            self.along(arr, a, &self.fwd, 1.0);
        }
    }

    /// Inverse transform, scaled so that `inverse ∘ forward` is the identity.
    pub fn inverse(&self, arr: &mut ArrayD<Complex64>, axes: Range<usize>) {
        let scale = 1.0 / self.n as f64;
        for a in axes {
            self.along(arr, a, &self.inv, scale);
        }
    }

    fn along(&self, arr: &mut ArrayD<Complex64>, axis: usize, plan: &Arc<dyn Fft<f64>>, scale: f64) {
        let n = self.n;
        debug_assert_eq!(arr.shape()[axis], n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if axis + 1 == arr.ndim() {
            // Last axis: lanes are contiguous, batch the whole buffer.
            let data = arr.as_slice_mut().expect("standard layout");
            plan.process_with_scratch(data, &mut scratch);
            if scale != 1.0 {
                data.iter_mut().for_each(|z| *z *= scale);
            }
            return;
        }
        let lanes = arr.len() / n;
        let mut buf = Vec::with_capacity(arr.len());
        for lane in arr.lanes(Axis(axis)) {
            buf.extend(lane.iter().copied());
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        let mut chunks = buf.chunks_exact(n);
        for mut lane in arr.lanes_mut(Axis(axis)) {
            let src = chunks.next().expect("lane count");
            for (d, s) in lane.iter_mut().zip(src) {
                *d = s * scale;
            }
        }
        debug_assert_eq!(lanes, buf.len() / n);
    }
}
