/// Per-feature affine scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Features whose training standard deviation is below this are only centered.
const MIN_SCALE: f64 = 1e-12;

impl Standardizer {
    pub fn identity(cols: usize) -> Self {
        Standardizer {
            mean: vec![0.0; cols],
            scale: vec![1.0; cols],
        }
    }

    pub fn fit(x: &[f64], cols: usize) -> Self {
        let rows = x.len() / cols.max(1);
        if rows == 0 {
            return Standardizer::identity(cols);
        }
        let mut mean = vec![0.0; cols];
        for row in x.chunks_exact(cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; cols];
        for row in x.chunks_exact(cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / rows as f64).sqrt();
                if sd > MIN_SCALE {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn cols(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks_exact(cols) {
            out.extend(row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
        }
        out
    }
}
