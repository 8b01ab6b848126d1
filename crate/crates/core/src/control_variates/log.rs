use serde::{Deserialize, Serialize};

use crate::numerics::{dot, rank1_update_in_place, Matrix};

use super::{AuxModel, CvError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: f64,
    pub w: Vec<f64>,
}

/// Per-round records plus raw second-moment aggregates over the augmented
/// feature `x̃ = (x, 1)`.
///
/// Centering by an affine auxiliary model and subtracting a linear baseline
/// are both linear maps of these moments, so [`ObservationLog::stats`] costs
/// `O((d+q)² q)` regardless of how many rounds have been logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    d: usize,
    q: usize,
    records: Vec<Record>,
    sxx: Matrix,
    sxw: Matrix,
    sww: Matrix,
    sxy: Vec<f64>,
    swy: Vec<f64>,
    syy: f64,
}

/// Centered aggregates for one `(ĝ, f_t)` pair.
///
/// With `W̄_s = w_s − ĝ(x_s)` and `Y_s = y_s − x_sᵀθ`:
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredStats {
    /// Number of records `t`.
    pub t: usize,
    /// `Σ W̄_s W̄_sᵀ` (q × q).
    pub wtw: Matrix,
    /// `Σ W̄_s Y_s`.
    pub wty: Vec<f64>,
    /// `Σ W̄_s y_s` (raw reward).
    pub wy: Vec<f64>,
    /// `Σ W̄_s`.
    pub w_sum: Vec<f64>,
    /// `Σ Y_s`.
    pub y_sum: f64,
    /// `Σ Y_s²`.
    pub yy: f64,
    /// `Σ x_s W̄_sᵀ` (d × q).
    pub xw: Matrix,
    /// `Σ x_s y_s`.
    pub xy: Vec<f64>,
}

impl CenteredStats {
    pub fn num_feedback(&self) -> usize {
        self.wty.len()
    }

    /// Unbiased sample covariance of `(Y, W̄)` as a `(q+1) × (q+1)` matrix
    /// with the reward residual first.
    pub fn sample_covariance(&self) -> Matrix {
        let q = self.num_feedback();
        let t = self.t as f64;
        let n = t - 1.0;
        let mut c = Matrix::zeros(q + 1, q + 1);
        c.set(0, 0, (self.yy - self.y_sum * self.y_sum / t) / n);
        for i in 0..q {
            let v = (self.wty[i] - self.w_sum[i] * self.y_sum / t) / n;
            c.set(0, i + 1, v);
            c.set(i + 1, 0, v);
            for j in 0..q {
                c.set(
                    i + 1,
                    j + 1,
                    (self.wtw.get(i, j) - self.w_sum[i] * self.w_sum[j] / t) / n,
                );
            }
        }
        c
    }

    /// `Σ x_s z_s` for hybrid rewards built with coefficients `beta`.
    pub fn hybrid_reward_sum(&self, beta: &[f64]) -> Vec<f64> {
        let correction = self.xw.mul_vec(beta).expect("beta has length q");
        self.xy.iter().zip(correction).map(|(a, c)| a - c).collect()
    }

    pub fn max_relative_diff(&self, other: &CenteredStats) -> f64 {
        fn rel(a: f64, b: f64, scale: f64) -> f64 {
            (a - b).abs() / scale.max(1e-300)
        }
        let scale = |xs: &[f64]| xs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        let mut worst = 0.0_f64;
        let mut cmp = |a: &[f64], b: &[f64]| {
            let s = scale(a).max(scale(b));
            for (x, y) in a.iter().zip(b) {
                worst = worst.max(rel(*x, *y, s));
            }
        };
        cmp(self.wtw.as_slice(), other.wtw.as_slice());
        cmp(&self.wty, &other.wty);
        cmp(&self.wy, &other.wy);
        cmp(&self.w_sum, &other.w_sum);
        cmp(&[self.y_sum, self.yy], &[other.y_sum, other.yy]);
        cmp(self.xw.as_slice(), other.xw.as_slice());
        cmp(&self.xy, &other.xy);
        worst
    }
}

impl ObservationLog {
    pub fn new(d: usize, q: usize) -> Self {
        Self {
            d,
            q,
            records: Vec::new(),
            sxx: Matrix::zeros(d + 1, d + 1),
            sxw: Matrix::zeros(d + 1, q),
            sww: Matrix::zeros(q, q),
            sxy: vec![0.0; d + 1],
            swy: vec![0.0; q],
            syy: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_feedback(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn push(&mut self, x: &[f64], y: f64, w: &[f64]) -> Result<(), CvError> {
        if x.len() != self.d || w.len() != self.q {
            return Err(CvError::DimensionMismatch {
                expected: self.d + self.q,
                found: x.len() + w.len(),
            });
        }
        if !y.is_finite() || x.iter().chain(w).any(|v| !v.is_finite()) {
            return Err(CvError::NonFinite);
        }
        let mut xt = x.to_vec();
        xt.push(1.0);
        rank1_update_in_place(&mut self.sxx, &xt, 1.0).expect("dims checked");
        for (a, &xa) in xt.iter().enumerate() {
            for (i, &wi) in w.iter().enumerate() {
                self.sxw.add_to(a, i, xa * wi);
            }
            self.sxy[a] += xa * y;
        }
        rank1_update_in_place(&mut self.sww, w, 1.0).expect("dims checked");
        for (i, &wi) in w.iter().enumerate() {
            self.swy[i] += wi * y;
        }
        self.syy += y * y;
        self.records.push(Record {
            x: x.to_vec(),
            y,
            w: w.to_vec(),
        });
        Ok(())
    }

    /// `Σ x_s x_sᵀ` over the first `d` coordinates.
    pub fn gram(&self) -> Matrix {
        let idx: Vec<usize> = (0..self.d).collect();
        self.sxx.select(&idx)
    }

    /// `Σ x_s y_s` over the first `d` coordinates.
    pub fn reward_sum(&self) -> Vec<f64> {
        self.sxy[..self.d].to_vec()
    }

    /// Centered aggregates for auxiliary model `aux` and reward baseline
    /// `f_t(x) = xᵀtheta`, computed from the cached moments.
    pub fn stats(&self, aux: &AuxModel, theta: &[f64]) -> CenteredStats {
        let d = self.d;
        let q = self.q;
        assert_eq!(aux.num_feedback(), q);
        assert_eq!(theta.len(), d);
        let g = aux.augmented(d);
        let mut theta_t = theta.to_vec();
        theta_t.push(0.0);

        // Σ x̃ W̄ᵀ = Sxw − Sxx G
        let xw_full = self
            .sxw
            .sub(&self.sxx.matmul(&g).expect("dims"))
            .expect("dims");
        // WᵀW = Sww − GᵀSxw − SxwᵀG + GᵀSxxG = Sww − GᵀSxw − (Σ x̃ W̄ᵀ)ᵀG
        let gt = g.transpose();
        let wtw_raw = self
            .sww
            .sub(&gt.matmul(&self.sxw).expect("dims"))
            .expect("dims")
            .sub(&xw_full.transpose().matmul(&g).expect("dims"))
            .expect("dims");
        let mut wtw = wtw_raw.clone();
        for i in 0..q {
            for j in 0..q {
                let v = 0.5 * (wtw_raw.get(i, j) + wtw_raw.get(j, i));
                wtw.set(i, j, v);
            }
        }
        let g_sxy = gt.mul_vec(&self.sxy).expect("dims");
        let wy: Vec<f64> = self.swy.iter().zip(&g_sxy).map(|(a, b)| a - b).collect();
        let xw_theta = xw_full.tr_mul_vec(&theta_t).expect("dims");
        let wty: Vec<f64> = wy.iter().zip(&xw_theta).map(|(a, b)| a - b).collect();
        let w_sum = xw_full.row(d).to_vec();
        let sxx_theta = self.sxx.mul_vec(&theta_t).expect("dims");
        let y_sum = self.sxy[d] - sxx_theta[d];
        let yy = self.syy - 2.0 * dot(&theta_t, &self.sxy) + dot(&theta_t, &sxx_theta);
        let mut xw = Matrix::zeros(d, q);
        for a in 0..d {
            for i in 0..q {
                xw.set(a, i, xw_full.get(a, i));
            }
        }
        CenteredStats {
            t: self.records.len(),
            wtw,
            wty,
            wy,
            w_sum,
            y_sum,
            yy,
            xw,
            xy: self.sxy[..d].to_vec(),
        }
    }

    /// The same aggregates recomputed record by record.
    pub fn brute_force_stats(&self, aux: &AuxModel, theta: &[f64]) -> CenteredStats {
        let (d, q) = (self.d, self.q);
        let mut wtw = Matrix::zeros(q, q);
        let mut wty = vec![0.0; q];
        let mut wy = vec![0.0; q];
        let mut w_sum = vec![0.0; q];
        let mut y_sum = 0.0;
        let mut yy = 0.0;
        let mut xw = Matrix::zeros(d, q);
        let mut xy = vec![0.0; d];
        for r in &self.records {
            let g = aux.predict(&r.x);
            let wc: Vec<f64> = r.w.iter().zip(&g).map(|(w, g)| w - g).collect();
            let res = r.y - dot(&r.x, theta);
            for i in 0..q {
                for j in 0..q {
                    wtw.add_to(i, j, wc[i] * wc[j]);
                }
                wty[i] += wc[i] * res;
                wy[i] += wc[i] * r.y;
                w_sum[i] += wc[i];
            }
            y_sum += res;
            yy += res * res;
            for a in 0..d {
                for i in 0..q {
                    xw.add_to(a, i, r.x[a] * wc[i]);
                }
                xy[a] += r.x[a] * r.y;
            }
        }
        CenteredStats {
            t: self.records.len(),
            wtw,
            wty,
            wy,
            w_sum,
            y_sum,
            yy,
            xw,
            xy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::SamplingStrategy;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn aggregates_match_brute_force(
            d in 1usize..5,
            q in 1usize..4,
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 12), 1..40),
            coef in proptest::collection::vec(-1.0f64..1.0, 20),
            bias in -0.5f64..0.5,
        ) {
            let mut log = ObservationLog::new(d, q);
            for r in &rows {
                log.push(&r[..d], r[d], &r[d + 1..d + 1 + q]).unwrap();
            }
            let theta = coef[..d].to_vec();
            let coefs: Vec<Vec<f64>> = (0..q).map(|i| coef[5 + i * 5..5 + i * 5 + d].to_vec()).collect();
            for aux in [
                AuxModel::known(&coefs),
                AuxModel::biased(&coefs, bias),
                AuxModel::sampled(d, SamplingStrategy::IndependentSamples, vec![2.0; q]),
            ] {
                let fast = log.stats(&aux, &theta);
                let slow = log.brute_force_stats(&aux, &theta);
                prop_assert_eq!(fast.t, rows.len());
                prop_assert!(fast.max_relative_diff(&slow) < 1e-9, "diff {}", fast.max_relative_diff(&slow));
            }
        }
    }

    #[test]
    fn push_validates() {
        let mut log = ObservationLog::new(2, 1);
        assert!(log.push(&[1.0], 0.0, &[0.0]).is_err());
        assert!(log.push(&[1.0, 2.0], f64::NAN, &[0.0]).is_err());
        log.push(&[1.0, 2.0], 3.0, &[0.5]).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.reward_sum(), vec![3.0, 6.0]);
        assert_eq!(log.gram().as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }
}
