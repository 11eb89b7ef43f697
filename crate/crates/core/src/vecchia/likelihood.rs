use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NeighborPlan;
use crate::covariance::{CovarianceParams, Kernel};
use crate::data::ObservationSet;
use crate::design::{check_gram_rank, DesignMatrix, MeanParams, N_COEF};
use crate::geo::squared_norm3;
use crate::linalg::{cholesky_in_place, spd_inverse};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observations whitened by the Vecchia factor `L` (`LΣLᵀ ≈ I`), in plan order.
#[derive(Clone, Debug)]
pub struct Whitened {
    /// Sum of the log conditional standard deviations: half the log-determinant
    /// of the implied covariance.
    pub half_logdet: f64,
    pub ly: Vec<f64>,
    pub lx: Vec<[f64; N_COEF]>,
}

impl Whitened {
    pub fn loglik(&self, beta: &MeanParams) -> f64 {
        let b = beta.to_array();
        let rss: f64 = self
            .ly
            .iter()
            .zip(&self.lx)
            .map(|(y, x)| {
                let r = y - x.iter().zip(&b).map(|(x, b)| x * b).sum::<f64>();
                r * r
            })
            .sum();
        -self.half_logdet - 0.5 * self.ly.len() as f64 * LN_2PI - 0.5 * rss
    }

    /// Generalized least squares on the whitened system.
    pub fn gls(&self) -> Result<GlsResult> {
        let mut gram = vec![0.0; N_COEF * N_COEF];
        let mut rhs = [0.0; N_COEF];
        for (x, y) in self.lx.iter().zip(&self.ly) {
            for a in 0..N_COEF {
                rhs[a] += x[a] * y;
                for b in 0..=a {
                    gram[a * N_COEF + b] += x[a] * x[b];
                }
            }
        }
        for a in 0..N_COEF {
            for b in 0..a {
                gram[b * N_COEF + a] = gram[a * N_COEF + b];
            }
        }
        check_gram_rank(&gram)?;
        let cov = spd_inverse(&gram, N_COEF).ok_or_else(|| Error::RankDeficient { columns: vec!["(all)".into()] })?;
        let beta: Vec<f64> =
            (0..N_COEF).map(|a| (0..N_COEF).map(|b| cov[a * N_COEF + b] * rhs[b]).sum()).collect();
        let beta = MeanParams::from_slice(&beta);
        Ok(GlsResult { beta, cov, loglik: self.loglik(&beta) })
    }
}

/// Profiled GLS output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlsResult {
    pub beta: MeanParams,
    /// `((LX)ᵀ(LX))⁻¹`, row-major 7 × 7.
    pub cov: Vec<f64>,
    /// Vecchia log-likelihood at `beta`.
    pub loglik: f64,
}

impl GlsResult {
    pub fn se(&self) -> [f64; N_COEF] {
        std::array::from_fn(|a| self.cov[a * N_COEF + a].sqrt())
    }
}

/// Data, design and plan prepared for repeated likelihood evaluation.
///
/// Every within-neighborhood pair of points is stored once, with its squared
/// chordal distance and squared time difference, so an evaluation only
/// computes one Matérn value per distinct pair. The correlations of the
/// most recent `(smoothness, spatial_range, temporal_range)` are kept, so
/// evaluations that change only the variance or the nugget skip that step.
pub struct VecchiaLikelihood {
    y: Vec<f64>,
    x: Vec<[f64; N_COEF]>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    pair_offsets: Vec<usize>,
    pair_ids: Vec<u32>,
    pairs: Vec<(f64, f64)>,
    cache: Mutex<Option<([u64; 3], Arc<Vec<f64>>)>>,
}

impl VecchiaLikelihood {
    pub fn new(set: &ObservationSet, design: &DesignMatrix, plan: &NeighborPlan) -> Result<Self> {
        let n = set.len();
        if plan.len() != n || design.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "plan ({}) and design ({}) must match the data set ({n})",
                plan.len(),
                design.nrows()
            )));
        }
        let obs = set.observations();
        let cart: Vec<[f64; 3]> = plan.order.iter().map(|&i| obs[i].point().cartesian()).collect();
        let times: Vec<f64> = plan.order.iter().map(|&i| obs[i].time).collect();
        let y = plan.order.iter().map(|&i| obs[i].wind).collect();
        let x = plan
            .order
            .iter()
            .map(|&i| design.row(i).try_into().expect("design rows have N_COEF columns"))
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        let mut pair_offsets = Vec::with_capacity(n + 1);
        pair_offsets.push(0);
        let mut pair_ids = Vec::new();
        let mut pairs = Vec::new();
        let mut index: HashMap<(u32, u32), u32> = HashMap::new();
        let mut local = Vec::new();
        for k in 0..n {
            local.clear();
            local.extend_from_slice(plan.neighbors(k));
            local.push(k);
            neighbors.extend_from_slice(&local[..local.len() - 1]);
            offsets.push(neighbors.len());
            for r in 1..local.len() {
                for c in 0..r {
                    let (a, b) = (local[r].min(local[c]) as u32, local[r].max(local[c]) as u32);
                    let id = *index.entry((a, b)).or_insert_with(|| {
                        let (a, b) = (a as usize, b as usize);
                        let dt = times[a] - times[b];
                        pairs.push((squared_norm3(&cart[a], &cart[b]), dt * dt));
                        (pairs.len() - 1) as u32
                    });
                    pair_ids.push(id);
                }
            }
            pair_offsets.push(pair_ids.len());
        }
        Ok(VecchiaLikelihood { y, x, offsets, neighbors, pair_offsets, pair_ids, pairs, cache: Mutex::new(None) })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of distinct point pairs whose covariance is needed per evaluation.
    pub fn distinct_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Applies the Vecchia factor to `y` and every column of the design.
    /// The result does not depend on the number of threads.
    pub fn whiten(&self, params: &CovarianceParams) -> Result<Whitened> {
        let kernel = Kernel::new(params)?;
        let corr = self.correlations(params)?;
        let diag = kernel.diagonal();
        let variance = params.variance;
        let values: Vec<f64> = corr.iter().map(|c| variance * c).collect();

        let rows: Vec<Result<(f64, f64, [f64; N_COEF])>> = (0..self.len())
            .into_par_iter()
            .with_min_len(32)
            .map_init(Vec::new, |scratch: &mut Vec<f64>, k| self.whiten_row(k, &values, diag, scratch))
            .collect();

        let mut half_logdet = 0.0;
        let mut ly = Vec::with_capacity(self.len());
        let mut lx = Vec::with_capacity(self.len());
        for row in rows {
            let (log_l, wy, wx) = row?;
            half_logdet += log_l;
            ly.push(wy);
            lx.push(wx);
        }
        Ok(Whitened { half_logdet, ly, lx })
    }

    fn correlations(&self, params: &CovarianceParams) -> Result<Arc<Vec<f64>>> {
        let key = [params.smoothness.to_bits(), params.spatial_range.to_bits(), params.temporal_range.to_bits()];
        if let Some((k, v)) = &*self.cache.lock().unwrap() {
            if *k == key {
                return Ok(v.clone());
            }
        }
        let unit = Kernel::new(&CovarianceParams { variance: 1.0, ..*params })?;
        let corr: Arc<Vec<f64>> =
            Arc::new(self.pairs.par_iter().with_min_len(2048).map(|&(s2, t2)| unit.from_squared(s2, t2)).collect());
        *self.cache.lock().unwrap() = Some((key, corr.clone()));
        Ok(corr)
    }

    fn whiten_row(
        &self,
        k: usize,
        values: &[f64],
        diag: f64,
        scratch: &mut Vec<f64>,
    ) -> Result<(f64, f64, [f64; N_COEF])> {
        const NRHS: usize = N_COEF + 1;
        let nb = &self.neighbors[self.offsets[k]..self.offsets[k + 1]];
        let ids = &self.pair_ids[self.pair_offsets[k]..self.pair_offsets[k + 1]];
        let s = nb.len() + 1;
        scratch.clear();
        scratch.resize(s * s + s * NRHS, 0.0);
        let (a, rhs) = scratch.split_at_mut(s * s);

        let mut id = ids.iter();
        for r in 0..s {
            for c in 0..r {
                a[r * s + c] = values[*id.next().unwrap() as usize];
            }
            a[r * s + r] = diag;
        }
        if !cholesky_in_place(a, s, s) {
            return Err(Error::Factorization { position: k });
        }

        for r in 0..s {
            let p = if r + 1 == s { k } else { nb[r] };
            let row = &mut rhs[r * NRHS..(r + 1) * NRHS];
            row[0] = self.y[p];
            row[1..].copy_from_slice(&self.x[p]);
        }
        for r in 0..s {
            let (done, rest) = rhs.split_at_mut(r * NRHS);
            let cur = &mut rest[..NRHS];
            for q in 0..r {
                let l = a[r * s + q];
                let prev = &done[q * NRHS..(q + 1) * NRHS];
                for c in 0..NRHS {
                    cur[c] -= l * prev[c];
                }
            }
            let inv = 1.0 / a[r * s + r];
            cur.iter_mut().for_each(|v| *v *= inv);
        }
        let last = &rhs[(s - 1) * NRHS..];
        let mut wx = [0.0; N_COEF];
        wx.copy_from_slice(&last[1..]);
        Ok((a[(s - 1) * s + (s - 1)].ln(), last[0], wx))
    }

    pub fn loglik(&self, params: &CovarianceParams, beta: &MeanParams) -> Result<f64> {
        Ok(self.whiten(params)?.loglik(beta))
    }

    pub fn profiled(&self, params: &CovarianceParams) -> Result<GlsResult> {
        self.whiten(params)?.gls()
    }
}

/// Vecchia log-likelihood at covariance parameters `params` and mean `beta`.
pub fn vecchia_loglik(
    params: &CovarianceParams,
    beta: &MeanParams,
    set: &ObservationSet,
    design: &DesignMatrix,
    plan: &NeighborPlan,
) -> Result<f64> {
    VecchiaLikelihood::new(set, design, plan)?.loglik(params, beta)
}

/// GLS estimate of the mean for fixed covariance parameters, its covariance
/// `((LX)ᵀ(LX))⁻¹`, and the Vecchia log-likelihood at the estimate.
pub fn profiled_gls(
    params: &CovarianceParams,
    set: &ObservationSet,
    design: &DesignMatrix,
    plan: &NeighborPlan,
) -> Result<GlsResult> {
    VecchiaLikelihood::new(set, design, plan)?.profiled(params)
}
