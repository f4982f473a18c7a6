//! TransE, DistMult and ComplEx scorers trained under the same 1:N
//! binary cross-entropy regime as TuckER.
//!
//! ComplEx embeddings of width `2k` store the real part in the first `k`
//! columns and the imaginary part in the last `k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_loss, sigmoid, smooth_labels};
use super::Group;
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::rng;
use crate::tensor::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    TransE,
    DistMult,
    ComplEx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    pub entities: Matrix,
    pub relations: Matrix,
    /// Added to the TransE score to form the training logit; ignored otherwise.
    pub margin: f64,
}

impl BaselineParams {
    pub fn new(kind: BaselineKind, entities: Matrix, relations: Matrix, margin: f64) -> Result<Self> {
        if entities.cols() != relations.cols() {
            return Err(Error::DimensionMismatch(format!(
                "entity width {} differs from relation width {}",
                entities.cols(),
                relations.cols()
            )));
        }
        if kind == BaselineKind::ComplEx && !entities.cols().is_multiple_of(2) {
            return Err(Error::InvalidArgument("ComplEx embeddings need an even width".into()));
        }
        if entities.rows() == 0 || relations.rows() == 0 || entities.cols() == 0 {
            return Err(Error::InvalidArgument("empty embedding matrix".into()));
        }
        Ok(Self { kind, entities, relations, margin })
    }

    /// Uniform `(-0.1, 0.1)` embeddings; ComplEx gets `dim` complex coordinates.
    pub fn init(kind: BaselineKind, n_e: usize, n_r: usize, dim: usize, margin: f64, seed: u64) -> Result<Self> {
        if n_e == 0 || n_r == 0 || dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let width = if kind == BaselineKind::ComplEx { 2 * dim } else { dim };
        let mut r = rng::stream(seed, rng::Purpose::Init, 0, 1);
        let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-0.1..0.1)).collect() };
        let entities = Matrix::from_vec(n_e, width, uniform(n_e * width))?;
        let relations = Matrix::from_vec(n_r, width, uniform(n_r * width))?;
        Self::new(kind, entities, relations, margin)
    }

    pub fn n_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.rows()
    }

    fn check(&self, h: EntityId, r: RelationId, t: Option<EntityId>) -> Result<()> {
        let n = self.n_entities();
        if h >= n || t.is_some_and(|t| t >= n) {
            return Err(Error::IndexOutOfRange(format!("entity outside 0..{n}")));
        }
        if r >= self.n_relations() {
            return Err(Error::IndexOutOfRange(format!(
                "relation {r} outside 0..{}",
                self.n_relations()
            )));
        }
        Ok(())
    }

    /// Plausibility score; higher is better.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64> {
        self.check(h, r, Some(t))?;
        Ok(score_rows(self.kind, self.entities.row(h), self.relations.row(r), self.entities.row(t)))
    }

    pub fn score_all_tails(&self, h: EntityId, r: RelationId) -> Result<Vector> {
        self.check(h, r, None)?;
        let eh = self.entities.row(h);
        let wr = self.relations.row(r);
        match self.kind {
            BaselineKind::TransE => Ok((0..self.n_entities())
                .map(|t| score_rows(BaselineKind::TransE, eh, wr, self.entities.row(t)))
                .collect()),
            BaselineKind::DistMult | BaselineKind::ComplEx => {
                self.entities.mul_vec(&query_vector(self.kind, eh, wr))
            }
        }
    }

    fn logit_offset(&self) -> f64 {
        if self.kind == BaselineKind::TransE {
            self.margin
        } else {
            0.0
        }
    }

    /// Loss of one group and its gradient added into `de`/`dr`.
    fn accumulate(&self, h: EntityId, r: RelationId, y: &[f64], de: &mut Matrix, dr: &mut Matrix) -> Result<f64> {
        self.check(h, r, None)?;
        let n_e = self.n_entities();
        let logits: Vec<f64> =
            self.score_all_tails(h, r)?.iter().map(|s| s + self.logit_offset()).collect();
        let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let loss = bce_loss(&probs, y)?.value;
        let delta: Vec<f64> = probs.iter().zip(y).map(|(p, y)| (p - y) / n_e as f64).collect();
        let eh = self.entities.row(h).to_vec();
        let wr = self.relations.row(r).to_vec();
        let width = eh.len();
        let mut dh = vec![0.0; width];
        let mut dw = vec![0.0; width];
        match self.kind {
            BaselineKind::TransE => {
                for (t, &dt) in delta.iter().enumerate() {
                    let et = self.entities.row(t);
                    let diff: Vec<f64> = (0..width).map(|i| eh[i] + wr[i] - et[i]).collect();
                    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    // logit = margin - ‖e_h + w_r - e_t‖
                    let dtr = de.row_mut(t);
                    for i in 0..width {
                        let u = diff[i] / norm;
                        dh[i] -= dt * u;
                        dw[i] -= dt * u;
                        dtr[i] += dt * u;
                    }
                }
            }
            BaselineKind::DistMult => {
                let q = query_vector(self.kind, &eh, &wr);
                let c = self.entities.left_mul_vec(&delta)?;
                for (t, &dt) in delta.iter().enumerate() {
                    for (g, &qv) in de.row_mut(t).iter_mut().zip(&q) {
                        *g += dt * qv;
                    }
                }
                for i in 0..width {
                    dh[i] = c[i] * wr[i];
                    dw[i] = c[i] * eh[i];
                }
            }
            BaselineKind::ComplEx => {
                let k = width / 2;
                let q = query_vector(self.kind, &eh, &wr);
                let c = self.entities.left_mul_vec(&delta)?;
                for (t, &dt) in delta.iter().enumerate() {
                    for (g, &qv) in de.row_mut(t).iter_mut().zip(&q) {
                        *g += dt * qv;
                    }
                }
                // q = [Re(h r); Im(h r)] and logit_t = q · e_t.
                for i in 0..k {
                    let (ca, cb) = (c[i], c[i + k]);
                    let (hr, hi, rr, ri) = (eh[i], eh[i + k], wr[i], wr[i + k]);
                    dh[i] = ca * rr + cb * ri;
                    dh[i + k] = -ca * ri + cb * rr;
                    dw[i] = ca * hr + cb * hi;
                    dw[i + k] = -ca * hi + cb * hr;
                }
            }
        }
        for (g, d) in de.row_mut(h).iter_mut().zip(&dh) {
            *g += d;
        }
        for (g, d) in dr.row_mut(r).iter_mut().zip(&dw) {
            *g += d;
        }
        Ok(loss)
    }

    /// Loss and gradients `(∂L/∂E, ∂L/∂R)` of one `(h, r)` group.
    pub fn gradients(&self, h: EntityId, r: RelationId, y: &[f64]) -> Result<(f64, Matrix, Matrix)> {
        if y.len() != self.n_entities() {
            return Err(Error::DimensionMismatch("label vector length".into()));
        }
        let mut de = Matrix::zeros(self.entities.rows(), self.entities.cols());
        let mut dr = Matrix::zeros(self.relations.rows(), self.relations.cols());
        let loss = self.accumulate(h, r, y, &mut de, &mut dr)?;
        Ok((loss, de, dr))
    }
}

fn query_vector(kind: BaselineKind, eh: &[f64], wr: &[f64]) -> Vec<f64> {
    match kind {
        BaselineKind::ComplEx => {
            let k = eh.len() / 2;
            let mut q = vec![0.0; 2 * k];
            for i in 0..k {
                let (hr, hi, rr, ri) = (eh[i], eh[i + k], wr[i], wr[i + k]);
                q[i] = hr * rr - hi * ri;
                q[i + k] = hr * ri + hi * rr;
            }
            q
        }
        _ => eh.iter().zip(wr).map(|(a, b)| a * b).collect(),
    }
}

fn score_rows(kind: BaselineKind, eh: &[f64], wr: &[f64], et: &[f64]) -> f64 {
    match kind {
        BaselineKind::TransE => {
            -eh.iter().zip(wr).zip(et).map(|((h, r), t)| (h + r - t).powi(2)).sum::<f64>().sqrt()
        }
        BaselineKind::DistMult | BaselineKind::ComplEx => {
            query_vector(kind, eh, wr).iter().zip(et).map(|(q, t)| q * t).sum()
        }
    }
}

pub(crate) fn batch_gradients(
    params: &BaselineParams,
    batch: &[Group],
    opts: &super::BatchOptions<'_>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut de = Matrix::zeros(params.entities.rows(), params.entities.cols());
    let mut dr = Matrix::zeros(params.relations.rows(), params.relations.cols());
    let mut y = vec![0.0; params.n_entities()];
    let mut loss = 0.0;
    for g in batch {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &t in &g.tails {
            y[t] = 1.0;
        }
        smooth_labels(&mut y, opts.label_smoothing);
        loss += params.accumulate(g.h, g.r, &y, &mut de, &mut dr)?;
    }
    let scale = if batch.is_empty() { 0.0 } else { 1.0 / batch.len() as f64 };
    de.data_mut().iter_mut().for_each(|v| *v *= scale);
    dr.data_mut().iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, vec![de.data().to_vec(), dr.data().to_vec()]))
}
