//! TuckER scoring `φ(h, r, t) = G ×₁ e_h ×₂ w_r ×₃ e_t` and its closed-form
//! gradients under 1:N binary cross-entropy.
//!
//! Writing `M_r = G ×₂ w_r` (a `d_e × d_e` matrix) the score is the bilinear
//! form `e_hᵀ M_r e_t`. With dropout multipliers `m₁` (head), `m₂` (on
//! `M_r`) and `m₃` (combined vector) the forward pass is
//!
//! ```text
//! a  = m₁ ⊙ e_h
//! x  = aᵀ (m₂ ⊙ M_r)
//! x' = m₃ ⊙ x
//! logit_t = x' · e_t
//! ```
//!
//! and with `δ_t = (σ(logit_t) − y_t) / n_e` the backward pass is
//!
//! ```text
//! ∂/∂e_t  += δ_t x'
//! c        = Σ_t δ_t e_t,   g = m₃ ⊙ c
//! ∂/∂M_ps  = m₂_ps a_p g_s
//! ∂/∂e_h  += m₁ ⊙ ((m₂ ⊙ M_r) g)
//! ∂/∂g_pqs = ∂/∂M_ps · w_q
//! ∂/∂w_q   = Σ_ps ∂/∂M_ps · g_pqs
//! ```
//!
//! The core and relation gradients only depend on the per-relation sum of
//! `∂/∂M`, so a batch accumulates one `d_e × d_e` matrix per relation and
//! expands into the core once at the end.

use rand::Rng;

use super::dropout::DropoutMasks;
use super::loss::{bce_loss, sigmoid, smooth_labels};
use super::Group;
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::rng;
use crate::tensor::{contract_second_mode, contract_vectors, dot, Matrix, Tensor3, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerParams {
    /// `n_e × d_e`.
    pub entities: Matrix,
    /// `n_r × d_r`, reciprocal relations included.
    pub relations: Matrix,
    /// `d_e × d_r × d_e`.
    pub core: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerGrads {
    pub entities: Matrix,
    pub relations: Matrix,
    pub core: Tensor3,
}

impl TuckerParams {
    pub fn new(entities: Matrix, relations: Matrix, core: Tensor3) -> Result<Self> {
        let [a, b, c] = core.dims();
        if a != entities.cols() || c != entities.cols() || b != relations.cols() {
            return Err(Error::DimensionMismatch(format!(
                "core {:?} incompatible with d_e = {}, d_r = {}",
                core.dims(),
                entities.cols(),
                relations.cols()
            )));
        }
        if entities.rows() == 0 || relations.rows() == 0 {
            return Err(Error::InvalidArgument("empty embedding matrix".into()));
        }
        if !(entities.is_finite() && relations.is_finite() && core.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { entities, relations, core })
    }

    /// `E, R ~ U(-0.1, 0.1)`, `G ~ U(-1, 1)`.
    pub fn init(n_e: usize, n_r: usize, d_e: usize, d_r: usize, seed: u64) -> Result<Self> {
        if n_e == 0 || n_r == 0 || d_e == 0 || d_r == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let mut r = rng::stream(seed, rng::Purpose::Init, 0, 0);
        let mut uniform = |n: usize, lim: f64| -> Vec<f64> {
            (0..n).map(|_| r.random_range(-lim..lim)).collect()
        };
        let entities = Matrix::from_vec(n_e, d_e, uniform(n_e * d_e, 0.1))?;
        let relations = Matrix::from_vec(n_r, d_r, uniform(n_r * d_r, 0.1))?;
        let core = Tensor3::from_vec([d_e, d_r, d_e], uniform(d_e * d_r * d_e, 1.0))?;
        Self::new(entities, relations, core)
    }

    pub fn n_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.rows()
    }

    pub fn d_e(&self) -> usize {
        self.entities.cols()
    }

    pub fn d_r(&self) -> usize {
        self.relations.cols()
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if e >= self.n_entities() {
            return Err(Error::IndexOutOfRange(format!(
                "entity {e} outside 0..{}",
                self.n_entities()
            )));
        }
        Ok(())
    }

    fn check_relation(&self, r: RelationId) -> Result<()> {
        if r >= self.n_relations() {
            return Err(Error::IndexOutOfRange(format!(
                "relation {r} outside 0..{}",
                self.n_relations()
            )));
        }
        Ok(())
    }

    /// `M_r = G ×₂ w_r`, so that `φ(h, r, t) = e_hᵀ M_r e_t`.
    pub fn relation_matrix(&self, r: RelationId) -> Result<Matrix> {
        self.check_relation(r)?;
        contract_second_mode(&self.core, self.relations.row(r))
    }

    /// Single-triple logit.
    pub fn score(
        &self,
        h: EntityId,
        r: RelationId,
        t: EntityId,
        masks: Option<&DropoutMasks>,
    ) -> Result<f64> {
        self.check_entity(h)?;
        self.check_entity(t)?;
        self.check_relation(r)?;
        match masks {
            None => contract_vectors(
                &self.core,
                self.entities.row(h),
                self.relations.row(r),
                self.entities.row(t),
            ),
            Some(m) => {
                let x = self.combined(h, &self.relation_matrix(r)?, Some(m))?;
                Ok(dot(&x, self.entities.row(t)))
            }
        }
    }

    /// Logits of `(h, r, t)` for every entity `t`.
    pub fn score_all_tails(
        &self,
        h: EntityId,
        r: RelationId,
        masks: Option<&DropoutMasks>,
    ) -> Result<Vector> {
        self.check_entity(h)?;
        let m = self.relation_matrix(r)?;
        let x = self.combined(h, &m, masks)?;
        self.entities.mul_vec(&x)
    }

    /// `x' = m₃ ⊙ ((m₁ ⊙ e_h)ᵀ (m₂ ⊙ M_r))`.
    fn combined(&self, h: EntityId, m_r: &Matrix, masks: Option<&DropoutMasks>) -> Result<Vector> {
        let e_h = self.entities.row(h);
        match masks {
            None => m_r.left_mul_vec(e_h),
            Some(mk) => {
                mk.check(self.d_e())?;
                let a: Vec<f64> = e_h.iter().zip(&mk.input).map(|(e, m)| e * m).collect();
                let masked = masked_matrix(m_r, &mk.relation);
                let x = masked.left_mul_vec(&a)?;
                Ok(x.iter().zip(&mk.combined).map(|(v, m)| v * m).collect())
            }
        }
    }
}

fn masked_matrix(m: &Matrix, mask: &[f64]) -> Matrix {
    let data = m.data().iter().zip(mask).map(|(a, b)| a * b).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("mask shape checked")
}

/// Loss and gradients of one `(h, r)` group against target vector `y`.
pub fn grad_tucker(
    params: &TuckerParams,
    h: EntityId,
    r: RelationId,
    y: &[f64],
    masks: Option<&DropoutMasks>,
) -> Result<(f64, TuckerGrads)> {
    let mut acc = TuckerAccumulator::new(params);
    acc.add(h, r, y, masks)?;
    let (loss, grads) = acc.finish();
    Ok((loss, grads))
}

/// Sums per-group gradients of a batch; [`finish`](Self::finish) returns
/// the batch-mean loss and gradients.
pub struct TuckerAccumulator<'a> {
    params: &'a TuckerParams,
    relation_mats: Vec<Option<Matrix>>,
    relation_grads: Vec<Option<Matrix>>,
    d_entities: Matrix,
    loss: f64,
    groups: usize,
    clamped: usize,
}

impl<'a> TuckerAccumulator<'a> {
    pub fn new(params: &'a TuckerParams) -> Self {
        Self {
            params,
            relation_mats: vec![None; params.n_relations()],
            relation_grads: vec![None; params.n_relations()],
            d_entities: Matrix::zeros(params.n_entities(), params.d_e()),
            loss: 0.0,
            groups: 0,
            clamped: 0,
        }
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn add(
        &mut self,
        h: EntityId,
        r: RelationId,
        y: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> Result<f64> {
        let p = self.params;
        p.check_entity(h)?;
        p.check_relation(r)?;
        let n_e = p.n_entities();
        let d_e = p.d_e();
        if y.len() != n_e {
            return Err(Error::DimensionMismatch(format!("{} labels for {n_e} entities", y.len())));
        }
        if let Some(m) = masks {
            m.check(d_e)?;
        }
        if self.relation_mats[r].is_none() {
            self.relation_mats[r] = Some(p.relation_matrix(r)?);
        }
        let m_r = self.relation_mats[r].as_ref().expect("cached above");
        let e_h = p.entities.row(h);
        let a: Vec<f64> = match masks {
            Some(mk) => e_h.iter().zip(&mk.input).map(|(e, m)| e * m).collect(),
            None => e_h.to_vec(),
        };
        // x = aᵀ (m₂ ⊙ M_r), then the combined-site mask.
        let mut x = vec![0.0; d_e];
        for (pi, &ap) in a.iter().enumerate() {
            if ap == 0.0 {
                continue;
            }
            let mrow = m_r.row(pi);
            match masks {
                Some(mk) => {
                    let drow = &mk.relation[pi * d_e..(pi + 1) * d_e];
                    for ((xv, &m), &d) in x.iter_mut().zip(mrow).zip(drow) {
                        *xv += ap * m * d;
                    }
                }
                None => {
                    for (xv, &m) in x.iter_mut().zip(mrow) {
                        *xv += ap * m;
                    }
                }
            }
        }
        if let Some(mk) = masks {
            for (v, m) in x.iter_mut().zip(&mk.combined) {
                *v *= m;
            }
        }
        let logits = p.entities.mul_vec(&x)?;
        let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let bce = bce_loss(&probs, y)?;
        self.clamped += bce.clamped;
        let delta: Vec<f64> =
            probs.iter().zip(y).map(|(pi, yi)| (pi - yi) / n_e as f64).collect();

        // Tail side and c = Σ_t δ_t e_t.
        let c = p.entities.left_mul_vec(&delta)?;
        for (t, &dt) in delta.iter().enumerate() {
            for (g, &xv) in self.d_entities.row_mut(t).iter_mut().zip(&x) {
                *g += dt * xv;
            }
        }
        let gx: Vec<f64> = match masks {
            Some(mk) => c.iter().zip(&mk.combined).map(|(v, m)| v * m).collect(),
            None => c,
        };
        // One pass over M_r: head-side gradient da = (m₂ ⊙ M_r) gx and the
        // per-relation accumulation ∂M_ps += m₂ a_p gx_s.
        let gm = self.relation_grads[r].get_or_insert_with(|| Matrix::zeros(d_e, d_e));
        let mut da = vec![0.0; d_e];
        for pi in 0..d_e {
            let ap = a[pi];
            let mrow = m_r.row(pi);
            let grow = gm.row_mut(pi);
            let mut acc = 0.0;
            match masks {
                Some(mk) => {
                    let drow = &mk.relation[pi * d_e..(pi + 1) * d_e];
                    if ap == 0.0 {
                        for ((&m, &d), &gs) in mrow.iter().zip(drow).zip(&gx) {
                            acc += m * d * gs;
                        }
                    } else {
                        for (((&m, &d), &gs), g) in mrow.iter().zip(drow).zip(&gx).zip(grow.iter_mut()) {
                            let w = d * gs;
                            acc += m * w;
                            *g += ap * w;
                        }
                    }
                }
                None => {
                    for ((&m, &gs), g) in mrow.iter().zip(&gx).zip(grow.iter_mut()) {
                        acc += m * gs;
                        *g += ap * gs;
                    }
                }
            }
            da[pi] = acc;
        }
        let dh = self.d_entities.row_mut(h);
        match masks {
            Some(mk) => {
                for ((g, &d), &m) in dh.iter_mut().zip(&da).zip(&mk.input) {
                    *g += d * m;
                }
            }
            None => {
                for (g, &d) in dh.iter_mut().zip(&da) {
                    *g += d;
                }
            }
        }
        self.loss += bce.value;
        self.groups += 1;
        Ok(bce.value)
    }

    /// Batch-mean loss and gradients.
    pub fn finish(self) -> (f64, TuckerGrads) {
        let p = self.params;
        let [d_e, d_r, _] = p.core.dims();
        let scale = if self.groups == 0 { 0.0 } else { 1.0 / self.groups as f64 };
        let mut d_entities = self.d_entities;
        d_entities.data_mut().iter_mut().for_each(|v| *v *= scale);
        let mut d_relations = Matrix::zeros(p.n_relations(), d_r);
        let mut d_core = Tensor3::zeros(p.core.dims()).expect("core dims are positive");
        let core = p.core.data();
        let dcore = d_core.data_mut();
        for (r, gm) in self.relation_grads.iter().enumerate() {
            let Some(gm) = gm else { continue };
            let w = p.relations.row(r);
            let dw = d_relations.row_mut(r);
            for pi in 0..d_e {
                let grow = gm.row(pi);
                for q in 0..d_r {
                    let off = (pi * d_r + q) * d_e;
                    let gslice = &core[off..off + d_e];
                    dw[q] += scale * dot(grow, gslice);
                    let wq = scale * w[q];
                    for (d, &g) in dcore[off..off + d_e].iter_mut().zip(grow) {
                        *d += wq * g;
                    }
                }
            }
        }
        let loss = self.loss * scale;
        (loss, TuckerGrads { entities: d_entities, relations: d_relations, core: d_core })
    }
}

/// Accumulates a batch of groups with per-group dropout streams.
pub(crate) fn batch_gradients(
    params: &TuckerParams,
    batch: &[Group],
    opts: &super::BatchOptions<'_>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut acc = TuckerAccumulator::new(params);
    let mut y = vec![0.0; params.n_entities()];
    for (i, g) in batch.iter().enumerate() {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &t in &g.tails {
            y[t] = 1.0;
        }
        smooth_labels(&mut y, opts.label_smoothing);
        let masks = if opts.dropout.is_none() {
            None
        } else {
            let mut r = (opts.rng_for)(i);
            Some(opts.dropout.sample(params.d_e(), &mut r))
        };
        acc.add(g.h, g.r, &y, masks.as_ref())?;
    }
    let (loss, grads) = acc.finish();
    Ok((
        loss,
        vec![
            grads.entities.data().to_vec(),
            grads.relations.data().to_vec(),
            grads.core.data().to_vec(),
        ],
    ))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::models::loss::predict_sigmoid;
    use crate::models::DropoutSpec;
    use crate::rng::{stream, Purpose};

    fn brute_score(p: &TuckerParams, h: usize, r: usize, t: usize) -> f64 {
        let [d0, d1, d2] = p.core.dims();
        let mut s = 0.0;
        for a in 0..d0 {
            for b in 0..d1 {
                for c in 0..d2 {
                    s += p.core.get(a, b, c)
                        * p.entities.get(h, a)
                        * p.relations.get(r, b)
                        * p.entities.get(t, c);
                }
            }
        }
        s
    }

    #[test]
    fn basis_contraction() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let mut g = Tensor3::zeros([2, 1, 2]).unwrap();
        g.set(0, 0, 0, 1.0);
        let p = TuckerParams::new(e, r, g).unwrap();
        assert_eq!(p.score(0, 0, 0, None).unwrap(), 1.0);
        assert_eq!(p.score(0, 0, 1, None).unwrap(), 0.0);
        assert!(matches!(p.score(2, 0, 0, None), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(p.score(0, 1, 0, None), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn zero_core_scores_zero() {
        let mut p = TuckerParams::init(5, 2, 3, 2, 1).unwrap();
        p.core.data_mut().iter_mut().for_each(|v| *v = 0.0);
        assert!(p.score_all_tails(1, 1, None).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = TuckerParams::init(30, 4, 6, 3, 9).unwrap();
        let b = TuckerParams::init(30, 4, 6, 3, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.entities.data().iter().all(|v| v.abs() <= 0.1));
        assert!(a.relations.data().iter().all(|v| v.abs() <= 0.1));
        assert!(a.core.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn init_mean_is_zero() {
        let p = TuckerParams::init(10_000, 1, 10, 1, 4).unwrap();
        let v = p.entities.data();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        // U(-0.1, 0.1) has variance 0.01 / 3.
        let sd = (0.01 / 3.0 / v.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd);
    }

    #[test]
    fn score_matches_brute_force_and_batched() {
        let p = TuckerParams::init(50, 4, 5, 3, 2).unwrap();
        for h in [0, 7, 49] {
            for r in 0..4 {
                let all = p.score_all_tails(h, r, None).unwrap();
                for t in 0..50 {
                    let s = p.score(h, r, t, None).unwrap();
                    assert!((s - brute_score(&p, h, r, t)).abs() < 1e-12);
                    assert!((all[t] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn masked_batched_matches_pointwise() {
        let p = TuckerParams::init(12, 2, 4, 2, 5).unwrap();
        let masks = DropoutSpec::default().sample(4, &mut stream(1, Purpose::Test, 0, 0));
        let all = p.score_all_tails(3, 1, Some(&masks)).unwrap();
        for (t, &v) in all.iter().enumerate() {
            assert!((p.score(3, 1, t, Some(&masks)).unwrap() - v).abs() < 1e-12);
        }
        let ones = DropoutMasks::ones(4);
        let plain = p.score_all_tails(3, 1, None).unwrap();
        let unit = p.score_all_tails(3, 1, Some(&ones)).unwrap();
        for (a, b) in plain.iter().zip(&unit) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_entities_pick_relation_rows() {
        let mut p = TuckerParams::init(3, 1, 3, 2, 8).unwrap();
        p.entities = Matrix::identity(3);
        let m = p.relation_matrix(0).unwrap();
        for h in 0..3 {
            assert_eq!(p.score_all_tails(h, 0, None).unwrap(), m.row(h).to_vec());
        }
    }

    #[test]
    fn relation_matrix_identity_slices() {
        let d = 3;
        let mut g = Tensor3::zeros([d, 2, d]).unwrap();
        for i in 0..d {
            g.set(i, 0, i, 1.0);
            g.set(i, 1, (i + 1) % d, 1.0);
        }
        let p = TuckerParams::new(
            Matrix::identity(d),
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            g,
        )
        .unwrap();
        assert_eq!(p.relation_matrix(0).unwrap(), Matrix::identity(d));
    }

    #[test]
    fn bilinear_form_reproduces_score() {
        let p = TuckerParams::init(20, 3, 6, 4, 3).unwrap();
        for r in 0..3 {
            let m = p.relation_matrix(r).unwrap();
            for (h, t) in [(0, 1), (5, 19), (7, 7)] {
                let me = m.mul_vec(p.entities.row(t)).unwrap();
                let bil = dot(p.entities.row(h), &me);
                assert!((bil - p.score(h, r, t, None).unwrap()).abs() < 1e-12);
            }
        }
    }

    fn loss_of(p: &TuckerParams, h: usize, r: usize, y: &[f64], m: Option<&DropoutMasks>) -> f64 {
        let logits = p.score_all_tails(h, r, m).unwrap();
        bce_loss(&predict_sigmoid(&logits), y).unwrap().value
    }

    fn check_fd(p: &TuckerParams, h: usize, r: usize, y: &[f64], masks: Option<&DropoutMasks>) {
        let (_, g) = grad_tucker(p, h, r, y, masks).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = |which: usize, idx: usize, analytic: f64| {
            let mut plus = p.clone();
            let mut minus = p.clone();
            match which {
                0 => {
                    plus.entities.data_mut()[idx] += step;
                    minus.entities.data_mut()[idx] -= step;
                }
                1 => {
                    plus.relations.data_mut()[idx] += step;
                    minus.relations.data_mut()[idx] -= step;
                }
                _ => {
                    plus.core.data_mut()[idx] += step;
                    minus.core.data_mut()[idx] -= step;
                }
            }
            let fd = (loss_of(&plus, h, r, y, masks) - loss_of(&minus, h, r, y, masks)) / (2.0 * step);
            let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-7);
            worst = worst.max(err);
        };
        for (i, &a) in g.entities.data().iter().enumerate() {
            probe(0, i, a);
        }
        for (i, &a) in g.relations.data().iter().enumerate() {
            probe(1, i, a);
        }
        for (i, &a) in g.core.data().iter().enumerate() {
            probe(2, i, a);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = TuckerParams::init(10, 4, 4, 3, 6).unwrap();
        let mut y = vec![0.0; 10];
        y[2] = 1.0;
        y[7] = 1.0;
        check_fd(&p, 1, 2, &y, None);
        let masks = DropoutSpec::default().sample(4, &mut stream(3, Purpose::Test, 0, 0));
        check_fd(&p, 4, 0, &y, Some(&masks));
    }

    #[test]
    fn zero_core_gradient_is_outer_product_sum() {
        let mut p = TuckerParams::init(6, 2, 3, 2, 1).unwrap();
        p.core.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let y = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let (loss, g) = grad_tucker(&p, 0, 1, &y, None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // All logits are zero, so δ_t = (0.5 - y_t) / n_e and
        // ∂L/∂G = Σ_t δ_t e_h ∘ w_r ∘ e_t.
        let mut expected = Tensor3::zeros([3, 2, 3]).unwrap();
        for t in 0..6 {
            let dt = (0.5 - y[t]) / 6.0;
            let op = crate::tensor::outer_product3(
                p.entities.row(0),
                p.relations.row(1),
                p.entities.row(t),
            )
            .unwrap();
            for (e, o) in expected.data_mut().iter_mut().zip(op.data()) {
                *e += dt * o;
            }
        }
        for (a, b) in g.core.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        // With a zero core nothing flows into the embeddings.
        assert!(g.entities.data().iter().all(|&v| v == 0.0));
        assert!(g.relations.data().iter().all(|&v| v == 0.0));
    }
}
