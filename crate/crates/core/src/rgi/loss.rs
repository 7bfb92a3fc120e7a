use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Parameter, Tape, Tensor, Var};

/// Weights of the reconstruction, variance and covariance terms, shared by
/// both directions of the symmetrized loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rec: f64,
    pub var: f64,
    pub cov: f64,
}

impl LossWeights {
    pub const PPI: LossWeights = LossWeights { rec: 25.0, var: 25.0, cov: 20.0 };
    pub const REDDIT: LossWeights = LossWeights { rec: 50.0, var: 25.0, cov: 10.0 };
    pub const OGBN_PRODUCTS: LossWeights = LossWeights { rec: 25.0, var: 10.0, cov: 1.0 };

    pub fn new(rec: f64, var: f64, cov: f64) -> Self {
        LossWeights { rec, var, cov }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rec, self.var, self.cov];
        if all.iter().any(|w| w.is_nan() || *w < 0.0) || all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative with at least one positive: {:?}",
                self
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::PPI
    }
}

/// Values of the six loss components and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RgiLossTerms {
    pub rec_u: f64,
    pub rec_v: f64,
    pub var_u: f64,
    pub var_v: f64,
    pub cov_u: f64,
    pub cov_v: f64,
    pub total: f64,
}

impl RgiLossTerms {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.rec * (self.rec_u + self.rec_v) + w.var * (self.var_u + self.var_v) + w.cov * (self.cov_u + self.cov_v)
    }

    pub(crate) fn as_array(&self) -> [f64; 7] {
        [self.rec_u, self.rec_v, self.var_u, self.var_v, self.cov_u, self.cov_v, self.total]
    }

    pub(crate) fn from_array(a: [f64; 7]) -> Self {
        RgiLossTerms {
            rec_u: a[0],
            rec_v: a[1],
            var_u: a[2],
            var_v: a[3],
            cov_u: a[4],
            cov_v: a[5],
            total: a[6],
        }
    }
}

/// Maps one view onto the other inside the reconstruction terms.
pub trait Reconstructor {
    fn reconstruct(&self, tape: &mut Tape, x: Var) -> Result<Var>;
}

/// Two-layer perceptron `D → D → D` with ELU in between. One pair per
/// trained module; discarded after training.
#[derive(Debug, Clone)]
pub struct ReconstructionHead {
    w1: Parameter,
    b1: Parameter,
    w2: Parameter,
    b2: Parameter,
}

impl ReconstructionHead {
    pub fn new<R: Rng + ?Sized>(prefix: &str, width: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (2 * width) as f64).sqrt();
        let mut dense = |name: &str| {
            let v = (0..width * width).map(|_| rng.random_range(-limit..=limit)).collect();
            Parameter::new(
                format!("{}.{}", prefix, name),
                Tensor::matrix(width, width, v).expect("square"),
            )
        };
        let w1 = dense("fc1.weight");
        let w2 = dense("fc2.weight");
        ReconstructionHead {
            w1,
            b1: Parameter::new(format!("{}.fc1.bias", prefix), Tensor::zeros(vec![width])),
            w2,
            b2: Parameter::new(format!("{}.fc2.bias", prefix), Tensor::zeros(vec![width])),
        }
    }

    pub fn width(&self) -> usize {
        self.w1.tensor().rows()
    }

    /// `fc1.weight`, `fc1.bias`, `fc2.weight`, `fc2.bias`.
    pub fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

impl Reconstructor for ReconstructionHead {
    fn reconstruct(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w1 = tape.param(&self.w1);
        let b1 = tape.param(&self.b1);
        let w2 = tape.param(&self.w2);
        let b2 = tape.param(&self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row_vector(h, b1)?;
        let h = tape.elu(h);
        let h = tape.matmul(h, w2)?;
        tape.add_row_vector(h, b2)
    }
}

/// `(1/D) Σₙ (1 − Cₙₙ)²`
pub fn variance_loss(tape: &mut Tape, cov: Var) -> Result<Var> {
    let d = tape.diag(cov)?;
    let gap = tape.add_scalar(d, -1.0);
    let sq = tape.square(gap);
    tape.mean(sq)
}

/// `(1/D) Σₙ Σ_{m≠n} Cₙₘ²`
pub fn covariance_loss(tape: &mut Tape, cov: Var) -> Result<Var> {
    let c = tape.value(cov);
    if !c.is_square() {
        return Err(Error::dim(format!("covariance loss of non-square {:?}", c.shape())));
    }
    let d = c.rows();
    let mut mask = Tensor::zeros(vec![d, d]);
    mask.values_mut().iter_mut().for_each(|v| *v = 1.0);
    for i in 0..d {
        mask.values_mut()[i * d + i] = 0.0;
    }
    let mask = tape.constant(mask);
    let off = tape.mul(cov, mask)?;
    let sq = tape.square(off);
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / d as f64))
}

/// Differentiable loss handle plus the values of its components.
#[derive(Debug, Clone, Copy)]
pub struct RgiLoss {
    pub total: Var,
    pub terms: RgiLossTerms,
}

/// Symmetrized objective between local views `u` and propagated views `v`
/// (same shape, one row per target node):
///
/// `λ₁(‖U − h_φ(V)‖² + ‖V − h_ψ(U)‖²)/B + λ₂(var(C_U) + var(C_V)) + λ₃(cov(C_U) + cov(C_V))`
pub fn rgi_loss(
    tape: &mut Tape,
    u: Var,
    v: Var,
    h_phi: &dyn Reconstructor,
    h_psi: &dyn Reconstructor,
    w: &LossWeights,
) -> Result<RgiLoss> {
    let (tu, tv) = (tape.value(u), tape.value(v));
    if tu.shape() != tv.shape() {
        return Err(Error::dim(format!(
            "local view {:?} vs propagated view {:?}",
            tu.shape(),
            tv.shape()
        )));
    }
    if tu.rows() < 2 {
        return Err(Error::Degenerate(
            "the loss needs at least two rows for a covariance".into(),
        ));
    }
    let u_hat = h_phi.reconstruct(tape, v)?;
    let rec_u = tape.mse_rows(u, u_hat)?;
    let v_hat = h_psi.reconstruct(tape, u)?;
    let rec_v = tape.mse_rows(v, v_hat)?;
    let cu = tape.covariance(u)?;
    let cv = tape.covariance(v)?;
    let var_u = variance_loss(tape, cu)?;
    let var_v = variance_loss(tape, cv)?;
    let cov_u = covariance_loss(tape, cu)?;
    let cov_v = covariance_loss(tape, cv)?;

    let rec = tape.add(rec_u, rec_v)?;
    let rec = tape.scale(rec, w.rec);
    let var = tape.add(var_u, var_v)?;
    let var = tape.scale(var, w.var);
    let cov = tape.add(cov_u, cov_v)?;
    let cov = tape.scale(cov, w.cov);
    let total = tape.add(rec, var)?;
    let total = tape.add(total, cov)?;

    let item = |tape: &Tape, x: Var| tape.value(x).values()[0];
    let terms = RgiLossTerms {
        rec_u: item(tape, rec_u),
        rec_v: item(tape, rec_v),
        var_u: item(tape, var_u),
        var_v: item(tape, var_v),
        cov_u: item(tape, cov_u),
        cov_v: item(tape, cov_v),
        total: item(tape, total),
    };
    Ok(RgiLoss { total, terms })
}
