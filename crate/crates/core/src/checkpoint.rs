//! Binary model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "CMRFCKPT"            8 bytes
//! version u32                   (1)
//! kind    u8                    0 = consmrf, 1 = cd, 2 = dmf
//! shape   u8                    0 = identity, 1 = diagonal, 2 = full
//! k, R, |E|, rounds             u64 each
//! lambda, eta, rho, sigma_init, epsilon, alpha    f64 each
//! seed, max_rounds, inner_budget (0 = |D_r|)      u64 each
//! body (f64 values, row-major):
//!   consmrf: Z, then for each relation A_r, W_r, V_r
//!   cd:      A, then W_r for each relation
//!   dmf:     for each target t: A_t, then W_{t,r} for each relation r
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::baselines::{DmfModel, SharedModel};
use crate::consensus::TrainedModel;
use crate::curve::LearningCurve;
use crate::error::{Error, Result};
use crate::factors::{ConsensusState, Hyperparams, Matrix, RelationFactors, RelationParams, RelationWeightShape};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"CMRFCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ConsMrf,
    Cd,
    Dmf,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            Self::ConsMrf => 0,
            Self::Cd => 1,
            Self::Dmf => 2,
        }
    }
}

/// Any model the crate can train.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<F> {
    ConsMrf(TrainedModel<F>),
    Cd(SharedModel<F>),
    Dmf(DmfModel<F>),
}

impl<F: Scalar> AnyModel<F> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::ConsMrf(_) => ModelKind::ConsMrf,
            Self::Cd(_) => ModelKind::Cd,
            Self::Dmf(_) => ModelKind::Dmf,
        }
    }

    pub fn rounds(&self) -> usize {
        match self {
            Self::ConsMrf(m) => m.rounds,
            Self::Cd(m) => m.rounds,
            Self::Dmf(m) => m.rounds,
        }
    }

    pub fn curve(&self) -> &LearningCurve {
        match self {
            Self::ConsMrf(m) => &m.curve,
            Self::Cd(m) => &m.curve,
            Self::Dmf(m) => &m.curve,
        }
    }

    pub fn timings(&self) -> &[crate::curve::TimingRow] {
        match self {
            Self::ConsMrf(m) => &m.timings,
            Self::Cd(m) => &m.timings,
            Self::Dmf(m) => &m.timings,
        }
    }
}

impl<F: Scalar> crate::evaluator::Scorer<F> for AnyModel<F> {
    fn n_relations(&self) -> usize {
        match self {
            Self::ConsMrf(m) => m.n_relations(),
            Self::Cd(m) => m.n_relations(),
            Self::Dmf(m) => m.n_relations(),
        }
    }

    fn score_candidates(&self, r: crate::RelationId, s: crate::EntityId, objects: &[crate::EntityId]) -> Vec<F> {
        match self {
            Self::ConsMrf(m) => m.score_candidates(r, s, objects),
            Self::Cd(m) => m.score_candidates(r, s, objects),
            Self::Dmf(m) => m.score_candidates(r, s, objects),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub hp: Hyperparams,
    pub shape: RelationWeightShape,
    pub n_entities: usize,
    pub n_relations: usize,
    pub model: AnyModel<F>,
}

struct Out<W>(W);

impl<W: Write> Out<W> {
    fn u8(&mut self, x: u8) -> std::io::Result<()> {
        self.0.write_all(&[x])
    }
    fn u32(&mut self, x: u32) -> std::io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn u64(&mut self, x: u64) -> std::io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn f64(&mut self, x: f64) -> std::io::Result<()> {
        self.0.write_all(&x.to_le_bytes())
    }
    fn values<F: Scalar>(&mut self, xs: &[F]) -> std::io::Result<()> {
        xs.iter().try_for_each(|x| self.f64(x.as_f64()))
    }
}

struct In<R>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|_| Error::Checkpoint("truncated file".into()))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn values<F: Scalar>(&mut self, n: usize) -> Result<Vec<F>> {
        (0..n).map(|_| self.f64().map(F::lit)).collect()
    }
    fn matrix<F: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<F>> {
        Ok(Matrix::from_vec(rows, cols, self.values(rows * cols)?))
    }
    fn relation<F: Scalar>(&mut self, shape: RelationWeightShape, k: usize) -> Result<RelationFactors<F>> {
        Ok(RelationFactors::new(shape, k, self.values(shape.param_count(k))?))
    }
}

pub fn write_checkpoint<F: Scalar, W: Write>(ck: &Checkpoint<F>, out: W) -> std::io::Result<()> {
    let mut o = Out(out);
    let hp = &ck.hp;
    o.0.write_all(MAGIC)?;
    o.u32(VERSION)?;
    o.u8(ck.model.kind().tag())?;
    o.u8(ck.shape.tag())?;
    for x in [hp.k, ck.n_relations, ck.n_entities, ck.model.rounds()] {
        o.u64(x as u64)?;
    }
    for x in [hp.lambda, hp.eta, hp.rho, hp.sigma_init, hp.epsilon, hp.alpha] {
        o.f64(x)?;
    }
    o.u64(hp.seed)?;
    o.u64(hp.max_rounds as u64)?;
    o.u64(hp.inner_budget.unwrap_or(0) as u64)?;
    match &ck.model {
        AnyModel::ConsMrf(m) => {
            o.values(m.consensus.z.as_slice())?;
            for (p, v) in m.params.iter().zip(&m.consensus.v) {
                o.values(p.a.as_slice())?;
                o.values(p.w.params())?;
                o.values(v.as_slice())?;
            }
        }
        AnyModel::Cd(m) => {
            o.values(m.a.as_slice())?;
            for w in &m.w {
                o.values(w.params())?;
            }
        }
        AnyModel::Dmf(m) => {
            for (a, ws) in m.a.iter().zip(&m.w) {
                o.values(a.as_slice())?;
                for w in ws {
                    o.values(w.params())?;
                }
            }
        }
    }
    o.0.flush()
}

/// Reads a checkpoint. Learning curves and timings are not stored and come back empty.
pub fn read_checkpoint<F: Scalar, R: Read>(input: R) -> Result<Checkpoint<F>> {
    let mut i = In(input);
    if &i.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = i.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = i.u8()?;
    let shape = RelationWeightShape::from_tag(i.u8()?).ok_or_else(|| Error::Checkpoint("bad shape tag".into()))?;
    let (k, n_relations, n_entities, rounds) = (i.usize()?, i.usize()?, i.usize()?, i.usize()?);
    let mut hp = Hyperparams {
        k,
        ..Hyperparams::default()
    };
    hp.lambda = i.f64()?;
    hp.eta = i.f64()?;
    hp.rho = i.f64()?;
    hp.sigma_init = i.f64()?;
    hp.epsilon = i.f64()?;
    hp.alpha = i.f64()?;
    hp.seed = i.u64()?;
    hp.max_rounds = i.usize()?;
    hp.inner_budget = Some(i.usize()?).filter(|&b| b > 0);

    let model = match kind {
        0 => {
            let z = i.matrix(n_entities, k)?;
            let mut params = Vec::with_capacity(n_relations);
            let mut v = Vec::with_capacity(n_relations);
            for _ in 0..n_relations {
                let a = i.matrix(n_entities, k)?;
                let w = i.relation(shape, k)?;
                params.push(RelationParams::new(a, w));
                v.push(i.matrix(n_entities, k)?);
            }
            AnyModel::ConsMrf(TrainedModel {
                params,
                consensus: ConsensusState { z, v },
                rounds,
                converged: false,
                curve: LearningCurve::default(),
                timings: Vec::new(),
            })
        }
        1 => {
            let a = i.matrix(n_entities, k)?;
            let w = (0..n_relations).map(|_| i.relation(shape, k)).collect::<Result<_>>()?;
            AnyModel::Cd(SharedModel {
                a,
                w,
                rounds,
                converged: false,
                curve: LearningCurve::default(),
                timings: Vec::new(),
            })
        }
        2 => {
            let mut a = Vec::with_capacity(n_relations);
            let mut w = Vec::with_capacity(n_relations);
            for _ in 0..n_relations {
                a.push(i.matrix(n_entities, k)?);
                w.push((0..n_relations).map(|_| i.relation(shape, k)).collect::<Result<Vec<_>>>()?);
            }
            AnyModel::Dmf(DmfModel {
                a,
                w,
                alpha: hp.alpha,
                rounds,
                converged: false,
                curve: LearningCurve::default(),
                timings: Vec::new(),
            })
        }
        t => return Err(Error::Checkpoint(format!("unknown model kind {t}"))),
    };
    let mut rest = [0u8; 1];
    if i.0.read(&mut rest).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint {
        hp,
        shape,
        n_entities,
        n_relations,
        model,
    })
}

pub fn save_checkpoint<F: Scalar>(ck: &Checkpoint<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ck, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
