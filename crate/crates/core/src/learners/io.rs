//! Model files.
//!
//! Little-endian layout: magic "IEMD", version u8, learner kind u8,
//! direction u8, model tag u8 (0 network, 1 regression, 2 random, 3 no-trade),
//! end_x i32, bps u32, seed u64, input size u64, epochs u32, loss f64,
//! training rows u64, positive rate f64, then the model payload:
//!
//! * network: layer count + 1 as u32, each width as u64, parameter count
//!   u64, parameters f64, standardizer
//! * regression: column count u64, weights f64, bias f64, standardizer
//! * random: p f64
//!
//! A standardizer is its column count u64 followed by means and scales.

use std::path::Path;

use super::{LearnerKind, LogisticModel, Model, Network, NetworkSpec, Standardizer, TrainedClassifier, TrainingMeta};
use crate::dataset::{Direction, Hyperparams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IEMD";
const VERSION: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn standardizer(&mut self, s: &Standardizer) {
        self.u64(s.cols() as u64);
        s.mean.iter().chain(&s.scale).for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.bytes.len() {
            return Err(corrupt("length field exceeds file size"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64_n(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        self.f64_n(n)
    }
    fn standardizer(&mut self) -> Result<Standardizer> {
        let n = self.len()?;
        Ok(Standardizer {
            mean: self.f64_n(n)?,
            scale: self.f64_n(n)?,
        })
    }
}

fn corrupt(reason: &str) -> Error {
    Error::Corrupt {
        path: "model".into(),
        reason: reason.to_string(),
    }
}

pub fn encode_model(model: &TrainedClassifier) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u8(VERSION);
    w.u8(model.kind.tag());
    w.u8(model.direction.tag());
    w.u8(match model.model {
        Model::Neural { .. } => 0,
        Model::Logistic { .. } => 1,
        Model::Random { .. } => 2,
        Model::NoTrade => 3,
    });
    w.i32(model.hyperparams.end_x);
    w.u32(model.hyperparams.bps);
    w.u64(model.seed);
    w.u64(model.input_size as u64);
    w.u32(model.meta.epochs);
    w.f64(model.meta.loss);
    w.u64(model.meta.train_rows);
    w.f64(model.meta.positive_rate);
    match &model.model {
        Model::Neural { network, standardizer } => {
            let sizes = network.spec.sizes();
            w.u32(sizes.len() as u32);
            sizes.iter().for_each(|&s| w.u64(s as u64));
            w.f64s(&network.params);
            w.standardizer(standardizer);
        }
        Model::Logistic { model, standardizer } => {
            w.f64s(&model.weights);
            w.f64(model.bias);
            w.standardizer(standardizer);
        }
        Model::Random { p } => w.f64(*p),
        Model::NoTrade => {}
    }
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedClassifier> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.u8()? != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let kind = LearnerKind::from_tag(r.u8()?).ok_or_else(|| corrupt("bad learner kind"))?;
    let direction = Direction::from_tag(r.u8()?).ok_or_else(|| corrupt("bad direction"))?;
    let tag = r.u8()?;
    let hyperparams = Hyperparams {
        end_x: r.i32()?,
        bps: r.u32()?,
    };
    let seed = r.u64()?;
    let input_size = r.u64()? as usize;
    let meta = TrainingMeta {
        epochs: r.u32()?,
        loss: r.f64()?,
        train_rows: r.u64()?,
        positive_rate: r.f64()?,
    };
    let model = match tag {
        0 => {
            let n = r.u32()? as usize;
            if n > 64 {
                return Err(corrupt("too many layers"));
            }
            let sizes = (0..n).map(|_| r.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
            let spec = NetworkSpec::from_sizes(sizes).map_err(|_| corrupt("bad layer sizes"))?;
            let params = r.f64s()?;
            if params.len() != spec.param_count() {
                return Err(corrupt("parameter count does not match layer sizes"));
            }
            Model::Neural {
                network: Network { spec, params },
                standardizer: r.standardizer()?,
            }
        }
        1 => Model::Logistic {
            model: LogisticModel {
                weights: r.f64s()?,
                bias: r.f64()?,
            },
            standardizer: r.standardizer()?,
        },
        2 => Model::Random { p: r.f64()? },
        3 => Model::NoTrade,
        _ => return Err(corrupt("bad model tag")),
    };
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(TrainedClassifier {
        kind,
        direction,
        hyperparams,
        seed,
        input_size,
        meta,
        model,
    })
}

pub fn save_model(path: &Path, model: &TrainedClassifier) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedClassifier> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| match e {
        Error::Corrupt { reason, .. } => Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}
