//! JSON archive for recursion states and Tucker decompositions.
//!
//! `{"format": "tensor-krylov-archive", "version": 1, "payload": {...}}`,
//! where the payload is tagged by `"type"`: `"krylov-state"` or `"tucker"`.
//! Floats are written in shortest round-trip form, so save then load
//! reproduces every value exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::counter::OpCounter;
use crate::error::{Error, Result};
use crate::krylov::KrylovState;
use crate::tucker::TuckerDecomp;

pub const FORMAT: &str = "tensor-krylov-archive";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuckerMeta {
    pub method: String,
    pub ranks: [usize; 3],
    pub error: f64,
    pub counter: OpCounter,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    KrylovState(KrylovState),
    Tucker { decomp: TuckerDecomp, meta: TuckerMeta },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    payload: Payload,
}

pub fn to_writer<W: Write>(mut w: W, payload: &Payload) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        format: &'a str,
        version: u32,
        payload: &'a Payload,
    }
    serde_json::to_writer(
        &mut w,
        &Out {
            format: FORMAT,
            version: VERSION,
            payload,
        },
    )?;
    w.flush()?;
    Ok(())
}

pub fn from_reader<R: Read>(r: R) -> Result<Payload> {
    let env: Envelope = serde_json::from_reader(r)?;
    if env.format != FORMAT {
        return Err(Error::InvalidArgument(format!(
            "not a {FORMAT} file (format '{}')",
            env.format
        )));
    }
    if env.version != VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported archive version {} (expected {VERSION})",
            env.version
        )));
    }
    Ok(env.payload)
}

pub fn save(path: impl AsRef<Path>, payload: &Payload) -> Result<()> {
    to_writer(BufWriter::new(File::create(path)?), payload)
}

pub fn load(path: impl AsRef<Path>) -> Result<Payload> {
    from_reader(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{minimal_recursion, RecursionConfig, StartVectors};
    use crate::linalg::{gaussian_vector, seeded};
    use crate::tensor::{DenseTensor3, Dims};

    #[test]
    fn state_round_trip_is_exact() {
        let mut rng = seeded(4);
        let dims = Dims::new(5, 6, 7);
        let a = DenseTensor3::new(dims, gaussian_vector(dims.len(), &mut rng)).unwrap();
        let start = StartVectors::random(dims, false, &mut rng);
        let s = minimal_recursion(&a, &start, 3, &RecursionConfig::default()).unwrap();
        let mut buf = Vec::new();
        to_writer(&mut buf, &Payload::KrylovState(s.clone())).unwrap();
        let Payload::KrylovState(back) = from_reader(buf.as_slice()).unwrap() else {
            panic!("wrong payload");
        };
        assert_eq!(back.factors(), s.factors());
        assert_eq!(back.h, s.h);
        assert_eq!(back.counter, s.counter);
        assert!(from_reader(&b"{\"format\":\"x\",\"version\":1,\"payload\":{}}"[..]).is_err());
    }
}
