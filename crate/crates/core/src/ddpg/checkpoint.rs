//! Binary checkpoint of [`AgentNets`], little-endian throughout:
//!
//! ```text
//! magic           8 bytes  "EDGEDDPG"
//! version         u32      1
//! scalar_bytes    u32      4 (f32) or 8 (f64)
//! net_count       u32      4: actor, critic, target actor, target critic
//! per net:
//!   layer_count   u32
//!   per layer:
//!     inputs      u32
//!     outputs     u32
//!     activation  u8       0 identity, 1 tanh
//!     weights     outputs*inputs scalars, row-major
//!     bias        outputs scalars
//! ```
//!
//! Trailing bytes are rejected.

use thiserror::Error;

use super::agent::AgentNets;
use super::mlp::{Activation, Layer, Mlp};
use crate::Scalar;

pub const MAGIC: &[u8; 8] = b"EDGEDDPG";
pub const VERSION: u32 = 1;
const NET_COUNT: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds {found}-byte scalars, expected {expected}")]
    ScalarWidth { expected: u32, found: u32 },
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("malformed: {0}")]
    Malformed(String),
}

pub fn encode<T: Scalar>(nets: &AgentNets<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
    out.extend_from_slice(&NET_COUNT.to_le_bytes());
    for net in [&nets.actor, &nets.critic, &nets.target_actor, &nets.target_critic] {
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for layer in net.layers() {
            out.extend_from_slice(&(layer.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(layer.outputs as u32).to_le_bytes());
            out.push(layer.activation.code());
            for &v in layer.weights.iter().chain(&layer.bias) {
                v.write_le(&mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn scalars<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>, CheckpointError> {
        let bytes = self.take(count.checked_mul(T::BYTES).ok_or(CheckpointError::Truncated(self.pos))?)?;
        Ok(bytes.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<AgentNets<T>, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let width = r.u32()?;
    if width != T::BYTES as u32 {
        return Err(CheckpointError::ScalarWidth { expected: T::BYTES as u32, found: width });
    }
    let count = r.u32()?;
    if count != NET_COUNT {
        return Err(CheckpointError::Malformed(format!("{count} networks, expected {NET_COUNT}")));
    }
    let mut nets = Vec::with_capacity(4);
    for _ in 0..NET_COUNT {
        let layer_count = r.u32()? as usize;
        let mut layers = Vec::new();
        for _ in 0..layer_count {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            let code = r.take(1)?[0];
            let activation =
                Activation::from_code(code).ok_or_else(|| CheckpointError::Malformed(format!("activation code {code}")))?;
            let weights = r.scalars(inputs.checked_mul(outputs).ok_or(CheckpointError::Truncated(r.pos))?)?;
            let bias = r.scalars(outputs)?;
            layers.push(Layer { inputs, outputs, weights, bias, activation });
        }
        nets.push(Mlp::from_layers(layers).map_err(|e| CheckpointError::Malformed(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    let mut it = nets.into_iter();
    let (a, c, ta, tc) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    AgentNets::from_parts(a, c, ta, tc).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in any::<u64>(), state in 1usize..6, action in 1usize..4, hidden in proptest::collection::vec(1usize..9, 1..3)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut nets = AgentNets::<f64>::new(state, action, &hidden, &mut rng);
            nets.target_actor.params_mut().for_each(|p| *p *= 0.5);
            let back = decode::<f64>(&encode(&nets)).unwrap();
            prop_assert_eq!(&back, &nets);
            let small = AgentNets::<f32>::new(state, action, &hidden, &mut rng);
            prop_assert_eq!(decode::<f32>(&encode(&small)).unwrap(), small);
        }
    }

    fn sample() -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        encode(&AgentNets::<f64>::new(4, 2, &[3], &mut rng))
    }

    #[test]
    fn header_layout() {
        let b = sample();
        assert_eq!(&b[..8], b"EDGEDDPG");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &8u32.to_le_bytes());
        assert_eq!(&b[16..20], &4u32.to_le_bytes());
        // actor: 2 layers, first is 4 -> 3 tanh
        assert_eq!(&b[20..24], &2u32.to_le_bytes());
        assert_eq!(&b[24..28], &4u32.to_le_bytes());
        assert_eq!(&b[28..32], &3u32.to_le_bytes());
        assert_eq!(b[32], 1);
    }

    #[test]
    fn rejects_corruption() {
        let b = sample();
        assert_eq!(decode::<f64>(&b[..5]), Err(CheckpointError::BadMagic));
        assert_eq!(decode::<f32>(&b), Err(CheckpointError::ScalarWidth { expected: 4, found: 8 }));
        assert!(matches!(decode::<f64>(&b[..b.len() - 1]), Err(CheckpointError::Truncated(_))));
        let mut extra = b.clone();
        extra.push(0);
        assert_eq!(decode::<f64>(&extra), Err(CheckpointError::Trailing(1)));
        let mut v2 = b.clone();
        v2[8] = 2;
        assert_eq!(decode::<f64>(&v2), Err(CheckpointError::Version(2)));
        let mut act = b;
        act[32] = 9;
        assert!(matches!(decode::<f64>(&act), Err(CheckpointError::Malformed(_))));
    }
}
