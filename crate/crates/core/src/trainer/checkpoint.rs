//! Binary checkpoint: magic, format version, a JSON header (config echo,
//! parameter names and shapes, counters, RNG position), then the student,
//! teacher and both Adam moment buffers as little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::AdamW;
use super::step::TrainState;
use crate::error::{Error, Result};
use crate::flownet::{ParamSet, ParamSpec};
use crate::meanteacher::TeacherState;

const MAGIC: &[u8; 8] = b"FLOWDACK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// Decimal, since JSON numbers cannot hold a u128.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    step: u64,
    config: TrainConfig,
    params: Vec<ParamSpec>,
    teacher_steps: u64,
    adam_t: u64,
    rng: RngState,
}

pub fn encode_checkpoint(state: &TrainState, cfg: &TrainConfig) -> Vec<u8> {
    let header = Header {
        step: state.step,
        config: cfg.clone(),
        params: state.student.specs().to_vec(),
        teacher_steps: state.teacher.step_count,
        adam_t: state.optimizer.t,
        rng: RngState {
            seed: hex::encode(state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let n = state.student.len();
    let mut out = Vec::with_capacity(8 + 4 + 8 + json.len() + 4 * 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for blob in [
        state.student.values(),
        state.teacher.phi.values(),
        &state.optimizer.m,
        &state.optimizer.v,
    ] {
        blob.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TrainState, TrainConfig)> {
    let err = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(err("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..).ok_or_else(|| err("truncated"))?;
    let json = body.get(..hlen).ok_or_else(|| err("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let n: usize = header.params.iter().map(ParamSpec::len).sum();
    let data = &body[hlen..];
    if data.len() != 4 * 8 * n {
        return Err(Error::Checkpoint(format!(
            "expected {} data bytes, found {}",
            32 * n,
            data.len()
        )));
    }
    let mut blobs = data.chunks_exact(8 * n.max(1)).map(|c| {
        c.chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect::<Vec<_>>()
    });
    let mut next = || blobs.next().unwrap_or_default();
    let student = ParamSet::from_parts(header.params.clone(), next())?;
    let teacher = ParamSet::from_parts(header.params, next())?;
    let (m, v) = (next(), next());
    let mut seed = [0u8; 32];
    hex::decode_to_slice(&header.rng.seed, &mut seed).map_err(|_| err("bad rng seed"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(header.rng.stream);
    rng.set_word_pos(header.rng.word_pos.parse().map_err(|_| err("bad rng position"))?);
    header.config.validate()?;
    let state = TrainState {
        step: header.step,
        student,
        teacher: TeacherState {
            phi: teacher,
            step_count: header.teacher_steps,
        },
        optimizer: AdamW { m, v, t: header.adam_t },
        rng,
    };
    Ok((state, header.config))
}

/// Writes through a temporary file and a rename, so a crash never leaves a
/// half-written checkpoint behind.
pub fn save_checkpoint(path: &Path, state: &TrainState, cfg: &TrainConfig) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&encode_checkpoint(state, cfg))
        .map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainState, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flownet::{FlowNet, FlowNetConfig};
    use rand::Rng;

    #[test]
    fn roundtrip_restores_state_and_rng_position() {
        let net = FlowNet::new(FlowNetConfig::default()).unwrap();
        let cfg = TrainConfig {
            seed: 9,
            ..Default::default()
        };
        let mut state = TrainState::new(&net, &cfg);
        state.step = 17;
        state.optimizer.t = 17;
        state.optimizer.m[3] = 0.25;
        state.teacher.phi.values_mut()[0] = -1.5;
        let _: u64 = state.rng.random();
        let bytes = encode_checkpoint(&state, &cfg);
        let (mut back, cfg2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(back, state);
        assert_eq!(back.rng.random::<u64>(), state.rng.random::<u64>());

        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let net = FlowNet::new(FlowNetConfig::default()).unwrap();
        let cfg = TrainConfig::default();
        let state = TrainState::new(&net, &cfg);
        let path = dir.path().join("last.ckpt");
        save_checkpoint(&path, &state, &cfg).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().0, state);
        assert!(!dir.path().join("last.ckpt.tmp").exists());
    }
}
