use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bits::{BitState, STATE_BITS};
use crate::error::{Error, Result};

use super::{TraceMeta, TraceSet};

pub const TRACE_MAGIC: [u8; 4] = *b"PUFT";
pub const TRACE_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n_traces: usize,
    n_samples: usize,
    meta: TraceMeta,
    challenges: Vec<String>,
}

/// Writes the binary trace matrix to `bin` and the JSON sidecar to `sidecar`.
pub fn write_traces<W: Write, S: Write>(set: &TraceSet, mut bin: W, sidecar: S) -> Result<()> {
    let n_traces = u32::try_from(set.n_traces())
        .map_err(|_| Error::Parse("too many traces for the file format".into()))?;
    let n_samples = u32::try_from(set.n_samples())
        .map_err(|_| Error::Parse("too many samples for the file format".into()))?;
    bin.write_all(&TRACE_MAGIC)?;
    bin.write_all(&TRACE_VERSION.to_le_bytes())?;
    bin.write_all(&n_traces.to_le_bytes())?;
    bin.write_all(&n_samples.to_le_bytes())?;
    let mut buf = Vec::with_capacity(set.data().len() * 4);
    for v in set.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    bin.write_all(&buf)?;
    bin.flush()?;

    serde_json::to_writer_pretty(
        sidecar,
        &Sidecar {
            n_traces: set.n_traces(),
            n_samples: set.n_samples(),
            meta: set.meta.clone(),
            challenges: set.challenges.iter().map(BitState::to_hex).collect(),
        },
    )?;
    Ok(())
}

pub fn read_traces<R: Read, S: Read>(mut bin: R, sidecar: S) -> Result<TraceSet> {
    let mut header = [0u8; 14];
    bin.read_exact(&mut header)?;
    if header[..4] != TRACE_MAGIC {
        return Err(Error::Parse("not a trace file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TRACE_VERSION {
        return Err(Error::Parse(format!("unsupported trace file version {version}")));
    }
    let n_traces = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let n_samples = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    let mut raw = Vec::new();
    bin.read_to_end(&mut raw)?;
    if raw.len() != n_traces * n_samples * 4 {
        return Err(Error::Parse(format!(
            "expected {} bytes of samples, found {}",
            n_traces * n_samples * 4,
            raw.len()
        )));
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let side: Sidecar = serde_json::from_reader(sidecar)?;
    if side.n_traces != n_traces || side.n_samples != n_samples {
        return Err(Error::Parse("sidecar does not match trace header".into()));
    }
    let challenges = side
        .challenges
        .iter()
        .map(|h| BitState::from_hex(STATE_BITS, h))
        .collect::<Result<Vec<_>>>()?;
    TraceSet::new(n_samples, data, challenges, side.meta)
}
