//! On-disk formats for frame streams and ground truth.
//!
//! Frame file layout (little endian): magic `SPADSIM1`, `u32` samples per
//! gate, `u32` ADC bits, `u64` gate count, then every frame's codes as `u16`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{FrameStream, GroundTruth};

pub const FRAME_MAGIC: &[u8; 8] = b"SPADSIM1";

pub fn write_frames<W: Write>(mut w: W, stream: &FrameStream) -> Result<()> {
    w.write_all(FRAME_MAGIC)?;
    w.write_all(&(stream.samples_per_gate as u32).to_le_bytes())?;
    w.write_all(&stream.bits.to_le_bytes())?;
    w.write_all(&(stream.n_gates() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(stream.codes.len() * 2);
    for c in &stream.codes {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a frame file. The channel is not stored in the file and is set to `channel`.
pub fn read_frames<R: Read>(mut r: R, channel: u8) -> Result<FrameStream> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(Error::Format("bad frame file magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let samples_per_gate = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let bits = u32::from_le_bytes(u32buf);
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let n_gates = u64::from_le_bytes(u64buf) as usize;
    let total =
        n_gates.checked_mul(samples_per_gate).ok_or_else(|| Error::Format("frame file size overflows".into()))?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != total * 2 {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", total * 2, raw.len())));
    }
    let codes = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    Ok(FrameStream { channel, samples_per_gate, bits, codes })
}

pub fn write_ground_truth<W: Write>(mut w: W, truth: &GroundTruth) -> Result<()> {
    writeln!(w, "gate_index,photon_present,avalanche,cause")?;
    for r in &truth.records {
        writeln!(w, "{},{},{},{}", r.gate_index, u8::from(r.photon_present), u8::from(r.avalanche), r.cause.as_str())?;
    }
    Ok(())
}
