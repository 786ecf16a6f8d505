//! Binary trace dump.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content                        |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `RDTRACE1`               |
//! | 8      | 8    | `d` as u64                     |
//! | 16     | 8    | points per trajectory as u64   |
//! | 24     | 8    | trajectory count as u64        |
//! | 32     | …    | f64 payload `[traj][time][dim]`|

use std::io::{self, Read, Write};

pub const TRACE_MAGIC: &[u8; 8] = b"RDTRACE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub dim: u64,
    pub points: u64,
    pub trajectories: u64,
}

pub fn write_trace<W: Write>(mut w: W, header: TraceHeader, payload: &[f64]) -> io::Result<()> {
    let expected = header.dim * header.points * header.trajectories;
    if payload.len() as u64 != expected {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "payload size does not match header"));
    }
    w.write_all(TRACE_MAGIC)?;
    for v in [header.dim, header.points, header.trajectories] {
        w.write_all(&v.to_le_bytes())?;
    }
    for x in payload {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_trace<R: Read>(mut r: R) -> io::Result<(TraceHeader, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a trace file"));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> io::Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let header = TraceHeader { dim: next(&mut r)?, points: next(&mut r)?, trajectories: next(&mut r)? };
    let len = header
        .dim
        .checked_mul(header.points)
        .and_then(|v| v.checked_mul(header.trajectories))
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "header overflow"))?;
    let mut payload = Vec::with_capacity(len as usize);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        payload.push(f64::from_le_bytes(buf));
    }
    Ok((header, payload))
}
