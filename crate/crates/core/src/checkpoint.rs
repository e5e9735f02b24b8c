//! Binary checkpoints: a 16-byte header (`b"BSQCKPT\0"`, `u32` version,
//! `u32` reserved) followed by records of `time: f64`, `n_points: u64`,
//! `half_length: f64`, then `u1` and `u2` as `n_points` doubles each.
//! Everything is little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::grid::{FieldState, Grid};

pub const MAGIC: [u8; 8] = *b"BSQCKPT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const RECORD_HEAD: usize = 24;

fn header() -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..8].copy_from_slice(&MAGIC);
    h[8..12].copy_from_slice(&VERSION.to_le_bytes());
    h
}

fn push_record(buf: &mut Vec<u8>, s: &FieldState) {
    buf.extend_from_slice(&s.time.to_le_bytes());
    buf.extend_from_slice(&(s.grid.n_points() as u64).to_le_bytes());
    buf.extend_from_slice(&s.grid.half_length().to_le_bytes());
    for v in s.u1.iter().chain(&s.u2) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(states: &[FieldState]) -> Vec<u8> {
    let size = states
        .iter()
        .map(|s| RECORD_HEAD + 16 * s.grid.n_points())
        .sum::<usize>();
    let mut buf = Vec::with_capacity(HEADER_LEN + size);
    buf.extend_from_slice(&header());
    for s in states {
        push_record(&mut buf, s);
    }
    buf
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Decode every record; fails without returning partial data.
pub fn decode(bytes: &[u8]) -> Result<Vec<FieldState>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corruption(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let mut out = Vec::new();
    let mut at = HEADER_LEN;
    while at < bytes.len() {
        if bytes.len() - at < RECORD_HEAD {
            return Err(Error::Corruption(format!(
                "truncated record header at byte {at}"
            )));
        }
        let time = f64_at(bytes, at);
        let n = u64::from_le_bytes(bytes[at + 8..at + 16].try_into().expect("8 bytes"));
        let half_length = f64_at(bytes, at + 16);
        at += RECORD_HEAD;
        let body = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(16))
            .ok_or_else(|| Error::Corruption(format!("implausible point count {n}")))?;
        if bytes.len() - at < body {
            return Err(Error::Corruption(format!(
                "record at t = {time} needs {body} bytes, {} remain",
                bytes.len() - at
            )));
        }
        let n = n as usize;
        let grid = Grid::new(half_length, n)
            .map_err(|e| Error::Corruption(format!("invalid grid in record: {e}")))?;
        let read = |k: usize| (0..n).map(|i| f64_at(bytes, at + 8 * (k * n + i))).collect();
        let s = FieldState::new(grid, read(0), read(1), time)?;
        at += body;
        out.push(s);
    }
    Ok(out)
}

pub fn save_states(path: &Path, states: &[FieldState]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(states))?;
    f.sync_all()?;
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    save_states(path, &traj.states)
}

pub fn load_states(path: &Path) -> Result<Vec<FieldState>> {
    decode(&fs::read(path)?)
}

/// The last record of a checkpoint file.
pub fn load_state(path: &Path) -> Result<FieldState> {
    load_states(path)?
        .pop()
        .ok_or_else(|| Error::Corruption("checkpoint holds no records".into()))
}
