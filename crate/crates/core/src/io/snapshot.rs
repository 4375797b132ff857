//! Binary state snapshots. A six-line text header
//!
//! ```text
//! DCSIM1
//! <dim>
//! <cells per axis>
//! <extent per axis>
//! <time>
//! u v w z
//! ```
//!
//! is followed by the four fields as little-endian `f64`, row-major, in
//! header order. The grid origin is not stored; readers place it at zero
//! unless they supply a grid of their own.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Field, Grid, StateQuad};

const MAGIC: &str = "DCSIM";
const VERSION: u32 = 1;
const FIELD_ORDER: &str = "u v w z";

pub fn encode_snapshot(state: &StateQuad) -> Vec<u8> {
    let g = state.grid();
    let dim = g.dim();
    let cells = &g.cells()[..dim];
    let extent = &g.extent()[..dim];
    let join = |xs: Vec<String>| xs.join(" ");
    let header = format!(
        "{MAGIC}{VERSION}\n{dim}\n{}\n{}\n{:?}\n{FIELD_ORDER}\n",
        join(cells.iter().map(|c| c.to_string()).collect()),
        join(extent.iter().map(|e| format!("{e:?}")).collect()),
        state.t,
    );
    let mut out = header.into_bytes();
    out.reserve(4 * 8 * g.len());
    for (_, f) in state.fields() {
        for x in f.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_snapshot(state: &StateQuad, path: &Path) -> Result<()> {
    fs::write(path, encode_snapshot(state)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<StateQuad> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes, None).map_err(|e| match e {
        Error::Snapshot(m) => Error::Snapshot(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads a snapshot onto `grid`, which must agree with the header in
/// dimension, cell counts and extent.
pub fn read_snapshot_on(path: &Path, grid: &Grid) -> Result<StateQuad> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes, Some(grid))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

pub fn decode_snapshot(bytes: &[u8], grid: Option<&Grid>) -> Result<StateQuad> {
    let mut lines = Vec::with_capacity(6);
    let mut pos = 0;
    while lines.len() < 6 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("header is truncated"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not text"))?;
        lines.push(line);
        pos += end + 1;
    }
    let version = lines[0]
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(format!("bad magic `{}`", lines[0])))?;
    let version: u32 = version.parse().map_err(|_| bad(format!("bad version `{version}`")))?;
    if version != VERSION {
        return Err(bad(format!("unsupported snapshot version {version} (this build reads {VERSION})")));
    }
    let dim: usize = lines[1].trim().parse().map_err(|_| bad("bad dimension line"))?;
    if dim != 1 && dim != 2 {
        return Err(bad(format!("dimension {dim} not supported")));
    }
    let cells: Vec<usize> = lines[2]
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("bad cells line"))?;
    let extent: Vec<f64> = lines[3]
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("bad extent line"))?;
    if cells.len() != dim || extent.len() != dim {
        return Err(bad("cells/extent lists do not match the dimension"));
    }
    let t: f64 = lines[4].trim().parse().map_err(|_| bad("bad time line"))?;
    if lines[5] != FIELD_ORDER {
        return Err(bad(format!("unexpected field order `{}`", lines[5])));
    }
    let pad_c = [cells[0], if dim == 2 { cells[1] } else { 1 }];
    let pad_e = [extent[0], if dim == 2 { extent[1] } else { 0.0 }];
    let grid = match grid {
        Some(g) => {
            if g.dim() != dim || g.cells() != pad_c || g.extent() != pad_e {
                return Err(bad("header does not match the supplied grid"));
            }
            *g
        }
        None => Grid::build(dim, pad_c, pad_e, [0.0, 0.0])?,
    };
    let n = grid.len();
    let payload = &bytes[pos..];
    if payload.len() != 4 * 8 * n {
        return Err(bad(format!(
            "payload holds {} bytes, header promises {}",
            payload.len(),
            4 * 8 * n
        )));
    }
    let mut fields = payload.chunks_exact(8 * n).map(|chunk| {
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        Field::from_values(grid, values)
    });
    let mut next = || fields.next().expect("four fields");
    let (u, v, w, z) = (next()?, next()?, next()?, next()?);
    Ok(StateQuad { u, v, w, z, t })
}
