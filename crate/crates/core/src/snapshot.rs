//! Binary state snapshots.
//!
//! Layout, all little endian: a 64-byte header (`b"HDFLD1"`, two zero bytes,
//! then `nx, ny, nz, ncomp, repr` as `u64` and `L, h` as `f64`) followed by the
//! data as `[comp][z][y][x]`. Physical data are `f64`; spectral data are
//! interleaved `(re, im)` pairs of the horizontal DFT coefficients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::CoreError;
use crate::field::{Components, Representation, SpectralState, State};
use crate::grid::{Domain, Grid};

const MAGIC: &[u8; 6] = b"HDFLD1";
pub const HEADER_LEN: usize = 64;
const NCOMP: u64 = 3;

/// Decoded snapshot header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub domain: Domain,
    pub ncomp: u64,
    pub repr: Representation,
}

fn repr_tag(r: Representation) -> u64 {
    match r {
        Representation::Physical => 0,
        Representation::Spectral => 1,
    }
}

fn encode_header(domain: &Domain, repr: Representation) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..6].copy_from_slice(MAGIC);
    let words = [domain.nx as u64, domain.ny as u64, domain.nz as u64, NCOMP, repr_tag(repr)];
    for (i, w) in words.iter().enumerate() {
        h[8 + 8 * i..16 + 8 * i].copy_from_slice(&w.to_le_bytes());
    }
    h[48..56].copy_from_slice(&domain.length.to_le_bytes());
    h[56..64].copy_from_slice(&domain.depth.to_le_bytes());
    h
}

fn bad(msg: impl Into<String>) -> CoreError {
    CoreError::Io(msg.into())
}

fn decode_header(h: &[u8; HEADER_LEN]) -> Result<Header, CoreError> {
    if &h[..6] != MAGIC || h[6] != 0 || h[7] != 0 {
        return Err(bad("not a field snapshot"));
    }
    let word = |i: usize| u64::from_le_bytes(h[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"));
    let float = |o: usize| f64::from_le_bytes(h[o..o + 8].try_into().expect("8 bytes"));
    let ncomp = word(3);
    if ncomp != NCOMP {
        return Err(bad(format!("expected {NCOMP} components, found {ncomp}")));
    }
    let repr = match word(4) {
        0 => Representation::Physical,
        1 => Representation::Spectral,
        t => return Err(bad(format!("unknown representation tag {t}"))),
    };
    let dim = |i: usize| usize::try_from(word(i)).map_err(|_| bad("grid size overflows usize"));
    let domain = Domain::new(float(48), float(56), dim(0)?, dim(1)?, dim(2)?)?;
    Ok(Header { domain, ncomp, repr })
}

/// Writes `state` on `grid` in the requested representation.
pub fn write<W: Write>(mut out: W, grid: &Grid, state: &State, repr: Representation) -> Result<(), CoreError> {
    state.check_shape(grid)?;
    out.write_all(&encode_header(grid.domain(), repr))?;
    match repr {
        Representation::Physical => {
            for c in state.components() {
                for x in c {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Representation::Spectral => {
            for c in &state.to_spectral(grid).comps {
                for z in c {
                    out.write_all(&z.re.to_le_bytes())?;
                    out.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>, CoreError> {
    let mut buf = vec![0u8; 8 * n];
    input.read_exact(&mut buf).map_err(|e| bad(format!("truncated snapshot: {e}")))?;
    Ok(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
}

/// Reads a snapshot; the state is returned in physical space whatever the
/// stored representation.
pub fn read<R: Read>(mut input: R) -> Result<(Header, State), CoreError> {
    let mut h = [0u8; HEADER_LEN];
    input.read_exact(&mut h).map_err(|e| bad(format!("truncated header: {e}")))?;
    let header = decode_header(&h)?;
    let grid = Grid::new(header.domain)?;
    let n = grid.len();
    let state = match header.repr {
        Representation::Physical => {
            let v1 = read_f64s(&mut input, n)?;
            let v2 = read_f64s(&mut input, n)?;
            let t = read_f64s(&mut input, n)?;
            State { v: [v1, v2], t }
        }
        Representation::Spectral => {
            let mut comps = Vec::with_capacity(3);
            for _ in 0..3 {
                let raw = read_f64s(&mut input, 2 * n)?;
                comps.push(raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect());
            }
            SpectralState { comps }.to_physical(&grid)
        }
    };
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after snapshot data"));
    }
    Ok((header, state))
}

pub fn save(path: &Path, grid: &Grid, state: &State, repr: Representation) -> Result<(), CoreError> {
    write(BufWriter::new(File::create(path)?), grid, state, repr)
}

pub fn load(path: &Path) -> Result<(Header, State), CoreError> {
    read(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample;

    fn setup() -> (Grid, State) {
        let g = Grid::new(Domain::new(2.0, 0.5, 6, 4, 3).unwrap()).unwrap();
        let s = State {
            v: [sample(&g, |x, y, z| x.sin() + y * z), sample(&g, |x, _, z| x.cos() * z)],
            t: sample(&g, |_, y, _| (2.0 * y).sin()),
        };
        (g, s)
    }

    #[test]
    fn physical_roundtrip_is_exact() {
        let (g, s) = setup();
        let mut buf = Vec::new();
        write(&mut buf, &g, &s, Representation::Physical).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 3 * 8 * g.len());
        assert_eq!(&buf[..8], b"HDFLD1\0\0");
        let (h, back) = read(buf.as_slice()).unwrap();
        assert_eq!(h.domain, *g.domain());
        assert_eq!(h.repr, Representation::Physical);
        assert_eq!(back, s);
    }

    #[test]
    fn spectral_roundtrip_to_roundoff() {
        let (g, s) = setup();
        let mut buf = Vec::new();
        write(&mut buf, &g, &s, Representation::Spectral).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 3 * 16 * g.len());
        let (_, back) = read(buf.as_slice()).unwrap();
        assert!((&back - &s).max_abs() < 1e-13);
    }

    #[test]
    fn rejects_corrupt_input() {
        let (g, s) = setup();
        let mut buf = Vec::new();
        write(&mut buf, &g, &s, Representation::Physical).unwrap();
        assert!(read(&buf[..buf.len() - 1]).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read(bad_magic.as_slice()).is_err());
        buf.push(0);
        assert!(read(buf.as_slice()).is_err());
    }
}
