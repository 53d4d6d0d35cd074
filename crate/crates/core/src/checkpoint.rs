//! Binary checkpoint container for message state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      7 bytes  "BINMP1\0"
//! version    u32      1
//! m, n, k    u64 x 3
//! iteration  u64
//! seed       u64
//! payload    f64 x (m*n*k) var_to_factor, then f64 x (m*n*k) factor_to_var
//! ```
//!
//! Scalar BP stores are written with `k = 1`.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::messages::{BpMessageStore, SurveyStore};

pub const MAGIC: &[u8; 7] = b"BINMP1\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub iteration: u64,
    pub master_seed: u64,
    pub var_to_factor: Vec<f64>,
    pub factor_to_var: Vec<f64>,
}

impl Checkpoint {
    pub fn from_bp(store: &BpMessageStore, iteration: u64, master_seed: u64) -> Self {
        Self {
            m: store.num_factors(),
            n: store.num_vars(),
            k: 1,
            iteration,
            master_seed,
            var_to_factor: store.var_to_factor.clone(),
            factor_to_var: store.factor_to_var.clone(),
        }
    }

    pub fn from_surveys(store: &SurveyStore, iteration: u64, master_seed: u64) -> Self {
        Self {
            m: store.num_factors(),
            n: store.num_vars(),
            k: store.k(),
            iteration,
            master_seed,
            var_to_factor: store.var_to_factor.clone(),
            factor_to_var: store.factor_to_var.clone(),
        }
    }

    pub fn to_bp(&self) -> Result<BpMessageStore> {
        if self.k != 1 {
            return Err(Error::Format(format!("checkpoint holds surveys with k = {}", self.k)));
        }
        BpMessageStore::from_parts(self.m, self.n, self.var_to_factor.clone(), self.factor_to_var.clone())
    }

    pub fn to_surveys(&self) -> Result<SurveyStore> {
        if self.k < 2 {
            return Err(Error::Format("checkpoint holds scalar BP messages".into()));
        }
        SurveyStore::from_parts(
            self.m,
            self.n,
            self.k,
            self.var_to_factor.clone(),
            self.factor_to_var.clone(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for v in [self.m as u64, self.n as u64, self.k as u64, self.iteration, self.master_seed] {
            w.write_u64::<LittleEndian>(v)?;
        }
        for v in self.var_to_factor.iter().chain(&self.factor_to_var) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
            _ => Error::Io(e),
        };
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut header = [0u64; 5];
        for h in header.iter_mut() {
            *h = r.read_u64::<LittleEndian>().map_err(truncated)?;
        }
        let [m, n, k, iteration, master_seed] = header;
        let len = m
            .checked_mul(n)
            .and_then(|x| x.checked_mul(k))
            .filter(|&x| x < (1 << 34))
            .ok_or_else(|| Error::Format("implausible checkpoint dimensions".into()))? as usize;
        let mut read_block = || -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(truncated)?;
            Ok(v)
        };
        let var_to_factor = read_block()?;
        let factor_to_var = read_block()?;
        Ok(Self {
            m: m as usize,
            n: n as usize,
            k: k as usize,
            iteration,
            master_seed,
            var_to_factor,
            factor_to_var,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bp_round_trip_is_bit_exact() {
        let mut store = BpMessageStore::uniform(2, 3);
        store.var_to_factor[1] = 0.123_456_789_012_345_6;
        store.factor_to_var[5] = 1.0 / 3.0;
        let ck = Checkpoint::from_bp(&store, 17, 99);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..7], MAGIC);
        assert_eq!(buf.len(), 7 + 4 + 5 * 8 + 2 * 6 * 8);
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bp().unwrap(), store);
    }

    #[test]
    fn survey_round_trip() {
        let store = SurveyStore::uniform(2, 2, 5);
        let ck = Checkpoint::from_surveys(&store, 3, 1);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back.to_surveys().unwrap(), store);
        assert!(back.to_bp().is_err());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let ck = Checkpoint::from_bp(&BpMessageStore::uniform(1, 1), 0, 0);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::read_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    }
}
