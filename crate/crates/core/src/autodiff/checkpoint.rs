//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "SSCK"            4 bytes magic
//! version           u32 (= 1)
//! adam_step         u64
//! count             u32
//! count × {
//!   name_len        u32
//!   name            name_len bytes UTF-8
//!   group           u8   (0 = segmentation, 1 = auxiliary)
//!   lr_mult         f64
//!   rows, cols      u32, u32
//!   value           rows·cols × f64
//!   first_moment    rows·cols × f64
//!   second_moment   rows·cols × f64
//! }
//! ```

use super::params::{Param, ParamGroup, ParamStore};
use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&store.step().to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(match p.group {
            ParamGroup::Seg => 0,
            ParamGroup::Aux => 1,
        });
        out.extend_from_slice(&p.lr_mult.to_le_bytes());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        for m in [&p.value, &p.m, &p.v] {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?
            .to_string();
        let at = r.offset();
        let group = match r.u8()? {
            0 => ParamGroup::Seg,
            1 => ParamGroup::Aux,
            g => return Err(Error::format(at, format!("unknown parameter group {g}"))),
        };
        let lr_mult = r.f64()?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut mats = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64()?);
            }
            mats.push(Matrix::from_vec(rows, cols, data)?);
        }
        let v = mats.pop().unwrap();
        let m = mats.pop().unwrap();
        let value = mats.pop().unwrap();
        if store.id_of(&name).is_some() {
            return Err(Error::format(r.offset(), format!("parameter {name} appears twice")));
        }
        store.push_raw(Param {
            name,
            value,
            group,
            lr_mult,
            m,
            v,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::format(r.offset(), format!("{} trailing bytes", r.remaining())));
    }
    store.set_step(step);
    Ok(store)
}
