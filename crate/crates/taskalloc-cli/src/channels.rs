//! Channel dumps: one CSV per fading slot.
//!
//! The first row carries `seed=..,N=..,K=..,slot=..`; then a
//! `k,antenna_index,re,im` header and one row per antenna entry of h̃_k, the
//! unit-variance fading. Path loss is not stored; it comes from the scenario.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use taskalloc::ChannelSet;

use crate::fmt::f17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMeta {
    pub seed: u64,
    pub num_antennas: usize,
    pub num_users: usize,
    pub slot: usize,
}

pub fn write_channel_csv(path: &Path, ch: &ChannelSet, slot: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        format!("seed={}", ch.seed),
        format!("N={}", ch.num_antennas),
        format!("K={}", ch.num_users()),
        format!("slot={slot}"),
    ])?;
    w.write_record(["k", "antenna_index", "re", "im"])?;
    for (k, h) in ch.fading.iter().enumerate() {
        for (n, z) in h.iter().enumerate() {
            w.write_record([k.to_string(), n.to_string(), f17(z.re), f17(z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn meta_field(rec: &csv::StringRecord, j: usize, key: &str) -> Result<u64> {
    let cell = rec.get(j).with_context(|| format!("channel header is missing {key}"))?;
    let value = cell
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .with_context(|| format!("channel header field {j} should be {key}=..., found {cell:?}"))?;
    value.parse().with_context(|| format!("channel header {key} is not an integer: {value:?}"))
}

/// Reads a dump back. `path_loss` must have one entry per user.
pub fn read_channel_csv(path: &Path, path_loss: &[f64]) -> Result<(ChannelMeta, ChannelSet)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut records = rdr.records();
    let head = records.next().context("channel file is empty")??;
    let meta = ChannelMeta {
        seed: meta_field(&head, 0, "seed")?,
        num_antennas: meta_field(&head, 1, "N")? as usize,
        num_users: meta_field(&head, 2, "K")? as usize,
        slot: meta_field(&head, 3, "slot")? as usize,
    };
    let cols = records.next().context("channel file has no column header")??;
    ensure!(cols.iter().eq(["k", "antenna_index", "re", "im"]), "unexpected channel columns {:?}", cols);
    ensure!(
        path_loss.len() == meta.num_users,
        "channel file has K={} but the scenario has {} users",
        meta.num_users,
        path_loss.len()
    );

    let mut fading = vec![vec![None; meta.num_antennas]; meta.num_users];
    for rec in records {
        let rec = rec?;
        ensure!(rec.len() == 4, "channel row has {} fields, expected 4", rec.len());
        let k: usize = rec[0].parse().context("bad user index")?;
        let n: usize = rec[1].parse().context("bad antenna index")?;
        let re: f64 = rec[2].parse().context("bad real part")?;
        let im: f64 = rec[3].parse().context("bad imaginary part")?;
        if k >= meta.num_users || n >= meta.num_antennas {
            bail!("channel entry ({k}, {n}) is outside K={}, N={}", meta.num_users, meta.num_antennas);
        }
        if fading[k][n].replace(Complex64::new(re, im)).is_some() {
            bail!("duplicate channel entry ({k}, {n})");
        }
    }
    let fading = fading
        .into_iter()
        .enumerate()
        .map(|(k, h)| {
            h.into_iter()
                .enumerate()
                .map(|(n, z)| z.with_context(|| format!("missing channel entry ({k}, {n})")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let set = ChannelSet {
        seed: meta.seed,
        num_antennas: meta.num_antennas,
        fading,
        path_loss: path_loss.to_vec(),
    };
    Ok((meta, set))
}
