//! Test-only generators and brute-force oracles. Nothing here calls into the
//! drill implementation.
#![allow(dead_code)]

use std::fmt::Write as _;

use celldrill_core::geo::LatLon;
use celldrill_core::ingest::{CellRecord, MnoConfig, Rat, Schema};
use rand::seq::SliceRandom;
use rand::Rng;

pub const MCC: u32 = 214;

pub fn mno(mnc: u32) -> MnoConfig {
    MnoConfig {
        mnc,
        label: format!("MNO{mnc}"),
        market_share: 0.2,
        allowed_rats: [Rat::Lte].into_iter().collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub mnos: Vec<MnoConfig>,
    pub records: Vec<CellRecord>,
}

/// Random operator data: up to `max_rows` rows over 1..=5 operators, with up
/// to 30% of rows re-using an earlier (mnc, tac, cid) key at a jittered
/// position. Sample counts straddle the default CBS interval.
pub fn dataset<R: Rng>(rng: &mut R, max_rows: usize) -> Dataset {
    let n_mnos = rng.gen_range(1..=5);
    let mut mncs: Vec<u32> = (1..=9).collect();
    mncs.shuffle(rng);
    let mnos: Vec<MnoConfig> = mncs[..n_mnos].iter().map(|&m| mno(m)).collect();
    let rows = rng.gen_range(1..=max_rows);
    let dup_rate: f64 = rng.gen_range(0.0..=0.3);
    let n_tacs = rng.gen_range(1..=12u64);
    let mut records: Vec<CellRecord> = Vec::with_capacity(rows);
    for _ in 0..rows {
        let rec = if !records.is_empty() && rng.gen_bool(dup_rate) {
            let base = &records[rng.gen_range(0..records.len())];
            CellRecord {
                samples: samples(rng),
                loc: LatLon::new(
                    base.loc.lat + rng.gen_range(-0.002..0.002),
                    base.loc.lon + rng.gen_range(-0.002..0.002),
                ),
                ..base.clone()
            }
        } else {
            CellRecord {
                rat: Rat::Lte,
                mnc: mnos[rng.gen_range(0..mnos.len())].mnc,
                tac: rng.gen_range(1..=n_tacs),
                cid: rng.gen_range(0..4000),
                loc: LatLon::new(
                    round6(rng.gen_range(40.30..40.55)),
                    round6(rng.gen_range(-3.85..-3.55)),
                ),
                samples: samples(rng),
            }
        };
        records.push(rec);
    }
    Dataset { mnos, records }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn samples<R: Rng>(rng: &mut R) -> u64 {
    match rng.gen_range(0..10) {
        0 => rng.gen_range(0..100),
        1 => rng.gen_range(1001..3000),
        2 => *[99, 100, 1000, 1001].choose(rng).unwrap(),
        // coarse values make TAC ties likely
        3 => rng.gen_range(1..=10) * 100,
        _ => rng.gen_range(100..=1000),
    }
}

/// OpenCellID-layout CSV text for `records`.
pub fn to_csv(records: &[CellRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 64);
    s.push_str(Schema::OPENCELLID_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},0,{},{},0,{},1,0,0,0",
            r.rat, MCC, r.mnc, r.tac, r.cid, r.loc.lon, r.loc.lat, r.samples
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCell {
    pub tac: u64,
    pub cid: u64,
    pub samples: u64,
    pub rows: u64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub rows_in: u64,
    pub rows_removed: u64,
    pub rows_kept: u64,
    pub kept_samples: u64,
    pub cells: Vec<OracleCell>,
    /// (tac, total samples, cells with samples > 0), first-seen order
    pub tacs: Vec<(u64, u64, u64)>,
    /// None when nothing survived the CBS filter.
    pub httac: Option<(u64, u64)>,
    pub top: Vec<OracleCell>,
}

/// Literal nested-loop drill for one operator: no hashing, no sorting.
pub fn oracle(records: &[CellRecord], mnc: u32, a: u64, b: u64, n_c: usize) -> OracleOutcome {
    let mut rows_in = 0;
    let mut kept: Vec<&CellRecord> = Vec::new();
    for r in records {
        if r.mnc != mnc {
            continue;
        }
        rows_in += 1;
        if r.samples < a || r.samples > b {
            continue;
        }
        kept.push(r);
    }

    let mut keys: Vec<(u64, u64)> = Vec::new();
    for r in &kept {
        let mut seen = false;
        for k in &keys {
            if k.0 == r.tac && k.1 == r.cid {
                seen = true;
            }
        }
        if !seen {
            keys.push((r.tac, r.cid));
        }
    }

    let mut cells = Vec::new();
    for &(tac, cid) in &keys {
        let (mut s, mut n, mut wlat, mut wlon, mut plat, mut plon) = (0u64, 0u64, 0.0, 0.0, 0.0, 0.0);
        for r in &kept {
            if r.tac == tac && r.cid == cid {
                s += r.samples;
                n += 1;
                wlat += r.samples as f64 * r.loc.lat;
                wlon += r.samples as f64 * r.loc.lon;
                plat += r.loc.lat;
                plon += r.loc.lon;
            }
        }
        let (lat, lon) = if s > 0 {
            (wlat / s as f64, wlon / s as f64)
        } else {
            (plat / n as f64, plon / n as f64)
        };
        cells.push(OracleCell {
            tac,
            cid,
            samples: s,
            rows: n,
            lat,
            lon,
        });
    }

    let mut tac_ids: Vec<u64> = Vec::new();
    for c in &cells {
        if !tac_ids.contains(&c.tac) {
            tac_ids.push(c.tac);
        }
    }
    let mut tacs = Vec::new();
    for &t in &tac_ids {
        let (mut total, mut count) = (0, 0);
        for c in &cells {
            if c.tac == t {
                total += c.samples;
                if c.samples > 0 {
                    count += 1;
                }
            }
        }
        tacs.push((t, total, count));
    }

    let mut httac: Option<(u64, u64)> = None;
    for &(t, total, _) in &tacs {
        httac = match httac {
            None => Some((t, total)),
            Some((bt, btotal)) if total > btotal || (total == btotal && t < bt) => Some((t, total)),
            keep => keep,
        };
    }

    let mut top = Vec::new();
    if let Some((h, _)) = httac {
        let mut taken = vec![false; cells.len()];
        for _ in 0..n_c {
            let mut pick: Option<usize> = None;
            for (i, c) in cells.iter().enumerate() {
                if taken[i] || c.tac != h {
                    continue;
                }
                pick = match pick {
                    None => Some(i),
                    Some(p)
                        if c.samples > cells[p].samples
                            || (c.samples == cells[p].samples && c.cid < cells[p].cid) =>
                    {
                        Some(i)
                    }
                    keep => keep,
                };
            }
            let Some(p) = pick else { break };
            taken[p] = true;
            top.push(cells[p].clone());
        }
    }

    let kept_samples = kept.iter().map(|r| r.samples).sum();
    OracleOutcome {
        rows_in,
        rows_removed: rows_in - kept.len() as u64,
        rows_kept: kept.len() as u64,
        kept_samples,
        cells,
        tacs,
        httac,
        top,
    }
}

/// Great-circle distance in km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const R: f64 = 6371.0088;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * h.sqrt().asin()
}

/// Small-patch area: haversine height times haversine width along the
/// mid-latitude.
pub fn haversine_patch_km2(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> f64 {
    let mid_lon = 0.5 * (lon_min + lon_max);
    let mid_lat = 0.5 * (lat_min + lat_max);
    let h = haversine_km(lat_min, mid_lon, lat_max, mid_lon);
    let w = haversine_km(mid_lat, lon_min, mid_lat, lon_max);
    h * w
}

/// Exhaustive minimal-area search over every rectangle whose edges come from
/// cell coordinates, with the mass test done in exact integers:
/// `contained * den >= num * total`. Returns the best area.
pub fn min_mass_rect_area(
    cells: &[(f64, f64, u64)],
    num: u64,
    den: u64,
    area: impl Fn(f64, f64, f64, f64) -> f64,
) -> f64 {
    let total: u64 = cells.iter().map(|c| c.2).sum();
    let mut best = f64::INFINITY;
    for a in cells {
        for b in cells {
            let (lat_lo, lat_hi) = (a.0, b.0);
            if lat_lo > lat_hi {
                continue;
            }
            for c in cells {
                for d in cells {
                    let (lon_lo, lon_hi) = (c.1, d.1);
                    if lon_lo > lon_hi {
                        continue;
                    }
                    let mut mass = 0;
                    for p in cells {
                        if p.0 >= lat_lo && p.0 <= lat_hi && p.1 >= lon_lo && p.1 <= lon_hi {
                            mass += p.2;
                        }
                    }
                    if u128::from(mass) * u128::from(den) >= u128::from(num) * u128::from(total) {
                        best = best.min(area(lat_lo, lat_hi, lon_lo, lon_hi));
                    }
                }
            }
        }
    }
    best
}
