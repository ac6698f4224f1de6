//! Geographic helpers: rectangles in lat/lon space, their area in km²,
//! density binning and the minimal-area mass rectangle used to seed a
//! deployment-area demarcation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndd::UniqueCell;

/// Kilometres per degree of arc used by the equirectangular area model.
pub const KM_PER_DEGREE: f64 = 111.32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("no cells to enclose")]
    NoCells,
    #[error("grid dimensions must be at least 1x1 (got {rows}x{cols})")]
    InvalidGrid { rows: usize, cols: usize },
    #[error("mass fraction must lie in (0, 1] (got {0})")]
    InvalidMassFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Axis-aligned lat/lon rectangle. Edges are inclusive and the rectangle never
/// wraps the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RectBounds", into = "RectBounds")]
pub struct GeoRect {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

/// Unvalidated wire form of a [`GeoRect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectBounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl TryFrom<RectBounds> for GeoRect {
    type Error = GeoError;

    fn try_from(b: RectBounds) -> Result<Self, Self::Error> {
        GeoRect::new(b.lat_min, b.lat_max, b.lon_min, b.lon_max)
    }
}

impl From<GeoRect> for RectBounds {
    fn from(r: GeoRect) -> Self {
        RectBounds {
            lat_min: r.lat_min,
            lat_max: r.lat_max,
            lon_min: r.lon_min,
            lon_max: r.lon_max,
        }
    }
}

impl GeoRect {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GeoError> {
        for (name, v) in [
            ("lat_min", lat_min),
            ("lat_max", lat_max),
            ("lon_min", lon_min),
            ("lon_max", lon_max),
        ] {
            if !v.is_finite() {
                return Err(GeoError::InvalidRect(format!("{name} is not a finite number")));
            }
        }
        if !(-90.0..=90.0).contains(&lat_min) || !(-90.0..=90.0).contains(&lat_max) {
            return Err(GeoError::InvalidRect("latitude outside [-90, 90]".into()));
        }
        if !(-180.0..=180.0).contains(&lon_min) || !(-180.0..=180.0).contains(&lon_max) {
            return Err(GeoError::InvalidRect("longitude outside [-180, 180]".into()));
        }
        if lat_min > lat_max {
            return Err(GeoError::InvalidRect(format!(
                "lat_min {lat_min} exceeds lat_max {lat_max}"
            )));
        }
        if lon_min > lon_max {
            return Err(GeoError::InvalidRect(format!(
                "lon_min {lon_min} exceeds lon_max {lon_max} (antimeridian-crossing rectangles are not supported)"
            )));
        }
        Ok(Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        })
    }

    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }
    pub fn lat_max(&self) -> f64 {
        self.lat_max
    }
    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }
    pub fn lon_max(&self) -> f64 {
        self.lon_max
    }

    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    /// Closed exterior ring in GeoJSON `[lon, lat]` order, counter-clockwise.
    pub fn ring(&self) -> [[f64; 2]; 5] {
        [
            [self.lon_min, self.lat_min],
            [self.lon_max, self.lat_min],
            [self.lon_max, self.lat_max],
            [self.lon_min, self.lat_max],
            [self.lon_min, self.lat_min],
        ]
    }

    pub fn area_km2(&self) -> f64 {
        rect_area_km2(self)
    }
}

/// Equirectangular area of `rect`:
/// `Δlat·K × Δlon·K·cos(lat_mid)` with `K = 111.32 km/°`.
pub fn rect_area_km2(rect: &GeoRect) -> f64 {
    let height = (rect.lat_max - rect.lat_min) * KM_PER_DEGREE;
    let mid = 0.5 * (rect.lat_min + rect.lat_max);
    let width = (rect.lon_max - rect.lon_min) * KM_PER_DEGREE * mid.to_radians().cos();
    (height * width).max(0.0)
}

/// Smallest rectangle containing every cell location.
pub fn bounding_box(cells: &[UniqueCell]) -> Result<GeoRect, GeoError> {
    let first = cells.first().ok_or(GeoError::NoCells)?;
    let (mut lat_min, mut lat_max) = (first.loc.lat, first.loc.lat);
    let (mut lon_min, mut lon_max) = (first.loc.lon, first.loc.lon);
    for c in &cells[1..] {
        lat_min = lat_min.min(c.loc.lat);
        lat_max = lat_max.max(c.loc.lat);
        lon_min = lon_min.min(c.loc.lon);
        lon_max = lon_max.max(c.loc.lon);
    }
    GeoRect::new(lat_min, lat_max, lon_min, lon_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectSource {
    Manual,
    Suggested,
}

/// A candidate or committed deployment area for one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemarcationRect {
    pub mnc: u32,
    pub rect: GeoRect,
    pub area_km2: f64,
    pub source: RectSource,
    pub contained_cells: u64,
    pub contained_samples: u64,
}

impl DemarcationRect {
    /// Computes area and containment of `rect` over `cells` (normally the
    /// operator's top cells).
    pub fn evaluate(mnc: u32, rect: GeoRect, cells: &[UniqueCell], source: RectSource) -> Self {
        let (contained_cells, contained_samples) = cells
            .iter()
            .filter(|c| rect.contains(c.loc))
            .fold((0u64, 0u64), |(n, s), c| (n + 1, s + c.samples));
        Self {
            mnc,
            rect,
            area_km2: rect_area_km2(&rect),
            source,
            contained_cells,
            contained_samples,
        }
    }
}

/// Samples binned on a regular lat/lon grid. Row 0 is the southern edge and
/// column 0 the western edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub rect: GeoRect,
    pub rows: usize,
    pub cols: usize,
    pub cell_samples: Vec<Vec<u64>>,
    pub overflow_cells: u64,
    pub overflow_samples: u64,
}

impl DensityGrid {
    pub fn total_binned(&self) -> u64 {
        self.cell_samples.iter().flatten().sum()
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let span = hi - lo;
    if span <= 0.0 {
        return 0;
    }
    let idx = ((v - lo) / span * n as f64).floor();
    // right/top edges belong to the last bin
    (idx.max(0.0) as usize).min(n - 1)
}

pub fn density_grid(
    cells: &[UniqueCell],
    rect: GeoRect,
    rows: usize,
    cols: usize,
) -> Result<DensityGrid, GeoError> {
    if rows == 0 || cols == 0 {
        return Err(GeoError::InvalidGrid { rows, cols });
    }
    let mut grid = DensityGrid {
        rect,
        rows,
        cols,
        cell_samples: vec![vec![0; cols]; rows],
        overflow_cells: 0,
        overflow_samples: 0,
    };
    for c in cells {
        if !rect.contains(c.loc) {
            grid.overflow_cells += 1;
            grid.overflow_samples += c.samples;
            continue;
        }
        let r = bin_index(c.loc.lat, rect.lat_min, rect.lat_max, rows);
        let k = bin_index(c.loc.lon, rect.lon_min, rect.lon_max, cols);
        grid.cell_samples[r][k] += c.samples;
    }
    Ok(grid)
}

/// Smallest integer mass satisfying `mass >= fraction * total`, tolerant of
/// the rounding noise in `fraction * total`.
pub fn required_mass(total: u64, fraction: f64) -> u64 {
    let x = fraction * total as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Minimal-area rectangle, spanned by cell coordinates, holding at least
/// `mass_fraction` of the total samples.
///
/// Every latitude band `[lat_i, lat_j]` is scanned with a two-pointer sweep over
/// the band's cells sorted by longitude, giving the narrowest longitude window
/// for each western edge. Cubic in the number of cells. Ties on area go to the
/// rectangle holding more samples, then to the lexicographically smallest bounds.
pub fn suggest_5gda(
    mnc: u32,
    cells: &[UniqueCell],
    mass_fraction: f64,
) -> Result<DemarcationRect, GeoError> {
    if !(mass_fraction > 0.0 && mass_fraction <= 1.0) {
        return Err(GeoError::InvalidMassFraction(mass_fraction));
    }
    if cells.is_empty() {
        return Err(GeoError::NoCells);
    }
    let total: u64 = cells.iter().map(|c| c.samples).sum();
    let need = required_mass(total, mass_fraction);

    let mut lats: Vec<f64> = cells.iter().map(|c| c.loc.lat).collect();
    lats.sort_by(f64::total_cmp);
    lats.dedup();

    let mut by_lon: Vec<&UniqueCell> = cells.iter().collect();
    by_lon.sort_by(|a, b| a.loc.lon.total_cmp(&b.loc.lon));

    // (area, samples, rect)
    let mut best: Option<(f64, u64, GeoRect)> = None;
    let mut band: Vec<(f64, u64)> = Vec::with_capacity(cells.len());

    for (i, &lo) in lats.iter().enumerate() {
        for &hi in &lats[i..] {
            band.clear();
            for c in by_lon.iter().filter(|c| c.loc.lat >= lo && c.loc.lat <= hi) {
                match band.last_mut() {
                    Some(last) if last.0 == c.loc.lon => last.1 += c.samples,
                    _ => band.push((c.loc.lon, c.samples)),
                }
            }
            let band_mass: u64 = band.iter().map(|b| b.1).sum();
            if band.is_empty() || band_mass < need {
                continue;
            }
            // `band` holds one entry per distinct longitude; the window is
            // band[left..right] and always spans at least one entry
            let mut right = 0usize;
            let mut window = 0u64;
            for left in 0..band.len() {
                if right <= left {
                    right = left;
                    window = 0;
                }
                while (window < need || right == left) && right < band.len() {
                    window += band[right].1;
                    right += 1;
                }
                if window < need {
                    break;
                }
                let rect = GeoRect::new(lo, hi, band[left].0, band[right - 1].0)?;
                let area = rect_area_km2(&rect);
                if is_better(area, window, &rect, best.as_ref()) {
                    best = Some((area, window, rect));
                }
                window -= band[left].1;
            }
        }
    }

    // need <= total, so the full band always qualifies
    let (_, _, rect) = best.expect("full extent always satisfies the mass constraint");
    Ok(DemarcationRect::evaluate(mnc, rect, cells, RectSource::Suggested))
}

fn is_better(area: f64, mass: u64, rect: &GeoRect, best: Option<&(f64, u64, GeoRect)>) -> bool {
    let Some((b_area, b_mass, b_rect)) = best else {
        return true;
    };
    if area != *b_area {
        return area < *b_area;
    }
    if mass != *b_mass {
        return mass > *b_mass;
    }
    let key = |r: &GeoRect| [r.lat_min, r.lat_max, r.lon_min, r.lon_max];
    key(rect)
        .iter()
        .zip(key(b_rect).iter())
        .find(|(a, b)| a != b)
        .is_some_and(|(a, b)| a < b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndd::CellKey;

    fn cell(cid: u64, lat: f64, lon: f64, samples: u64) -> UniqueCell {
        UniqueCell {
            key: CellKey { tac: 10, cid },
            samples,
            loc: LatLon::new(lat, lon),
            row_count: 1,
        }
    }

    fn rect(a: f64, b: f64, c: f64, d: f64) -> GeoRect {
        GeoRect::new(a, b, c, d).unwrap()
    }

    #[test]
    fn rect_rejects_inverted_and_out_of_bounds() {
        assert!(GeoRect::new(41.0, 40.0, 0.0, 1.0).is_err());
        assert!(GeoRect::new(40.0, 41.0, 1.0, 0.0).is_err());
        assert!(GeoRect::new(40.0, 95.0, 0.0, 1.0).is_err());
        assert!(GeoRect::new(40.0, 41.0, -181.0, 1.0).is_err());
        assert!(GeoRect::new(f64::NAN, 41.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn rect_deserialization_validates() {
        let bad = r#"{"lat_min":41.0,"lat_max":40.0,"lon_min":0.0,"lon_max":1.0}"#;
        assert!(serde_json::from_str::<GeoRect>(bad).is_err());
        let good = r#"{"lat_min":40.0,"lat_max":41.0,"lon_min":0.0,"lon_max":1.0}"#;
        assert_eq!(serde_json::from_str::<GeoRect>(good).unwrap(), rect(40.0, 41.0, 0.0, 1.0));
    }

    #[test]
    fn two_point_envelope() {
        let cells = [cell(1, 40.0, -3.7, 1), cell(2, 40.1, -3.6, 1)];
        assert_eq!(bounding_box(&cells).unwrap(), rect(40.0, 40.1, -3.7, -3.6));
        let rev = [cells[1].clone(), cells[0].clone()];
        assert_eq!(bounding_box(&rev).unwrap(), rect(40.0, 40.1, -3.7, -3.6));
    }

    #[test]
    fn single_cell_envelope_is_degenerate() {
        let r = bounding_box(&[cell(1, 40.0, -3.7, 5)]).unwrap();
        assert_eq!(r.area_km2(), 0.0);
        assert!(matches!(bounding_box(&[]), Err(GeoError::NoCells)));
    }

    #[test]
    fn degenerate_area_is_zero() {
        assert_eq!(rect_area_km2(&rect(40.0, 40.0, -3.7, -3.6)), 0.0);
        assert_eq!(rect_area_km2(&rect(40.0, 40.1, -3.6, -3.6)), 0.0);
    }

    #[test]
    fn doubling_width_doubles_area() {
        let a = rect_area_km2(&rect(40.40, 40.45, -3.72, -3.66));
        let b = rect_area_km2(&rect(40.40, 40.45, -3.72, -3.60));
        // the subtraction of longitudes rounds, so compare with a tight bound
        assert!((b / a - 2.0).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn madrid_patch_matches_spherical_zone() {
        let r = rect(40.40, 40.45, -3.72, -3.66);
        let area = rect_area_km2(&r);
        // spherical zone with radius derived from K so that only the
        // flat-earth approximation differs
        let radius = KM_PER_DEGREE * 180.0 / std::f64::consts::PI;
        let zone = radius
            * radius
            * (0.06f64).to_radians()
            * ((40.45f64).to_radians().sin() - (40.40f64).to_radians().sin());
        assert!((area - zone).abs() / zone < 1e-5, "{area} vs {zone}");
        assert!((area - 28.300_757_423_350_547).abs() < 1e-9, "{area}");
    }

    #[test]
    fn grid_single_bin_holds_everything() {
        let cells = [cell(1, 40.0, -3.7, 10), cell(2, 40.1, -3.6, 20), cell(3, 40.05, -3.65, 5)];
        let g = density_grid(&cells, bounding_box(&cells).unwrap(), 1, 1).unwrap();
        assert_eq!(g.cell_samples, vec![vec![35]]);
        assert_eq!(g.overflow_samples, 0);
    }

    #[test]
    fn grid_corner_goes_to_last_bin() {
        let r = rect(0.0, 1.0, 0.0, 1.0);
        let g = density_grid(&[cell(1, 1.0, 1.0, 7)], r, 3, 4).unwrap();
        assert_eq!(g.cell_samples[2][3], 7);
        assert_eq!(g.total_binned(), 7);
    }

    #[test]
    fn grid_quadrant_midpoints() {
        let r = rect(0.0, 2.0, 0.0, 2.0);
        let cells = [
            cell(1, 0.5, 0.5, 1),
            cell(2, 0.5, 1.5, 2),
            cell(3, 1.5, 0.5, 3),
            cell(4, 1.5, 1.5, 4),
        ];
        let g = density_grid(&cells, r, 2, 2).unwrap();
        assert_eq!(g.cell_samples, vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn grid_counts_overflow() {
        let r = rect(0.0, 1.0, 0.0, 1.0);
        let g = density_grid(&[cell(1, 0.5, 0.5, 3), cell(2, 5.0, 0.5, 9)], r, 2, 2).unwrap();
        assert_eq!(g.total_binned() + g.overflow_samples, 12);
        assert_eq!(g.overflow_cells, 1);
        assert!(density_grid(&[], r, 0, 2).is_err());
    }

    #[test]
    fn suggest_full_mass_is_bounding_box() {
        let cells = [cell(1, 40.0, -3.7, 10), cell(2, 40.1, -3.6, 20), cell(3, 40.05, -3.62, 5)];
        let d = suggest_5gda(1, &cells, 1.0).unwrap();
        assert_eq!(d.rect, bounding_box(&cells).unwrap());
        assert_eq!(d.contained_samples, 35);
        assert_eq!(d.source, RectSource::Suggested);
    }

    #[test]
    fn suggest_single_cell() {
        let d = suggest_5gda(1, &[cell(1, 40.0, -3.7, 10)], 0.3).unwrap();
        assert_eq!(d.area_km2, 0.0);
        assert_eq!(d.contained_cells, 1);
    }

    #[test]
    fn suggest_collinear_picks_heavy_cell() {
        let cells = [cell(1, 40.0, -3.7, 600), cell(2, 40.0, -3.6, 300), cell(3, 40.0, -3.5, 100)];
        let d = suggest_5gda(1, &cells, 0.6).unwrap();
        assert_eq!(d.rect, rect(40.0, 40.0, -3.7, -3.7));
        assert_eq!(d.contained_samples, 600);
        assert_eq!(d.area_km2, 0.0);
    }

    #[test]
    fn suggest_rejects_bad_fraction() {
        let cells = [cell(1, 40.0, -3.7, 600)];
        assert!(suggest_5gda(1, &cells, 0.0).is_err());
        assert!(suggest_5gda(1, &cells, 1.5).is_err());
    }

    #[test]
    fn required_mass_absorbs_rounding() {
        assert_eq!(required_mass(1000, 0.6), 600);
        assert_eq!(required_mass(10, 0.35), 4);
        assert_eq!(required_mass(0, 0.5), 0);
    }
}
