//! Monte Carlo environmental contours.
//!
//! For each direction u on a grid the classical contour level C(u) is the
//! empirical value-at-risk of the projections u'Vᵢ, and the buffered level
//! C̄(u) is the mean of the projections strictly above C(u). In the plane the
//! contour boundary is assembled by intersecting the supporting lines of
//! adjacent directions.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envdata::SampleMatrix;
use crate::error::{Error, Result};
use crate::risk::{self, RiskLevel};

/// Allowed deviation of ‖u‖ from 1.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Slack in the halfplane containment check of boundary points.
pub const HALFSPACE_SLACK: f64 = 1e-9;
/// Maximum residual of a boundary point against its two defining lines.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Adjacent directions with |sin(gap)| below this are treated as parallel.
pub const PARALLEL_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("unit vector needs a component"));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::config("direction", format!("norm is {norm}, expected 1")));
        }
        Ok(Self(components))
    }

    /// Scales a nonzero vector to unit length.
    pub fn normalized(components: &[f64]) -> Result<Self> {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::config("direction", "cannot normalize a zero or non-finite vector"));
        }
        Self::new(components.iter().map(|c| c / norm).collect())
    }

    pub fn from_angle(theta: f64) -> Self {
        Self(vec![theta.cos(), theta.sin()])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Polar angle in [0, 2π) of a planar direction.
    pub fn angle(&self) -> f64 {
        let theta = self.0[1].atan2(self.0[0]);
        if theta < 0.0 {
            theta + TAU
        } else {
            theta
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    dim: usize,
    directions: Vec<UnitVector>,
}

impl DirectionGrid {
    /// K planar directions at angles 2πj/K.
    pub fn uniform_planar(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("directions", "must be at least 1"));
        }
        let directions = (0..count)
            .map(|j| UnitVector::from_angle(TAU * j as f64 / count as f64))
            .collect();
        Ok(Self { dim: 2, directions })
    }

    pub fn from_directions(directions: Vec<UnitVector>) -> Result<Self> {
        let dim = directions
            .first()
            .ok_or(Error::EmptyInput("direction grid needs a direction"))?
            .dim();
        if let Some(bad) = directions.iter().find(|u| u.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Self { dim, directions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[UnitVector] {
        &self.directions
    }
}

fn check_dim(samples: &SampleMatrix, dim: usize) -> Result<()> {
    if samples.dim() != dim {
        return Err(Error::Dimension {
            expected: samples.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// Classical contour level C(u): empirical VaR of u'V.
pub fn c_of_u(samples: &SampleMatrix, u: &UnitVector, level: RiskLevel) -> Result<f64> {
    let mut projections = samples.project(u.components())?;
    Ok(risk::var_in_place(&mut projections, level))
}

/// Buffered contour level C̄(u) = mean of u'V over u'V > C(u).
pub fn cbar_of_u(samples: &SampleMatrix, u: &UnitVector, level: RiskLevel) -> Result<f64> {
    levels_for(samples, u, level).and_then(|(_, cbar)| cbar)
}

fn levels_for(
    samples: &SampleMatrix,
    u: &UnitVector,
    level: RiskLevel,
) -> Result<(f64, Result<f64>)> {
    let mut projections = samples.project(u.components())?;
    let c = risk::var_in_place(&mut projections, level);
    // After selection only the first m entries can exceed c.
    let m = level.tail_count(projections.len());
    Ok((c, risk::tail_mean(&projections[..m], c)))
}

/// Per-direction contour levels estimated from one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourTable {
    pub level: RiskLevel,
    pub grid: DirectionGrid,
    pub c_values: Vec<f64>,
    pub cbar_values: Vec<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourKind {
    Classical,
    Buffered,
}

/// Computes C(u) and C̄(u) for every grid direction.
pub fn build_table(
    samples: &SampleMatrix,
    grid: &DirectionGrid,
    level: RiskLevel,
) -> Result<ContourTable> {
    check_dim(samples, grid.dim())?;
    let mut c_values = Vec::with_capacity(grid.len());
    let mut cbar_values = Vec::with_capacity(grid.len());
    for (j, u) in grid.directions().iter().enumerate() {
        let (c, cbar) = levels_for(samples, u, level).map_err(|e| Error::at_direction(j, e))?;
        let cbar = cbar.map_err(|e| Error::at_direction(j, e))?;
        c_values.push(c);
        cbar_values.push(cbar);
    }
    Ok(ContourTable {
        level,
        grid: grid.clone(),
        c_values,
        cbar_values,
        sample_count: samples.len(),
    })
}

impl ContourTable {
    pub fn levels(&self, kind: ContourKind) -> &[f64] {
        match kind {
            ContourKind::Classical => &self.c_values,
            ContourKind::Buffered => &self.cbar_values,
        }
    }

    fn header(&self) -> String {
        if self.grid.dim() == 2 {
            "theta,ux,uy,c,cbar".to_string()
        } else {
            let mut cols: Vec<String> = (1..=self.grid.dim()).map(|i| format!("u{i}")).collect();
            cols.push("c".into());
            cols.push("cbar".into());
            cols.join(",")
        }
    }

    /// Writes `theta,ux,uy,c,cbar` (planar) or `u1..un,c,cbar` rows.
    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut buf = ryu::Buffer::new();
        writeln!(out, "{}", self.header())?;
        for (j, u) in self.grid.directions().iter().enumerate() {
            let mut cells = Vec::with_capacity(u.dim() + 3);
            if u.dim() == 2 {
                cells.push(buf.format_finite(u.angle()).to_string());
            }
            cells.extend(u.components().iter().map(|c| buf.format_finite(*c).to_string()));
            cells.push(buf.format_finite(self.c_values[j]).to_string());
            cells.push(buf.format_finite(self.cbar_values[j]).to_string());
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), |w| self.write_csv_to(w))
    }

    /// Reads a table written by [`ContourTable::write_csv`]. The level and
    /// sample count are not part of the file and must be supplied.
    pub fn read_csv(path: impl AsRef<Path>, level: RiskLevel, sample_count: usize) -> Result<Self> {
        let path = path.as_ref();
        let (header, rows) = read_numeric_csv(path)?;
        let cols = header.len();
        if cols < 3 {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "contour table needs direction, c and cbar columns".into(),
            });
        }
        let planar = header[0] == "theta";
        let first_component = usize::from(planar);
        let mut directions = Vec::with_capacity(rows.len());
        let mut c_values = Vec::with_capacity(rows.len());
        let mut cbar_values = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let u = UnitVector::new(row[first_component..cols - 2].to_vec()).map_err(|e| {
                Error::Parse {
                    row: i + 2,
                    column: first_component + 1,
                    message: e.to_string(),
                }
            })?;
            directions.push(u);
            c_values.push(row[cols - 2]);
            cbar_values.push(row[cols - 1]);
        }
        Ok(Self {
            level,
            grid: DirectionGrid::from_directions(directions)?,
            c_values,
            cbar_values,
            sample_count,
        })
    }
}

/// Planar contour boundary with per-point consistency flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourBoundary {
    pub points: Vec<[f64; 2]>,
    /// `true` when the point lies inside every supporting halfplane.
    pub valid: Vec<bool>,
}

impl ContourBoundary {
    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut buf = ryu::Buffer::new();
        writeln!(out, "x,y,valid")?;
        for (p, ok) in self.points.iter().zip(&self.valid) {
            let x = buf.format_finite(p[0]).to_string();
            let y = buf.format_finite(p[1]).to_string();
            writeln!(out, "{x},{y},{}", u8::from(*ok))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), |w| self.write_csv_to(w))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (header, rows) = read_numeric_csv(path.as_ref())?;
        if header != ["x", "y", "valid"] {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "expected header x,y,valid".into(),
            });
        }
        Ok(Self {
            points: rows.iter().map(|r| [r[0], r[1]]).collect(),
            valid: rows.iter().map(|r| r[2] != 0.0).collect(),
        })
    }
}

/// Intersects the supporting lines u_j'p = L_j and u_{j+1}'p = L_{j+1}
/// (indices mod K) and flags points that violate any other halfplane
/// u_k'p ≤ L_k. Inconsistent regions are reported, never repaired.
pub fn boundary(table: &ContourTable, kind: ContourKind) -> Result<ContourBoundary> {
    if table.grid.dim() != 2 {
        return Err(Error::Geometry(format!(
            "boundary assembly needs planar directions, got dimension {}",
            table.grid.dim()
        )));
    }
    let k = table.grid.len();
    if k < 3 {
        return Err(Error::Geometry(format!(
            "boundary assembly needs at least 3 directions, got {k}"
        )));
    }
    let dirs = table.grid.directions();
    let levels = table.levels(kind);

    let mut points = Vec::with_capacity(k);
    for j in 0..k {
        let next = (j + 1) % k;
        let (a, b) = (dirs[j].components(), dirs[next].components());
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < PARALLEL_GUARD {
            return Err(Error::Geometry(format!(
                "directions {j} and {next} are parallel"
            )));
        }
        let (la, lb) = (levels[j], levels[next]);
        let p = [(la * b[1] - lb * a[1]) / det, (a[0] * lb - b[0] * la) / det];
        let residual = (dirs[j].dot(&p) - la).abs().max((dirs[next].dot(&p) - lb).abs());
        if residual > RESIDUAL_TOLERANCE * la.abs().max(lb.abs()).max(1.0) {
            return Err(Error::Numeric(format!(
                "boundary point {j} has residual {residual:e}"
            )));
        }
        points.push(p);
    }

    let valid = points
        .iter()
        .map(|p| {
            dirs.iter()
                .zip(levels)
                .all(|(u, &l)| u.dot(p) <= l + HALFSPACE_SLACK)
        })
        .collect();
    Ok(ContourBoundary { points, valid })
}

/// Out-of-sample exceedance of each classical halfspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceReport {
    pub alpha: f64,
    pub holdout_count: usize,
    /// p̂ⱼ = fraction of holdout samples with uⱼ'V > C(uⱼ).
    pub exceedance: Vec<f64>,
    pub max_abs_deviation: f64,
}

impl ExceedanceReport {
    /// Fraction of directions whose exceedance lies within `alpha ± tolerance`.
    pub fn fraction_within(&self, tolerance: f64) -> f64 {
        let hits = self
            .exceedance
            .iter()
            .filter(|p| (*p - self.alpha).abs() <= tolerance)
            .count();
        hits as f64 / self.exceedance.len() as f64
    }
}

pub fn validate_exceedance(table: &ContourTable, holdout: &SampleMatrix) -> Result<ExceedanceReport> {
    check_dim(holdout, table.grid.dim())?;
    let n = holdout.len() as f64;
    let alpha = table.level.alpha();
    let mut exceedance = Vec::with_capacity(table.grid.len());
    for (u, &c) in table.grid.directions().iter().zip(&table.c_values) {
        let hits = holdout.rows().filter(|v| u.dot(v) > c).count();
        exceedance.push(hits as f64 / n);
    }
    let max_abs_deviation = exceedance
        .iter()
        .map(|p| (p - alpha).abs())
        .fold(0.0, f64::max);
    Ok(ExceedanceReport {
        alpha,
        holdout_count: holdout.len(),
        exceedance,
        max_abs_deviation,
    })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Header plus numeric rows of a rectangular CSV file.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 2,
            column: 0,
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 2,
                    column: j + 1,
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn level(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn constant_table(k: usize, l: f64) -> ContourTable {
        ContourTable {
            level: level(0.1),
            grid: DirectionGrid::uniform_planar(k).unwrap(),
            c_values: vec![l; k],
            cbar_values: vec![l; k],
            sample_count: 1,
        }
    }

    fn point_mass(v: [f64; 2], n: usize) -> SampleMatrix {
        SampleMatrix::from_rows(&vec![v.to_vec(); n]).unwrap()
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(vec![1.0, 0.0]).is_ok());
        assert!(UnitVector::new(vec![1.0, 1e-5]).is_err());
        assert!(UnitVector::normalized(&[0.0, 0.0]).is_err());
        let u = UnitVector::normalized(&[3.0, 4.0]).unwrap();
        assert!((u.components()[0] - 0.6).abs() < 1e-15);
        assert!((UnitVector::from_angle(1.5 * PI).angle() - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn point_mass_levels() {
        let samples = point_mass([2.0, -1.0], 20);
        let grid = DirectionGrid::uniform_planar(3).unwrap();
        for u in grid.directions() {
            assert_eq!(c_of_u(&samples, u, level(0.3)).unwrap(), u.dot(&[2.0, -1.0]));
            assert!(matches!(
                cbar_of_u(&samples, u, level(0.3)),
                Err(Error::EmptyTail { .. })
            ));
        }
        let err = build_table(&samples, &grid, level(0.3)).unwrap_err();
        assert!(matches!(err, Error::AtDirection { index: 0, .. }));
        assert!(matches!(err.root(), Error::EmptyTail { .. }));
    }

    #[test]
    fn projection_identity_on_first_axis() {
        let rows: Vec<Vec<f64>> = (1..=10).map(|i| vec![f64::from(i), f64::from(i * i)]).collect();
        let samples = SampleMatrix::from_rows(&rows).unwrap();
        let u = UnitVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(c_of_u(&samples, &u, level(0.2)).unwrap(), 8.0);
        assert_eq!(cbar_of_u(&samples, &u, level(0.2)).unwrap(), 9.5);
    }

    #[test]
    fn dimension_mismatch() {
        let samples = point_mass([0.0, 0.0], 3);
        let grid =
            DirectionGrid::from_directions(vec![UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap()])
                .unwrap();
        assert!(matches!(
            build_table(&samples, &grid, level(0.1)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn square_boundary() {
        let b = boundary(&constant_table(4, 1.0), ContourKind::Classical).unwrap();
        let expect = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
        for (p, e) in b.points.iter().zip(expect) {
            assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12, "{p:?}");
        }
        assert!(b.valid.iter().all(|v| *v));
    }

    #[test]
    fn regular_polygon_circumradius() {
        for k in [3, 5, 12, 360] {
            let b = boundary(&constant_table(k, 2.5), ContourKind::Buffered).unwrap();
            let r = 2.5 / (PI / k as f64).cos();
            for p in &b.points {
                assert!((p[0].hypot(p[1]) - r).abs() < 1e-9);
            }
            assert_eq!(b.invalid_count(), 0);
        }
    }

    #[test]
    fn boundary_rejects_small_or_parallel_grids() {
        assert!(matches!(
            boundary(&constant_table(2, 1.0), ContourKind::Classical),
            Err(Error::Geometry(_))
        ));
        let mut t = constant_table(3, 1.0);
        t.grid = DirectionGrid::from_directions(vec![
            UnitVector::from_angle(0.0),
            UnitVector::from_angle(0.0),
            UnitVector::from_angle(2.0),
        ])
        .unwrap();
        assert!(matches!(boundary(&t, ContourKind::Classical), Err(Error::Geometry(_))));
    }

    #[test]
    fn inconsistent_levels_are_flagged_not_repaired() {
        let mut t = constant_table(8, 1.0);
        t.c_values[3] = 3.0;
        let b = boundary(&t, ContourKind::Classical).unwrap();
        assert!(b.invalid_count() > 0);
        assert!((b.points[3][0] * t.grid.directions()[3].components()[0]
            + b.points[3][1] * t.grid.directions()[3].components()[1]
            - 3.0)
            .abs()
            < 1e-9);
    }

    #[test]
    fn in_sample_exceedance_never_exceeds_alpha() {
        let rows: Vec<Vec<f64>> = (0..37)
            .map(|i| {
                let t = f64::from(i);
                vec![(t * 0.77).sin() * 3.0, (t * 1.3).cos() + t * 0.01]
            })
            .collect();
        let samples = SampleMatrix::from_rows(&rows).unwrap();
        let grid = DirectionGrid::uniform_planar(24).unwrap();
        let table = build_table(&samples, &grid, level(0.15)).unwrap();
        let report = validate_exceedance(&table, &samples).unwrap();
        assert!(report.exceedance.iter().all(|p| *p <= 0.15));
        for (c, cbar) in table.c_values.iter().zip(&table.cbar_values) {
            assert!(cbar > c);
        }
    }

    #[test]
    fn point_mass_holdout_has_zero_exceedance() {
        let mut t = constant_table(6, 0.0);
        t.c_values = t.grid.directions().iter().map(|u| u.dot(&[1.0, 1.0])).collect();
        let report = validate_exceedance(&t, &point_mass([1.0, 1.0], 10)).unwrap();
        assert!(report.exceedance.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = constant_table(7, 1.25);
        t.cbar_values[2] = 1.9;
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        let back = ContourTable::read_csv(&path, t.level, t.sample_count).unwrap();
        assert_eq!(back, t);

        let b = boundary(&t, ContourKind::Buffered).unwrap();
        let path = dir.path().join("b.csv");
        b.write_csv(&path).unwrap();
        assert_eq!(ContourBoundary::read_csv(&path).unwrap(), b);
    }
}
