//! Readers for phenotype groups and marker datasets.
//!
//! Schemas:
//!
//! * groups: header `group,phenotype`, one observation per row, `group` in 1..=4;
//! * marker map: header `marker,position_cM`, positions strictly increasing;
//! * genotypes: header `id,<marker names>`, cells `1` (homozygote),
//!   `0` (heterozygote) or `NA`;
//! * phenotypes: header `id,value`, `NA` for a missing value.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::PhenotypeGroups;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(line, e.to_string())
}

/// Header of `rdr`, checked against `expected` (case-insensitive).
fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<csv::StringRecord> {
    let header = rdr.headers().map_err(csv_error)?.clone();
    let got: Vec<&str> = header.iter().collect();
    let ok = got.len() >= expected.len()
        && expected
            .iter()
            .zip(&got)
            .all(|(e, g)| e.eq_ignore_ascii_case(g.trim_start_matches('\u{feff}')));
    if !ok {
        return Err(Error::parse(1, format!("expected header starting `{}`, found `{}`", expected.join(","), got.join(","))));
    }
    Ok(header)
}

fn parse_f64(cell: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what} `{cell}` is not finite")));
    }
    Ok(v)
}

fn is_missing(cell: &str) -> bool {
    cell.eq_ignore_ascii_case("NA")
}

/// Parses a groups CSV.
pub fn parse_groups_csv(text: &str) -> Result<PhenotypeGroups> {
    let mut rdr = reader(text);
    let header = check_header(&mut rdr, &["group", "phenotype"])?;
    if header.len() != 2 {
        return Err(Error::parse(1, "groups file must have exactly two columns"));
    }
    let mut groups: [Vec<f64>; 4] = Default::default();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let g: usize = rec[0]
            .parse()
            .ok()
            .filter(|g| (1..=4).contains(g))
            .ok_or_else(|| Error::parse(line, format!("group `{}` not in 1..4", &rec[0])))?;
        groups[g - 1].push(parse_f64(&rec[1], line, "phenotype")?);
    }
    let [g1, g2, g3, g4] = groups;
    PhenotypeGroups::new(g1, g2, g3, g4)
}

pub fn read_groups(path: &Path) -> Result<PhenotypeGroups> {
    parse_groups_csv(&fs::read_to_string(path)?)
}

/// Writes groups in the format read by [`parse_groups_csv`].
pub fn groups_to_csv(groups: &PhenotypeGroups) -> String {
    let mut out = String::from("group,phenotype\n");
    for (i, g) in groups.groups().iter().enumerate() {
        for y in g {
            out.push_str(&format!("{},{y}\n", i + 1));
        }
    }
    out
}

/// A marker and its map position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub position_cm: f64,
}

/// Parses a marker map; positions must increase strictly.
pub fn parse_map_csv(text: &str) -> Result<Vec<Marker>> {
    let mut rdr = reader(text);
    let header = check_header(&mut rdr, &["marker", "position_cM"])?;
    if header.len() != 2 {
        return Err(Error::parse(1, "map file must have exactly two columns"));
    }
    let mut markers: Vec<Marker> = Vec::new();
    let mut names = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(Error::parse(line, "empty marker name"));
        }
        if !names.insert(name.clone()) {
            return Err(Error::Validation(format!("marker `{name}` listed twice (line {line})")));
        }
        let position_cm = parse_f64(&rec[1], line, "position")?;
        if let Some(prev) = markers.last() {
            if position_cm <= prev.position_cm {
                return Err(Error::Validation(format!(
                    "marker `{name}` at {position_cm} cM does not follow `{}` at {} cM (line {line})",
                    prev.name, prev.position_cm
                )));
            }
        }
        markers.push(Marker { name, position_cm });
    }
    if markers.len() < 2 {
        return Err(Error::Validation("map needs at least two markers".into()));
    }
    Ok(markers)
}

/// Genotype calls, one row per individual, columns in header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenotypeTable {
    pub markers: Vec<String>,
    pub ids: Vec<String>,
    /// `Some(true)` homozygote, `Some(false)` heterozygote, `None` missing.
    pub calls: Vec<Vec<Option<bool>>>,
}

pub fn parse_geno_csv(text: &str) -> Result<GenotypeTable> {
    let mut rdr = reader(text);
    let header = check_header(&mut rdr, &["id"])?;
    let markers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if markers.is_empty() {
        return Err(Error::parse(1, "genotype file has no marker columns"));
    }
    let mut ids = Vec::new();
    let mut calls = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("individual `{id}` listed twice (line {line})")));
        }
        let row = rec
            .iter()
            .skip(1)
            .zip(&markers)
            .map(|(cell, m)| match cell {
                "1" => Ok(Some(true)),
                "0" => Ok(Some(false)),
                c if is_missing(c) => Ok(None),
                c => Err(Error::parse(
                    line,
                    format!("genotype `{c}` for individual `{id}`, marker `{m}` not in {{0, 1, NA}}"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        calls.push(row);
    }
    Ok(GenotypeTable { markers, ids, calls })
}

/// Phenotype values by id; `NA` entries are kept as `None`.
pub fn parse_pheno_csv(text: &str) -> Result<Vec<(String, Option<f64>)>> {
    let mut rdr = reader(text);
    let header = check_header(&mut rdr, &["id", "value"])?;
    if header.len() != 2 {
        return Err(Error::parse(1, "phenotype file must have exactly two columns"));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("phenotype for `{id}` listed twice (line {line})")));
        }
        let v = if is_missing(&rec[1]) {
            None
        } else {
            Some(parse_f64(&rec[1], line, "phenotype")?)
        };
        out.push((id, v));
    }
    Ok(out)
}

/// Individuals with a phenotype and their calls at every mapped marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDataset {
    pub markers: Vec<Marker>,
    pub ids: Vec<String>,
    /// Calls per individual, columns in map order.
    pub genotypes: Vec<Vec<Option<bool>>>,
    pub phenotypes: Vec<f64>,
    /// Genotyped individuals dropped for lack of a phenotype.
    pub dropped_without_phenotype: usize,
}

impl ScanDataset {
    /// Joins the three tables. The genotype columns must be exactly the
    /// mapped markers (in any order).
    pub fn from_parts(
        markers: Vec<Marker>,
        geno: GenotypeTable,
        pheno: Vec<(String, Option<f64>)>,
    ) -> Result<Self> {
        let col: HashMap<&str, usize> = geno.markers.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        if col.len() != geno.markers.len() {
            return Err(Error::Validation("genotype header repeats a marker".into()));
        }
        let order = markers
            .iter()
            .map(|m| {
                col.get(m.name.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("marker `{}` has no genotype column", m.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        if geno.markers.len() != markers.len() {
            let mapped: HashSet<&str> = markers.iter().map(|m| m.name.as_str()).collect();
            let extra: Vec<&str> = geno.markers.iter().map(String::as_str).filter(|m| !mapped.contains(m)).collect();
            return Err(Error::Validation(format!("genotype columns not in the map: {}", extra.join(", "))));
        }
        let values: HashMap<&str, Option<f64>> = pheno.iter().map(|(id, v)| (id.as_str(), *v)).collect();
        let geno_ids: HashSet<&str> = geno.ids.iter().map(String::as_str).collect();
        let unmatched = pheno.iter().filter(|(id, _)| !geno_ids.contains(id.as_str())).count();
        if unmatched > 0 {
            log::warn!("{unmatched} phenotyped individuals have no genotypes and are ignored");
        }
        let mut ds = ScanDataset {
            markers,
            ids: Vec::new(),
            genotypes: Vec::new(),
            phenotypes: Vec::new(),
            dropped_without_phenotype: 0,
        };
        for (id, row) in geno.ids.iter().zip(&geno.calls) {
            match values.get(id.as_str()) {
                Some(Some(y)) => {
                    ds.ids.push(id.clone());
                    ds.genotypes.push(order.iter().map(|&j| row[j]).collect());
                    ds.phenotypes.push(*y);
                }
                _ => ds.dropped_without_phenotype += 1,
            }
        }
        if ds.dropped_without_phenotype > 0 {
            log::warn!("{} genotyped individuals lack a phenotype and are dropped", ds.dropped_without_phenotype);
        }
        Ok(ds)
    }

    pub fn n_intervals(&self) -> usize {
        self.markers.len() - 1
    }
}

/// Reads and joins the map, genotype and phenotype files.
pub fn load_dataset(map_path: &Path, geno_path: &Path, pheno_path: &Path) -> Result<ScanDataset> {
    let markers = parse_map_csv(&fs::read_to_string(map_path)?)?;
    let geno = parse_geno_csv(&fs::read_to_string(geno_path)?)?;
    let pheno = parse_pheno_csv(&fs::read_to_string(pheno_path)?)?;
    ScanDataset::from_parts(markers, geno, pheno)
}

/// Files in the three-table layout produced by [`convert_rqtl_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertedTables {
    pub map: String,
    pub geno: String,
    pub pheno: String,
}

/// Converts a backcross in the comma-separated layout of R/qtl (`read.cross`
/// format "csv") to the three-table layout. Row 1 holds column names, row 2
/// chromosomes (blank for phenotype columns), row 3 positions; genotype
/// cells are `A`/`AA` (homozygote), `H`/`AB` (heterozygote) or `-`/`NA`.
/// Only markers on `chromosome` are kept.
pub fn convert_rqtl_csv(text: &str, phenotype: &str, chromosome: &str) -> Result<ConvertedTables> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>().map_err(csv_error)?;
    if rows.len() < 3 {
        return Err(Error::parse(rows.len(), "expected name, chromosome and position rows"));
    }
    let (names, chrom, pos) = (&rows[0], &rows[1], &rows[2]);
    let pheno_col = names
        .iter()
        .position(|n| n == phenotype)
        .ok_or_else(|| Error::parse(1, format!("no column `{phenotype}`")))?;
    let id_col = names.iter().position(|n| n.eq_ignore_ascii_case("id"));
    let marker_cols: Vec<usize> = (0..names.len()).filter(|&j| chrom.get(j) == Some(chromosome)).collect();
    if marker_cols.len() < 2 {
        return Err(Error::Validation(format!("chromosome `{chromosome}` has fewer than two markers")));
    }
    let mut map = String::from("marker,position_cM\n");
    for &j in &marker_cols {
        let p = pos.get(j).unwrap_or("");
        parse_f64(p, 3, "position")?;
        map.push_str(&format!("{},{p}\n", &names[j]));
    }
    let mut geno = String::from("id");
    for &j in &marker_cols {
        geno.push(',');
        geno.push_str(&names[j]);
    }
    geno.push('\n');
    let mut pheno = String::from("id,value\n");
    for (i, row) in rows.iter().enumerate().skip(3) {
        let line = i + 1;
        let id = match id_col {
            Some(c) => row.get(c).unwrap_or("").to_string(),
            None => format!("ind{}", i - 2),
        };
        geno.push_str(&id);
        for &j in &marker_cols {
            let code = match row.get(j).unwrap_or("") {
                "A" | "AA" => "1",
                "H" | "AB" => "0",
                "-" | "NA" | "" => "NA",
                c => return Err(Error::parse(line, format!("genotype code `{c}` not recognised"))),
            };
            geno.push(',');
            geno.push_str(code);
        }
        geno.push('\n');
        let y = row.get(pheno_col).unwrap_or("");
        let y = if y == "-" || y.is_empty() { "NA" } else { y };
        pheno.push_str(&format!("{id},{y}\n"));
    }
    Ok(ConvertedTables { map, geno, pheno })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_round_trip() {
        let g = parse_groups_csv("group,phenotype\n1,0.5\n4,-1\n2,3e-2\n1,2\n").unwrap();
        assert_eq!(g.sizes(), [2, 1, 0, 1]);
        assert_eq!(parse_groups_csv(&groups_to_csv(&g)).unwrap(), g);
    }

    #[test]
    fn groups_errors_carry_lines() {
        for (text, line) in [
            ("group,phenotype\n1,0.5\n5,1\n", 3),
            ("group,phenotype\n1,0.5\n2,abc\n", 3),
            ("group,phenotype\n1,inf\n", 2),
            ("grp,phenotype\n1,1\n", 1),
        ] {
            match parse_groups_csv(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(parse_groups_csv("group,phenotype\n1,2,3\n").is_err());
    }

    fn small() -> ScanDataset {
        let map = parse_map_csv("marker,position_cM\nM1,0\nM2,5\n").unwrap();
        let geno = parse_geno_csv("id,M2,M1\na,1,1\nb,0,1\nc,NA,0\nd,0,0\ne,1,1\n").unwrap();
        let pheno = parse_pheno_csv("id,value\na,1.0\nb,2.0\nc,3.0\nd,4.0\ne,NA\n").unwrap();
        ScanDataset::from_parts(map, geno, pheno).unwrap()
    }

    #[test]
    fn dataset_joins_and_reorders() {
        let ds = small();
        assert_eq!(ds.n_intervals(), 1);
        assert_eq!(ds.ids, ["a", "b", "c", "d"]);
        assert_eq!(ds.dropped_without_phenotype, 1);
        assert_eq!(ds.genotypes[1], vec![Some(true), Some(false)]);
        assert_eq!(ds.genotypes[2], vec![Some(false), None]);
    }

    #[test]
    fn geno_cell_errors_name_row_and_column() {
        let err = parse_geno_csv("id,M1,M2\na,1,0\nb,2,0\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(msg.contains("`b`") && msg.contains("`M1`"), "{msg}");
    }

    #[test]
    fn map_validation() {
        assert!(matches!(
            parse_map_csv("marker,position_cM\nA,0\nB,0\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_map_csv("marker,position_cM\nA,0\nA,1\n"),
            Err(Error::Validation(_))
        ));
        assert!(parse_map_csv("marker,position_cM\nA,0\n").is_err());
    }

    #[test]
    fn unmapped_columns_are_rejected() {
        let map = parse_map_csv("marker,position_cM\nM1,0\nM2,5\n").unwrap();
        let geno = parse_geno_csv("id,M1,M2,M3\na,1,1,1\n").unwrap();
        assert!(ScanDataset::from_parts(map.clone(), geno, vec![]).is_err());
        let geno = parse_geno_csv("id,M1\na,1\n").unwrap();
        assert!(ScanDataset::from_parts(map, geno, vec![]).is_err());
    }

    #[test]
    fn rqtl_conversion() {
        let text = "id,trait,m1,m2,m3\n,,1,1,2\n,,0,10.5,0\n1,0.3,A,H,A\n2,-,H,-,H\n";
        let t = convert_rqtl_csv(text, "trait", "1").unwrap();
        assert_eq!(t.map, "marker,position_cM\nm1,0\nm2,10.5\n");
        assert_eq!(t.geno, "id,m1,m2\n1,1,0\n2,0,NA\n");
        assert_eq!(t.pheno, "id,value\n1,0.3\n2,NA\n");
        let ds = ScanDataset::from_parts(
            parse_map_csv(&t.map).unwrap(),
            parse_geno_csv(&t.geno).unwrap(),
            parse_pheno_csv(&t.pheno).unwrap(),
        )
        .unwrap();
        assert_eq!(ds.ids, ["1"]);
        assert!(convert_rqtl_csv(text, "trait", "2").is_err());
    }
}
