//! CSV ingestion.
//!
//! Unit file: `unit_id,household_id,domain_id[,weight],y_<name>...,x_2...x_P`
//! (the intercept `x_1` is implicit). Area file: `domain_id,N_i,z_1...z_P`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use super::{Population, SampleRecord, Unit};
use crate::error::{Error, Result};

/// Parsed unit file.
#[derive(Debug, Clone)]
pub struct UnitFile {
    pub records: Vec<SampleRecord>,
    pub variables: Vec<String>,
    pub has_weight: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaFile {
    pub domain_ids: Vec<u64>,
    pub sizes: Vec<usize>,
    pub z: Vec<Vec<f64>>,
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T> {
    field.trim().parse().map_err(|_| Error::invalid(format!("line {line}: cannot parse {what} from `{field}`")))
}

/// Opens `path`, reporting it on failure.
pub fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

pub fn read_unit_records(path: &Path) -> Result<UnitFile> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "unit_id" || names[1] != "household_id" || names[2] != "domain_id" {
        return Err(Error::invalid(format!("{}: header must start with unit_id,household_id,domain_id", path.display())));
    }
    let mut col = 3;
    let has_weight = names.get(3) == Some(&"weight");
    if has_weight {
        col += 1;
    }
    let mut y_cols = Vec::new();
    let mut variables = Vec::new();
    let mut x_cols = Vec::new();
    for (j, name) in names.iter().enumerate().skip(col) {
        if let Some(v) = name.strip_prefix("y_") {
            if !x_cols.is_empty() {
                return Err(Error::invalid("y_ columns must precede x_ columns"));
            }
            y_cols.push(j);
            variables.push(v.to_string());
        } else if let Some(idx) = name.strip_prefix("x_") {
            let expected = x_cols.len() + 2;
            if idx.parse::<usize>().ok() != Some(expected) {
                return Err(Error::invalid(format!("expected column x_{expected}, found {name}")));
            }
            x_cols.push(j);
        } else {
            return Err(Error::invalid(format!("unexpected column `{name}`")));
        }
    }
    if variables.is_empty() {
        return Err(Error::invalid("unit file has no y_ columns"));
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let weight = if has_weight { parse(&row[3], "weight", line)? } else { 1.0 };
        let y = y_cols.iter().map(|&j| parse(&row[j], "y", line)).collect::<Result<Vec<f64>>>()?;
        let mut x = Vec::with_capacity(x_cols.len() + 1);
        x.push(1.0);
        for &j in &x_cols {
            x.push(parse(&row[j], "x", line)?);
        }
        records.push(SampleRecord {
            unit_id: parse(&row[0], "unit_id", line)?,
            household_id: parse(&row[1], "household_id", line)?,
            domain_id: parse(&row[2], "domain_id", line)?,
            weight,
            y,
            x,
        });
    }
    Ok(UnitFile { records, variables, has_weight })
}

/// Loads a unit file as a population; weights, if present, are ignored.
/// Domains are indexed in increasing order of `domain_id`.
pub fn load_population_csv(path: &Path) -> Result<Population> {
    let file = read_unit_records(path)?;
    let labels: Vec<u64> = file.records.iter().map(|r| r.domain_id).collect::<BTreeSet<_>>().into_iter().collect();
    let units = file
        .records
        .into_iter()
        .map(|r| Unit {
            unit_id: r.unit_id,
            household_id: r.household_id,
            domain: labels.binary_search(&r.domain_id).expect("label collected above"),
            y: r.y,
            x: r.x,
        })
        .collect();
    Population::new(units, file.variables, labels)
}

pub fn read_area_file(path: &Path) -> Result<AreaFile> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "domain_id" || names[1] != "N_i" {
        return Err(Error::invalid(format!("{}: header must be domain_id,N_i,z_1...z_P", path.display())));
    }
    for (j, name) in names.iter().enumerate().skip(2) {
        if *name != format!("z_{}", j - 1) {
            return Err(Error::invalid(format!("expected column z_{}, found {name}", j - 1)));
        }
    }
    let mut out = AreaFile { domain_ids: Vec::new(), sizes: Vec::new(), z: Vec::new() };
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        out.domain_ids.push(parse(&row[0], "domain_id", line)?);
        out.sizes.push(parse(&row[1], "N_i", line)?);
        out.z.push((2..names.len()).map(|j| parse(&row[j], "z", line)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(out)
}

impl AreaFile {
    /// Reorders `z` to the population's domain order and checks sizes.
    pub fn align(&self, pop: &Population) -> Result<Vec<Vec<f64>>> {
        let sizes = pop.domain_sizes();
        let mut z = Vec::with_capacity(pop.domain_count());
        for (d, label) in pop.domain_labels().iter().enumerate() {
            let row = self
                .domain_ids
                .iter()
                .position(|id| id == label)
                .ok_or_else(|| Error::invalid(format!("area file lacks domain {label}")))?;
            if self.sizes[row] != sizes[d] {
                return Err(Error::invalid(format!(
                    "area file gives N_i = {} for domain {label}, population has {}",
                    self.sizes[row], sizes[d]
                )));
            }
            z.push(self.z[row].clone());
        }
        Ok(z)
    }
}

/// Writes the population in the unit-file layout (without weights).
pub fn write_population_csv(pop: &Population, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = vec!["unit_id".to_string(), "household_id".into(), "domain_id".into()];
    header.extend(pop.variables().iter().map(|v| format!("y_{v}")));
    header.extend((2..=pop.aux_dim()).map(|j| format!("x_{j}")));
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for u in pop.units() {
        let mut fields = vec![u.unit_id.to_string(), u.household_id.to_string(), pop.domain_labels()[u.domain].to_string()];
        fields.extend(u.y.iter().map(f64::to_string));
        fields.extend(u.x[1..].iter().map(f64::to_string));
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
